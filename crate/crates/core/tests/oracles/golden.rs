//! Hand-labelled validator cases. Each sentence was checked by hand against
//! the variant rules; invalid ones break exactly one rule.
//!
//! Core entities are Natalia, April and May; the only core number is 48.

use toolgap_core::corpus::Variant;
use toolgap_core::distractor::validate_sentence;

pub struct Case {
    pub variant: Variant,
    pub sentence: &'static str,
    pub expected: &'static [&'static str],
}

const fn case(variant: Variant, sentence: &'static str, expected: &'static [&'static str]) -> Case {
    Case {
        variant,
        sentence,
        expected,
    }
}

pub const CORE_WORDS: [&str; 3] = ["Natalia", "April", "May"];
pub const CORE_NUMS: [&str; 1] = ["48"];

use Variant::{Hu, Ped, Sp, Tb};

pub const GOLDEN: [Case; 40] = [
    case(Tb, "Hair clips come in many colors and shapes.", &[]),
    case(Tb, "Craft fairs often attract families on weekends.", &[]),
    case(Tb, "Some shoppers prefer handmade accessories over factory goods.", &[]),
    case(Tb, "Friends often trade small gifts at school.", &[]),
    case(Tb, "Spring markets are popular in small towns.", &[]),
    case(Tb, "Natalia enjoys bright colors.", &["TB: mentions core entity 'Natalia'"]),
    case(Tb, "The store sold clips to each visitor.", &["TB: math strategy word 'each'"]),
    case(Tb, "A different shop sells ribbons.", &["TB: difference marker 'different'"]),
    case(Tb, "Clips are reportedly popular with teenagers.", &["TB: hedging marker 'reportedly'"]),
    case(Tb, "Ribbons come in three widths.", &["TB: contains number word"]),
    case(Ped, "Another student sold bracelets at a fair.", &[]),
    case(Ped, "A shop elsewhere stocks only buttons.", &[]),
    case(Ped, "Someone else organized a bake sale.", &[]),
    case(Ped, "In a different school, pupils collected stamps.", &[]),
    case(Ped, "An unrelated club met to plan a picnic.", &[]),
    case(Ped, "Her cousin painted pottery last summer.", &["PED: missing difference marker"]),
    case(Ped, "Another girl might have sold hats.", &["PED: hedging marker 'might'"]),
    case(Ped, "A nearby vendor sold 15 scarves.", &["PED: contains digit"]),
    case(Ped, "A separate team built two kites.", &["PED: contains number word"]),
    case(Ped, "Elsewhere, a seller possibly closed early.", &["PED: hedging marker 'possibly'"]),
    case(Hu, "Reportedly, clip sales were strong that spring.", &[]),
    case(Hu, "Some say the fair drew large crowds.", &[]),
    case(Hu, "It is said that the shop restocked quickly.", &[]),
    case(Hu, "Perhaps the weather helped sales.", &[]),
    case(Hu, "The figures are not confirmed by the store.", &[]),
    case(Hu, "The market was busy on Saturday.", &["HU: missing hedging marker"]),
    case(Hu, "Possibly another seller joined.", &["HU: difference marker 'another'"]),
    case(Hu, "Reportedly the stall earned 30 dollars.", &["HU: contains digit"]),
    case(Hu, "Perhaps the correct answer is obvious.", &["HU: asserts answer 'correct answer'"]),
    case(Hu, "Possibly option C fits best.", &["HU: asserts answer 'option X'"]),
    case(Sp, "The number 48 appears on the shop sign.", &[]),
    case(Sp, "Natalia wore a red scarf to the fair.", &[]),
    case(Sp, "The stall had 48 hooks on its wall.", &[]),
    case(Sp, "Clip colors were blue and green.", &[]),
    case(Sp, "Customers paid with cash at the counter.", &[]),
    case(Sp, "The stall opened at 9 each morning.", &["SP: new number '9'"]),
    case(Sp, "Roughly 48 people walked by.", &["SP: approximation word 'roughly'"]),
    case(Sp, "The owner liked to add ribbons to displays.", &["SP: solving hint 'add'"]),
    case(Sp, "Prices were reportedly fair.", &["SP: hedging marker 'reportedly'"]),
    case(Sp, "A separate booth sold 48 pins.", &["SP: difference marker 'separate'"]),
];

/// Runs the validator over the golden set. Returns the number of cases
/// checked, or every disagreement.
pub fn check_golden() -> Result<usize, String> {
    let words: Vec<String> = CORE_WORDS.iter().map(|s| s.to_string()).collect();
    let nums: Vec<String> = CORE_NUMS.iter().map(|s| s.to_string()).collect();
    let mut errors = Vec::new();
    for c in &GOLDEN {
        let got = validate_sentence(c.sentence, c.variant, &words, &nums);
        if got != c.expected {
            errors.push(format!("{} {:?}: got {got:?}, want {:?}", c.variant, c.sentence, c.expected));
        }
    }
    if errors.is_empty() {
        Ok(GOLDEN.len())
    } else {
        Err(errors.join("\n"))
    }
}
