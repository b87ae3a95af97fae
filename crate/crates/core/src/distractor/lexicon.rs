//! Marker and forbidden-word lists, exactly as enumerated in the bundled
//! generation prompts. Several lists differ slightly between variants, so
//! each variant keeps its own copy.

use crate::corpus::Variant;

/// Difference markers forbidden in TB, HU and SP sentences.
pub const DIFFERENCE_FORBIDDEN: &[&str] =
    &["another", "elsewhere", "different", "nearby", "unrelated", "separate", "yesterday"];

/// Difference markers of which every PED sentence needs one.
pub const PED_REQUIRED: &[&str] = &[
    "another",
    "elsewhere",
    "different",
    "nearby",
    "unrelated",
    "separate",
    "in a different",
    "someone else",
    "not this case",
];

/// Hedging markers of which every HU sentence needs one.
pub const HU_REQUIRED: &[&str] = &[
    "reportedly",
    "claimed",
    "it is said",
    "some say",
    "might",
    "possibly",
    "perhaps",
    "around",
    "about",
    "likely",
    "unverified",
    "not confirmed",
];

pub const TB_HEDGING: &[&str] = &["reportedly", "claimed", "might", "possibly", "about", "around", "likely", "unverified"];
pub const PED_HEDGING: &[&str] = &["reportedly", "claimed", "might", "possibly", "about", "around", "likely"];
pub const SP_HEDGING: &[&str] = &["reportedly", "claimed", "might", "possibly", "about", "around", "likely", "unverified"];

/// Approximation words SP may not use alongside numbers.
pub const SP_APPROXIMATION: &[&str] = &["about", "around", "roughly", "approximately"];

pub const TB_MATH: &[&str] = &[
    "multiply", "divide", "sum", "total", "fraction", "percent", "per", "each", "equation", "formula", "calculate",
    "compute",
];

pub const SP_SOLVING: &[&str] = &[
    "multiply", "divide", "add", "subtract", "compute", "calculate", "equation", "formula",
];

/// Phrases asserting an answer, forbidden in HU sentences.
pub const HU_ANSWER: &[&str] = &["the answer is", "correct answer", "choose option"];

/// Sentence openers that are not taken as proper nouns.
pub const OPENERS: &[&str] = &[
    "a", "after", "all", "an", "and", "as", "at", "before", "but", "by", "during", "each", "every", "for", "from",
    "he", "her", "his", "how", "i", "if", "in", "it", "its", "many", "my", "of", "on", "one", "our", "she", "so",
    "some", "that", "the", "their", "then", "there", "these", "they", "this", "those", "to", "twice", "we", "what",
    "when", "which", "while", "who", "with", "you", "your",
];

/// Function words skipped when picking a topic hint.
pub const STOPWORDS: &[&str] = &[
    "about", "after", "also", "and", "been", "before", "does", "each", "every", "from", "have", "her", "his",
    "how", "into", "many", "more", "much", "other", "over", "she", "some", "than", "that", "the", "their", "them",
    "then", "there", "these", "they", "this", "those", "what", "when", "where", "which", "while", "will", "with",
    "would", "your", "half", "twice", "times", "week", "weeks", "year", "years", "day", "days", "altogether",
];

/// The markers mentioned in a variant's prompt rules, for display.
pub fn required_markers(variant: Variant) -> &'static [&'static str] {
    match variant {
        Variant::Ped => PED_REQUIRED,
        Variant::Hu => HU_REQUIRED,
        _ => &[],
    }
}

/// Whether the lower-cased token sequence contains `phrase` as whole
/// words.
pub fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    if words.is_empty() || words.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(words.len())
        .any(|w| w.iter().zip(&words).all(|(a, b)| a == b))
}

/// The phrases of `list` found in `tokens`, in list order.
pub fn find_all<'a>(tokens: &[String], list: &[&'a str]) -> Vec<&'a str> {
    list.iter().copied().filter(|p| contains_phrase(tokens, p)).collect()
}
