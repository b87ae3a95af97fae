//! Small text utilities shared by the validators, tools, matchers and
//! feature extractor.

use std::sync::LazyLock;

use regex::Regex;

static NUMERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d+(?:,\d{3})*(?:\.\d+)?(?:/\d+)?").unwrap());

/// English number words recognised as numbers (one through hundred).
pub const NUMBER_WORDS: &[(&str, u32)] = &[
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
    ("thirteen", 13),
    ("fourteen", 14),
    ("fifteen", 15),
    ("sixteen", 16),
    ("seventeen", 17),
    ("eighteen", 18),
    ("nineteen", 19),
    ("twenty", 20),
    ("thirty", 30),
    ("forty", 40),
    ("fifty", 50),
    ("sixty", 60),
    ("seventy", 70),
    ("eighty", 80),
    ("ninety", 90),
    ("hundred", 100),
];

/// Case-folded alphanumeric tokens. Everything that is not a letter or a
/// digit separates tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Digit numerals in order of appearance, thousands separators removed.
/// Simple fractions such as `1/2` are kept as one numeral.
pub fn digit_numerals(text: &str) -> Vec<String> {
    NUMERAL
        .find_iter(text)
        .map(|m| m.as_str().replace(',', ""))
        .collect()
}

/// Value of a number word, if `token` (already lower-cased) is one.
pub fn number_word_value(token: &str) -> Option<u32> {
    NUMBER_WORDS
        .iter()
        .find(|(w, _)| *w == token)
        .map(|(_, v)| *v)
}

/// Number words present in `text`, in order.
pub fn number_words(text: &str) -> Vec<String> {
    tokens(text)
        .into_iter()
        .filter(|t| number_word_value(t).is_some())
        .collect()
}

pub fn has_digit(text: &str) -> bool {
    text.chars().any(|c| c.is_ascii_digit())
}

/// Parses a loosely formatted numeric answer: surrounding whitespace,
/// a leading currency sign, a trailing percent sign or period, and
/// thousands separators are tolerated. Simple fractions are evaluated.
pub fn parse_number(raw: &str) -> Option<f64> {
    let mut s = raw.trim();
    s = s.strip_prefix('$').unwrap_or(s).trim();
    s = s.strip_suffix('%').unwrap_or(s).trim();
    s = s.strip_suffix('.').unwrap_or(s).trim();
    if s.is_empty() {
        return None;
    }
    let cleaned = s.replace(',', "");
    if let Some((n, d)) = cleaned.split_once('/') {
        let n: f64 = n.trim().parse().ok()?;
        let d: f64 = d.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d).filter(|v| v.is_finite());
    }
    // `f64::from_str` accepts "inf" and "nan"; answers never legitimately do.
    if !cleaned
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
    {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Formats a computed value the way tool outputs and answers are shown:
/// integral values without a fractional part, everything else in the
/// shortest round-trip representation.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Numeric equality of two answer strings under an absolute tolerance.
/// Returns `None` when either side is not numeric.
pub fn numeric_eq(a: &str, b: &str, tol: f64) -> Option<bool> {
    let x = parse_number(a)?;
    let y = parse_number(b)?;
    Some((x - y).abs() <= tol)
}

/// Lower-cases, replaces punctuation with spaces and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
