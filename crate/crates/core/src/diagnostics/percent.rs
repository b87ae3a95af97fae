//! Exact percentages.
//!
//! Accuracies are ratios of counts and table fixtures are short decimals,
//! so both are represented exactly as rationals. Sums and differences are
//! then exact, and rounding happens only when a value is rendered.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(Ratio<i128>);

impl Percent {
    pub fn zero() -> Self {
        Self(Ratio::from_integer(0))
    }

    pub fn from_ratio(numer: i128, denom: i128) -> Option<Self> {
        (denom != 0).then(|| Self(Ratio::new(numer, denom)))
    }

    /// `100 * part / whole`; `None` when `whole` is zero.
    pub fn from_counts(part: u64, whole: u64) -> Option<Self> {
        Self::from_ratio(100 * part as i128, whole as i128)
    }

    /// Parses a plain decimal such as `-54.20` exactly.
    pub fn parse(text: &str) -> Result<Self, String> {
        let t = text.trim();
        let (negative, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        let valid = !body.is_empty()
            && !(int_part.is_empty() && frac_part.is_empty())
            && int_part.chars().all(|c| c.is_ascii_digit())
            && frac_part.chars().all(|c| c.is_ascii_digit());
        if !valid {
            return Err(format!("not a decimal number: '{text}'"));
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i128 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| format!("number too large: '{text}'"))?
        };
        let denom = 10i128
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(|| format!("too many decimals: '{text}'"))?;
        let r = Ratio::new(numer, denom);
        Ok(Self(if negative { -r } else { r }))
    }

    /// Exact value of the shortest decimal that round-trips to `x`.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        Self::parse(&format!("{x}")).ok()
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn is_zero(self) -> bool {
        *self.0.numer() == 0
    }

    pub fn abs(self) -> Self {
        if self.0 < Ratio::from_integer(0) {
            -self
        } else {
            self
        }
    }

    /// `self / other * 100`, for "fraction of" quantities.
    pub fn percent_of(self, other: Self) -> Option<Self> {
        if other.is_zero() {
            None
        } else {
            Some(Self(self.0 / other.0 * Ratio::from_integer(100)))
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Rounds half away from zero to `decimals` places.
    pub fn round(self, decimals: u32) -> String {
        let scale = 10i128.pow(decimals);
        let scaled = self.0 * Ratio::from_integer(scale);
        let negative = scaled < Ratio::from_integer(0);
        let magnitude = if negative { -scaled } else { scaled };
        let units = (magnitude + Ratio::new(1, 2)).floor().to_integer();
        let int_part = units / scale;
        let frac_part = units % scale;
        let sign = if negative && units != 0 { "-" } else { "" };
        if decimals == 0 {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac_part:0width$}", width = decimals as usize)
        }
    }

    /// Like [`round`](Self::round) with an explicit `+` on positive values.
    pub fn signed(self, decimals: u32) -> String {
        let s = self.round(decimals);
        if s.starts_with('-') || self.is_zero() || s.trim_start_matches(['0', '.']).is_empty() {
            s
        } else {
            format!("+{s}")
        }
    }
}

impl Add for Percent {
    type Output = Percent;
    fn add(self, rhs: Percent) -> Percent {
        Percent(self.0 + rhs.0)
    }
}

impl Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl Neg for Percent {
    type Output = Percent;
    fn neg(self) -> Percent {
        Percent(-self.0)
    }
}

impl std::iter::Sum for Percent {
    fn sum<I: Iterator<Item = Percent>>(iter: I) -> Percent {
        iter.fold(Percent::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.round(f.precision().unwrap_or(2) as u32))
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Percent::from_f64(x).ok_or_else(|| serde::de::Error::custom("non-finite percentage")),
            Raw::Text(t) => Percent::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}
