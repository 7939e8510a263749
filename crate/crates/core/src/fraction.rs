use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid fraction {input:?}: {reason}")]
pub struct FractionError {
    pub input: String,
    pub reason: &'static str,
}

/// Exact non-negative rational, written as `"2/3"` or `"0.51"`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: u64,
    den: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        Some(Fraction { num: num / g, den: den / g })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    /// `part / whole >= self`, computed without division.
    pub fn is_met(&self, part: u64, whole: u64) -> bool {
        part as u128 * self.den as u128 >= whole as u128 * self.num as u128
    }

    /// Strictly greater than one half.
    pub fn is_majority(&self) -> bool {
        2 * self.num as u128 > self.den as u128
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl FromStr for Fraction {
    type Err = FractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| FractionError { input: s.to_string(), reason };
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| err("numerator is not an integer"))?;
            let d: u64 = d.trim().parse().map_err(|_| err("denominator is not an integer"))?;
            return Fraction::new(n, d).ok_or_else(|| err("zero denominator"));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err("unsupported decimal"));
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err("not a number"))? };
        let den = 10u64.pow(frac.len() as u32);
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err("not a number"))? };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(|| err("overflow"))?;
        Fraction::new(num, den).ok_or_else(|| err("zero denominator"))
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Debug for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fraction({self})")
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ratios_and_decimals() {
        assert_eq!("2/3".parse::<Fraction>().unwrap(), Fraction::new(2, 3).unwrap());
        assert_eq!("0.51".parse::<Fraction>().unwrap(), Fraction::new(51, 100).unwrap());
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::new(1, 1).unwrap());
        assert_eq!("4/6".parse::<Fraction>().unwrap().to_string(), "2/3");
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("-1/2".parse::<Fraction>().is_err());
        assert!("abc".parse::<Fraction>().is_err());
    }

    #[test]
    fn threshold_arithmetic() {
        let two_thirds = Fraction::new(2, 3).unwrap();
        assert!(!two_thirds.is_met(60, 100));
        assert!(two_thirds.is_met(67, 100));
        assert!(two_thirds.is_met(2, 3));
        assert!(Fraction::new(1, 2).unwrap().is_met(60, 100));
        assert!(two_thirds.is_met(0, 0));
        assert!(!Fraction::new(1, 2).unwrap().is_majority());
        assert!(Fraction::new(51, 100).unwrap().is_majority());
    }
}
