use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A calendar quarter such as `2010Q1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Validation(format!("quarter {q} outside 1..=4")));
        }
        if !(1000..=9999).contains(&year) {
            return Err(Error::Validation(format!("year {year} outside 1000..=9999")));
        }
        Ok(Self { year, q })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn q(self) -> u8 {
        self.q
    }

    /// Quarters since year 0, usable for arithmetic.
    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_index(index: i64) -> Result<Self> {
        let year = index.div_euclid(4);
        let q = index.rem_euclid(4) as u8 + 1;
        let year = i32::try_from(year).map_err(|_| Error::Validation(format!("quarter index {index} out of range")))?;
        Self::new(year, q)
    }

    /// `self + n` quarters. Panics only when leaving the four-digit year range.
    pub fn plus(self, n: i64) -> Self {
        Self::from_index(self.index() + n).expect("quarter arithmetic out of range")
    }

    /// Number of quarters from `earlier` to `self`.
    pub fn diff(self, earlier: Quarter) -> i64 {
        self.index() - earlier.index()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Parses `YYYYQn`, case-insensitive on the `Q`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("invalid quarter {s:?}, expected YYYYQn"));
        let b = s.as_bytes();
        if b.len() != 6 || !b[..4].iter().all(u8::is_ascii_digit) || !matches!(b[4], b'Q' | b'q') {
            return Err(bad());
        }
        let year: i32 = s[..4].parse().map_err(|_| bad())?;
        let q = match b[5] {
            c @ b'1'..=b'4' => c - b'0',
            _ => return Err(bad()),
        };
        Self::new(year, q).map_err(|_| bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let q: Quarter = "2019Q4".parse().unwrap();
        assert_eq!((q.year(), q.q()), (2019, 4));
        assert_eq!(q.to_string(), "2019Q4");
        assert_eq!(q.plus(4).to_string(), "2020Q4");
        assert_eq!(q.plus(1).to_string(), "2020Q1");
        assert_eq!("2010q1".parse::<Quarter>().unwrap().plus(-1).to_string(), "2009Q4");
        for bad in ["2019Q5", "2019Q0", "19Q1", "2019-1", "", "２０１９Q1", "2019Q12"] {
            assert!(bad.parse::<Quarter>().is_err(), "{bad}");
        }
    }

    #[test]
    fn json_round_trip() {
        let q = Quarter::new(2016, 4).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, "\"2016Q4\"");
        assert_eq!(serde_json::from_str::<Quarter>(&s).unwrap(), q);
    }

    proptest! {
        #[test]
        fn index_round_trips(year in 1000i32..9999, q in 1u8..=4, n in -100i64..100) {
            let a = Quarter::new(year, q).unwrap();
            prop_assert_eq!(Quarter::from_index(a.index()).unwrap(), a);
            prop_assume!((1001..9998).contains(&year));
            let b = a.plus(n);
            prop_assert_eq!(b.diff(a), n);
            prop_assert_eq!(n.cmp(&0), b.cmp(&a));
        }
    }
}
