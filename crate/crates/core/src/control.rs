//! PTBTA control-logic decoder.
//!
//! Three select lines drive eight control lines in thermometer code. Each
//! line held low enables one unit output branch, so the gain index is the
//! number of zero bits.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// 3-bit select word, `s1` most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SelectWord {
    pub s1: bool,
    pub s2: bool,
    pub s3: bool,
}

impl SelectWord {
    pub fn new(s1: bool, s2: bool, s3: bool) -> Self {
        Self { s1, s2, s3 }
    }

    /// Builds the word from its binary value; `None` above 7.
    pub fn from_code(code: u8) -> Option<Self> {
        (code < 8).then_some(Self {
            s1: code & 0b100 != 0,
            s2: code & 0b010 != 0,
            s3: code & 0b001 != 0,
        })
    }

    pub fn code(self) -> u8 {
        (u8::from(self.s1) << 2) | (u8::from(self.s2) << 1) | u8::from(self.s3)
    }

    pub fn all() -> impl Iterator<Item = SelectWord> {
        (0..8).filter_map(SelectWord::from_code)
    }
}

impl FromStr for SelectWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Vec<bool> = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Config(format!(
                    "select code must be three of '0'/'1', found {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<_, _>>()?;
        match bits.as_slice() {
            &[s1, s2, s3] => Ok(Self { s1, s2, s3 }),
            _ => Err(Error::Config(format!(
                "select code must have exactly 3 bits, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for SelectWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}",
            u8::from(self.s1),
            u8::from(self.s2),
            u8::from(self.s3)
        )
    }
}

/// Control lines c1..c8, stored as `lines[0]..lines[7]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlVector {
    pub lines: [bool; 8],
}

impl ControlVector {
    pub fn zero_count(&self) -> u32 {
        self.lines.iter().filter(|&&b| !b).count() as u32
    }

    /// Once a line is high every later line is high.
    pub fn is_thermometer(&self) -> bool {
        self.lines.windows(2).all(|w| !w[0] || w[1])
    }
}

impl fmt::Display for ControlVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.lines {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

/// For select value n, lines c1..c(n+1) are low and the rest high.
pub fn decode(sel: SelectWord) -> ControlVector {
    let low = usize::from(sel.code()) + 1;
    let mut lines = [true; 8];
    lines[..low].iter_mut().for_each(|b| *b = false);
    ControlVector { lines }
}

/// Gain step j in 1..=8.
pub fn gain_index(sel: SelectWord) -> u32 {
    u32::from(sel.code()) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bit_strings() {
        let sel: SelectWord = "101".parse().unwrap();
        assert_eq!(sel, SelectWord::new(true, false, true));
        assert_eq!(sel.to_string(), "101");
        assert!("10".parse::<SelectWord>().is_err());
        assert!("1011".parse::<SelectWord>().is_err());
        assert!("1x1".parse::<SelectWord>().is_err());
    }

    #[test]
    fn spot_rows() {
        let v = |s: &str| decode(s.parse().unwrap()).to_string();
        assert_eq!(v("000"), "01111111");
        assert_eq!(v("111"), "00000000");
        assert_eq!(v("011"), "00001111");
        assert_eq!(gain_index("000".parse().unwrap()), 1);
        assert_eq!(gain_index("111".parse().unwrap()), 8);
        assert_eq!(gain_index("100".parse().unwrap()), 5);
    }

    #[test]
    fn gain_index_is_zero_count_and_monotone() {
        let mut last = 0;
        for sel in SelectWord::all() {
            let cv = decode(sel);
            assert!(cv.is_thermometer());
            assert!(!cv.lines[0]);
            assert_eq!(gain_index(sel), cv.zero_count());
            assert!(gain_index(sel) > last);
            last = gain_index(sel);
        }
    }
}
