use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::mask::BinaryMask;
use crate::error::{Error, Result};

/// Column-major run-length encoding of a [`BinaryMask`].
///
/// Runs alternate starting with zeros, so a mask whose first pixel is set
/// begins with a zero-length run. Text form: `"<H>x<W>:<c0>,<c1>,..."`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rle {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u64>,
}

pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let (height, width) = mask.shape();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..width {
        for y in 0..height {
            let bit = mask.get(x, y);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        height,
        width,
        counts,
    }
}

pub fn rle_decode(rle: &Rle) -> Result<BinaryMask> {
    let total: u64 = rle.counts.iter().sum();
    let expected = (rle.height * rle.width) as u64;
    if total != expected {
        return Err(Error::MalformedAnnotation(format!(
            "run lengths sum to {total}, expected {expected} for {}x{}",
            rle.height, rle.width
        )));
    }
    let mut mask = BinaryMask::empty(rle.height, rle.width);
    let mut idx = 0usize;
    for (i, &count) in rle.counts.iter().enumerate() {
        let count = count as usize;
        if i % 2 == 1 {
            for flat in idx..idx + count {
                mask.set(flat / rle.height, flat % rle.height, true);
            }
        }
        idx += count;
    }
    Ok(mask)
}

impl Rle {
    pub fn decode(&self) -> Result<BinaryMask> {
        rle_decode(self)
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

impl fmt::Display for Rle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:", self.height, self.width)?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Rle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::MalformedAnnotation(format!("bad RLE string {s:?}: {why}"));
        let (shape, counts) = s.trim().split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let (h, w) = shape.split_once('x').ok_or_else(|| bad("shape must be <H>x<W>"))?;
        let height: usize = h.parse().map_err(|_| bad("height is not a number"))?;
        let width: usize = w.parse().map_err(|_| bad("width is not a number"))?;
        if height == 0 || width == 0 {
            return Err(bad("empty shape"));
        }
        let counts = counts
            .split(',')
            .map(|c| c.parse::<u64>().map_err(|_| bad("count is not a non-negative integer")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Rle {
            height,
            width,
            counts,
        })
    }
}

impl Serialize for Rle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Masks serialize as their run-length string.
impl Serialize for BinaryMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&rle_encode(self))
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Rle::deserialize(d)?.decode().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero() {
        let rle = rle_encode(&BinaryMask::empty(2, 2));
        assert_eq!(rle.counts, vec![4]);
        assert_eq!(rle_decode(&rle).unwrap(), BinaryMask::empty(2, 2));
    }

    #[test]
    fn all_one_starts_with_empty_zero_run() {
        let rle = rle_encode(&BinaryMask::full(2, 2));
        assert_eq!(rle.counts, vec![0, 4]);
        assert_eq!(rle_decode(&rle).unwrap(), BinaryMask::full(2, 2));
    }

    #[test]
    fn top_left_only() {
        let mut m = BinaryMask::empty(2, 2);
        m.set(0, 0, true);
        assert_eq!(rle_encode(&m).counts, vec![0, 1, 3]);
    }

    #[test]
    fn column_major_order() {
        // 2x3 mask with the second column set: column-major runs 2 zeros, 2 ones, 2 zeros
        let mut m = BinaryMask::empty(2, 3);
        m.set(1, 0, true);
        m.set(1, 1, true);
        assert_eq!(rle_encode(&m).counts, vec![2, 2, 2]);
    }

    #[test]
    fn sum_mismatch_is_malformed() {
        let rle = Rle {
            height: 2,
            width: 2,
            counts: vec![3],
        };
        assert!(matches!(rle_decode(&rle), Err(Error::MalformedAnnotation(_))));
    }

    #[test]
    fn text_grammar() {
        let rle: Rle = "2x3:0,1,5".parse().unwrap();
        assert_eq!(rle.to_string(), "2x3:0,1,5");
        assert_eq!(rle.area(), 1);
        for bad in ["2x3", "2y3:1", "0x3:0", "2x3:1,-1", "2x3:a", "2x3:"] {
            assert!(bad.parse::<Rle>().is_err(), "{bad} should not parse");
        }
    }
}
