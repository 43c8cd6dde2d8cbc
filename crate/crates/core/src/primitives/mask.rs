use serde::{Deserialize, Serialize};

use super::image::BoundingBox;
use crate::error::{Error, Result};

/// A boolean H x W grid, bit-packed row-major into 64-bit words.
///
/// Padding bits past `height * width` are always zero, so word-wise popcounts
/// are exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    words: Vec<u64>,
}

/// Intersection and union pixel counts for one (prediction, ground truth) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairStats {
    pub intersection: u64,
    pub union: u64,
}

impl PairStats {
    /// IoU with the both-empty convention (1.0).
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        let mut mask = Self::empty(height, width);
        for w in mask.words.iter_mut() {
            *w = u64::MAX;
        }
        mask.clear_padding();
        mask
    }

    /// Mask whose set pixels are exactly the interior of `bbox`.
    pub fn from_box(height: usize, width: usize, bbox: &BoundingBox) -> Result<Self> {
        if !bbox.fits(width, height) {
            return Err(Error::contract(format!("box {bbox} outside {width}x{height} mask")));
        }
        let mut mask = Self::empty(height, width);
        for y in bbox.y_min..bbox.y_max {
            for x in bbox.x_min..bbox.x_max {
                mask.set(x, y, true);
            }
        }
        Ok(mask)
    }

    /// Build from row-major booleans.
    pub fn from_bits(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::contract(format!(
                "{} bits cannot fill a {height}x{width} mask",
                bits.len()
            )));
        }
        let mut mask = Self::empty(height, width);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                mask.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(mask)
    }

    /// `(height, width)`
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let i = y * self.width + x;
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Row-major booleans.
    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.height * self.width)
            .map(|i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .collect()
    }

    /// Smallest box containing every set pixel, `None` for an empty mask.
    pub fn tight_box(&self) -> Option<BoundingBox> {
        let mut x_min = usize::MAX;
        let mut y_min = usize::MAX;
        let mut x_max = 0;
        let mut y_max = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x_min = x_min.min(x);
                    y_min = y_min.min(y);
                    x_max = x_max.max(x + 1);
                    y_max = y_max.max(y + 1);
                }
            }
        }
        (x_min != usize::MAX).then_some(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Intersection and union counts against `other`.
    pub fn pair_stats(&self, other: &BinaryMask) -> Result<PairStats> {
        if self.shape() != other.shape() {
            return Err(Error::contract(format!(
                "mask shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut stats = PairStats::default();
        for (a, b) in self.words.iter().zip(&other.words) {
            stats.intersection += (a & b).count_ones() as u64;
            stats.union += (a | b).count_ones() as u64;
        }
        Ok(stats)
    }

    fn clear_padding(&mut self) {
        let n = self.height * self.width;
        if !n.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn mask_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(pred.pair_stats(gt)?.iou())
}
