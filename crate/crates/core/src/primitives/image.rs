use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Axis-aligned pixel box, inclusive min and exclusive max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::contract(format!(
                "degenerate box ({x_min},{y_min})-({x_max},{y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// True when the box lies inside a `width` x `height` raster.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max && self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})x[{},{})", self.x_min, self.x_max, self.y_min, self.y_max)
    }
}

/// An 8-bit RGB raster stored row-major.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
    width: usize,
    height: usize,
    #[serde(serialize_with = "ser_pixels", deserialize_with = "de_pixels")]
    pixels: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterImage")
            .field("id", &self.id)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("raster must be at least 1x1"));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::contract(format!(
                "raster {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            source_uri: None,
            width,
            height,
            pixels,
        })
    }

    /// A raster filled with one color.
    pub fn filled(id: impl Into<String>, width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(id, width, height, pixels)
    }

    pub fn with_source(mut self, uri: impl Into<String>) -> Self {
        self.source_uri = Some(uri.into());
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }

    /// Copy the pixels under `bbox` into a new raster.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<RasterImage> {
        if !bbox.fits(self.width, self.height) {
            return Err(Error::contract(format!(
                "box {bbox} outside {}x{} raster",
                self.width, self.height
            )));
        }
        let row_bytes = bbox.width() * 3;
        let mut pixels = Vec::with_capacity(bbox.area() * 3);
        for y in bbox.y_min..bbox.y_max {
            let start = (y * self.width + bbox.x_min) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + row_bytes]);
        }
        let id = format!("{}#crop{},{},{},{}", self.id, bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max);
        RasterImage::new(id, bbox.width(), bbox.height(), pixels)
    }

    /// Write `patch` into this raster with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, patch: &RasterImage, x: usize, y: usize) -> Result<()> {
        if x + patch.width > self.width || y + patch.height > self.height {
            return Err(Error::contract("pasted patch exceeds raster bounds"));
        }
        let row_bytes = patch.width * 3;
        for row in 0..patch.height {
            let dst = ((y + row) * self.width + x) * 3;
            let src = row * row_bytes;
            self.pixels[dst..dst + row_bytes].copy_from_slice(&patch.pixels[src..src + row_bytes]);
        }
        Ok(())
    }

    /// Content digest over dimensions and pixels (the id is not included).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update(&self.pixels);
        hex::encode(hasher.finalize())
    }
}

/// Free-function form of [`RasterImage::crop`].
pub fn crop_box(image: &RasterImage, bbox: &BoundingBox) -> Result<RasterImage> {
    image.crop(bbox)
}

fn ser_pixels<S: Serializer>(pixels: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&BASE64.encode(pixels))
}

fn de_pixels<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
    let encoded = String::deserialize(d)?;
    BASE64.decode(encoded).map_err(serde::de::Error::custom)
}
