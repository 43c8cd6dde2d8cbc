//! Geometric and vector primitives shared by every pipeline stage.
//!
//! Everything here is a pure function over immutable values.

mod image;
mod mask;
mod rle;
mod vector;

pub use image::{crop_box, BoundingBox, RasterImage};
pub use mask::{mask_iou, BinaryMask, PairStats};
pub use rle::{rle_decode, rle_encode, Rle};
pub use vector::{cosine_similarity, normalize, FeatureVector};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// An entity proposal produced by a detector or a vision tagging service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedEntity {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// A retrieved web page or news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebDocument {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub body: String,
}

impl WebDocument {
    pub fn new(url: impl Into<String>, snippet: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            published_at: None,
            snippet: snippet.into(),
            body: body.into(),
        }
    }

    pub fn published(mut self, at: DateTime<Utc>) -> Self {
        self.published_at = Some(at);
        self
    }
}
