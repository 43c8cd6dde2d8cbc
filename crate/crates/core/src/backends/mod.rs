//! Ports for every external capability the pipeline consumes.
//!
//! Real adapters and the deterministic [`mock`] suite implement the same
//! traits. Implementations must be safe to call from several workers at once;
//! adapters over non-thread-safe clients serialize internally.

mod cache;
mod cached;
mod instrument;
pub mod mock;

use std::sync::Arc;

pub use cache::{CacheKey, CacheStats, CanonicalRequest, ResponseCache, CACHE_DIR_ENV};
pub use instrument::{Instrumented, PortProbe, Probes};

use crate::error::PortError;
use crate::primitives::{BinaryMask, BoundingBox, DetectedEntity, FeatureVector, RasterImage, WebDocument};

/// Stable port names, used in cache paths and error messages.
pub mod names {
    pub const TEXT_GENERATOR: &str = "text_generator";
    pub const WEB_SEARCHER: &str = "web_searcher";
    pub const IMAGE_SEARCHER: &str = "image_searcher";
    pub const TEXT_EMBEDDER: &str = "text_embedder";
    pub const VISUAL_EMBEDDER: &str = "visual_embedder";
    pub const ENTITY_EXTRACTOR: &str = "entity_extractor";
    pub const OBJECT_DETECTOR: &str = "object_detector";
    pub const MASK_GENERATOR: &str = "mask_generator";
    pub const REFERRING_SEGMENTER: &str = "referring_segmenter";

    pub const ALL: [&str; 9] = [
        TEXT_GENERATOR,
        WEB_SEARCHER,
        IMAGE_SEARCHER,
        TEXT_EMBEDDER,
        VISUAL_EMBEDDER,
        ENTITY_EXTRACTOR,
        OBJECT_DETECTOR,
        MASK_GENERATOR,
        REFERRING_SEGMENTER,
    ];
}

pub type PortResult<T> = Result<T, PortError>;

/// Large language model. Output must not exceed `max_len` characters.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, max_len: usize) -> PortResult<String>;
}

/// Web search engine. Returns at most `k` documents, each with a non-empty url.
pub trait WebSearcher: Send + Sync {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<WebDocument>>;
}

/// Image search engine. Returns at most `k` images.
pub trait ImageSearcher: Send + Sync {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<RasterImage>>;
}

/// Text embedding model with a fixed output dimension.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> PortResult<FeatureVector>;
}

/// Contrastive image encoder with a fixed output dimension.
pub trait VisualEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, image: &RasterImage) -> PortResult<FeatureVector>;
}

/// Vision tagging service that names the entities visible in an image.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>>;
}

/// Class-agnostic object proposals; boxes lie within the image.
pub trait ObjectDetector: Send + Sync {
    fn detect(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>>;
}

/// Box-prompted mask decoder. The returned mask has the image's shape.
pub trait PromptableMaskGenerator: Send + Sync {
    fn mask_from_box(&self, image: &RasterImage, bbox: &BoundingBox) -> PortResult<BinaryMask>;
}

/// The wrapped referring segmentation model: (image, prompt) to mask.
pub trait ReferringSegmenter: Send + Sync {
    fn segment(&self, image: &RasterImage, prompt: &str) -> PortResult<BinaryMask>;
}

/// One handle per port, shared across workers.
#[derive(Clone)]
pub struct Ports {
    pub llm: Arc<dyn TextGenerator>,
    pub web: Arc<dyn WebSearcher>,
    pub image_search: Arc<dyn ImageSearcher>,
    pub text_embedder: Arc<dyn TextEmbedder>,
    pub visual_embedder: Arc<dyn VisualEmbedder>,
    pub entity_extractor: Arc<dyn EntityExtractor>,
    pub detector: Arc<dyn ObjectDetector>,
    pub mask_generator: Arc<dyn PromptableMaskGenerator>,
    pub segmenter: Arc<dyn ReferringSegmenter>,
}

impl Ports {
    /// Route every port through `cache`, sleeping `delay` before each cache miss.
    pub fn cached(&self, cache: Arc<ResponseCache>, delay: std::time::Duration) -> Ports {
        cached::wrap(self, cache, delay)
    }

    /// Wrap every port with a call counter and a failure switch.
    pub fn instrumented(&self) -> (Ports, Probes) {
        instrument::wrap(self)
    }
}
