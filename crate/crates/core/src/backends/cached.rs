use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::names;
use super::*;
use crate::error::Error;

/// A port routed through the response cache.
pub(super) struct Cached<P: ?Sized> {
    inner: Arc<P>,
    cache: Arc<ResponseCache>,
    port: &'static str,
    delay: Duration,
}

impl<P: ?Sized> Cached<P> {
    fn new(inner: Arc<P>, cache: Arc<ResponseCache>, port: &'static str, delay: Duration) -> Arc<Self> {
        Arc::new(Self {
            inner,
            cache,
            port,
            delay,
        })
    }

    fn call<T, F>(&self, request: CanonicalRequest, inner: F) -> PortResult<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce(&P) -> PortResult<T>,
    {
        let port = self.port;
        let bytes = self
            .cache
            .cached_call(port, &request, || {
                if !self.delay.is_zero() {
                    std::thread::sleep(self.delay);
                }
                let value = inner(&self.inner)?;
                Ok(serde_json::to_vec(&value)?)
            })
            .map_err(|e| match e {
                Error::Port(p) => p,
                other => PortError::new(port, other.to_string()),
            })?;
        serde_json::from_slice(&bytes).map_err(|e| PortError::new(port, format!("cached response undecodable: {e}")))
    }
}

fn image_request(image: &RasterImage) -> CanonicalRequest {
    CanonicalRequest::new()
        .field("image", image.fingerprint())
        .field("width", image.width())
        .field("height", image.height())
}

impl<P: TextGenerator + ?Sized> TextGenerator for Cached<P> {
    fn generate(&self, prompt: &str, max_len: usize) -> PortResult<String> {
        let req = CanonicalRequest::new().field("prompt", prompt).field("max_len", max_len);
        self.call(req, |p| p.generate(prompt, max_len))
    }
}

impl<P: WebSearcher + ?Sized> WebSearcher for Cached<P> {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<WebDocument>> {
        let req = CanonicalRequest::new().field("query", query).field("k", k);
        self.call(req, |p| p.search(query, k))
    }
}

impl<P: ImageSearcher + ?Sized> ImageSearcher for Cached<P> {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<RasterImage>> {
        let req = CanonicalRequest::new().field("query", query).field("k", k);
        self.call(req, |p| p.search(query, k))
    }
}

impl<P: TextEmbedder + ?Sized> TextEmbedder for Cached<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> PortResult<FeatureVector> {
        let req = CanonicalRequest::new().field("text", text);
        self.call(req, |p| p.embed(text))
    }
}

impl<P: VisualEmbedder + ?Sized> VisualEmbedder for Cached<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, image: &RasterImage) -> PortResult<FeatureVector> {
        self.call(image_request(image), |p| p.embed(image))
    }
}

impl<P: EntityExtractor + ?Sized> EntityExtractor for Cached<P> {
    fn extract(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        self.call(image_request(image), |p| p.extract(image))
    }
}

impl<P: ObjectDetector + ?Sized> ObjectDetector for Cached<P> {
    fn detect(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        self.call(image_request(image), |p| p.detect(image))
    }
}

impl<P: PromptableMaskGenerator + ?Sized> PromptableMaskGenerator for Cached<P> {
    fn mask_from_box(&self, image: &RasterImage, bbox: &BoundingBox) -> PortResult<BinaryMask> {
        let req = image_request(image).field("box", bbox);
        let rle: crate::primitives::Rle = self.call(req, |p| {
            p.mask_from_box(image, bbox).map(|m| crate::primitives::rle_encode(&m))
        })?;
        rle.decode().map_err(|e| PortError::new(self.port, e.to_string()))
    }
}

impl<P: ReferringSegmenter + ?Sized> ReferringSegmenter for Cached<P> {
    fn segment(&self, image: &RasterImage, prompt: &str) -> PortResult<BinaryMask> {
        let req = image_request(image).field("prompt", prompt);
        let rle: crate::primitives::Rle = self.call(req, |p| {
            p.segment(image, prompt).map(|m| crate::primitives::rle_encode(&m))
        })?;
        rle.decode().map_err(|e| PortError::new(self.port, e.to_string()))
    }
}

pub(super) fn wrap(ports: &Ports, cache: Arc<ResponseCache>, delay: Duration) -> Ports {
    Ports {
        llm: Cached::new(ports.llm.clone(), cache.clone(), names::TEXT_GENERATOR, delay),
        web: Cached::new(ports.web.clone(), cache.clone(), names::WEB_SEARCHER, delay),
        image_search: Cached::new(ports.image_search.clone(), cache.clone(), names::IMAGE_SEARCHER, delay),
        text_embedder: Cached::new(ports.text_embedder.clone(), cache.clone(), names::TEXT_EMBEDDER, delay),
        visual_embedder: Cached::new(ports.visual_embedder.clone(), cache.clone(), names::VISUAL_EMBEDDER, delay),
        entity_extractor: Cached::new(ports.entity_extractor.clone(), cache.clone(), names::ENTITY_EXTRACTOR, delay),
        detector: Cached::new(ports.detector.clone(), cache.clone(), names::OBJECT_DETECTOR, delay),
        mask_generator: Cached::new(ports.mask_generator.clone(), cache.clone(), names::MASK_GENERATOR, delay),
        segmenter: Cached::new(ports.segmenter.clone(), cache, names::REFERRING_SEGMENTER, delay),
    }
}
