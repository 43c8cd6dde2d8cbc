//! Call counting and failure injection around ports.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use super::names;
use super::*;

/// Shared counter and failure switch for one port.
#[derive(Debug, Default)]
pub struct PortProbe {
    calls: AtomicUsize,
    failing: AtomicBool,
}

impl PortProbe {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    /// While set, every call fails with a [`PortError`] (and is still counted).
    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }
}

/// Probes for a whole [`Ports`] bundle, keyed by port name.
#[derive(Debug, Clone, Default)]
pub struct Probes {
    by_port: BTreeMap<&'static str, Arc<PortProbe>>,
}

impl Probes {
    pub fn get(&self, port: &str) -> &PortProbe {
        self.by_port
            .get(port)
            .unwrap_or_else(|| panic!("no probe for port `{port}`"))
    }

    pub fn total_calls(&self) -> usize {
        self.by_port.values().map(|p| p.calls()).sum()
    }

    pub fn calls(&self) -> BTreeMap<&'static str, usize> {
        self.by_port.iter().map(|(k, v)| (*k, v.calls())).collect()
    }

    pub fn reset(&self) {
        self.by_port.values().for_each(|p| p.reset());
    }

    pub fn fail_only(&self, port: Option<&str>) {
        for (name, probe) in &self.by_port {
            probe.set_failing(Some(*name) == port);
        }
    }
}

/// A port wrapped with a [`PortProbe`].
pub struct Instrumented<P: ?Sized> {
    inner: Arc<P>,
    probe: Arc<PortProbe>,
    port: &'static str,
}

impl<P: ?Sized> Instrumented<P> {
    pub fn new(inner: Arc<P>, port: &'static str) -> (Arc<Self>, Arc<PortProbe>) {
        let probe = Arc::new(PortProbe::default());
        let wrapped = Arc::new(Self {
            inner,
            probe: probe.clone(),
            port,
        });
        (wrapped, probe)
    }

    fn enter(&self) -> PortResult<&P> {
        self.probe.calls.fetch_add(1, Ordering::SeqCst);
        if self.probe.failing.load(Ordering::SeqCst) {
            return Err(PortError::new(self.port, "injected failure"));
        }
        Ok(&self.inner)
    }
}

impl<P: TextGenerator + ?Sized> TextGenerator for Instrumented<P> {
    fn generate(&self, prompt: &str, max_len: usize) -> PortResult<String> {
        self.enter()?.generate(prompt, max_len)
    }
}

impl<P: WebSearcher + ?Sized> WebSearcher for Instrumented<P> {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<WebDocument>> {
        self.enter()?.search(query, k)
    }
}

impl<P: ImageSearcher + ?Sized> ImageSearcher for Instrumented<P> {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<RasterImage>> {
        self.enter()?.search(query, k)
    }
}

impl<P: TextEmbedder + ?Sized> TextEmbedder for Instrumented<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> PortResult<FeatureVector> {
        self.enter()?.embed(text)
    }
}

impl<P: VisualEmbedder + ?Sized> VisualEmbedder for Instrumented<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, image: &RasterImage) -> PortResult<FeatureVector> {
        self.enter()?.embed(image)
    }
}

impl<P: EntityExtractor + ?Sized> EntityExtractor for Instrumented<P> {
    fn extract(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        self.enter()?.extract(image)
    }
}

impl<P: ObjectDetector + ?Sized> ObjectDetector for Instrumented<P> {
    fn detect(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        self.enter()?.detect(image)
    }
}

impl<P: PromptableMaskGenerator + ?Sized> PromptableMaskGenerator for Instrumented<P> {
    fn mask_from_box(&self, image: &RasterImage, bbox: &BoundingBox) -> PortResult<BinaryMask> {
        self.enter()?.mask_from_box(image, bbox)
    }
}

impl<P: ReferringSegmenter + ?Sized> ReferringSegmenter for Instrumented<P> {
    fn segment(&self, image: &RasterImage, prompt: &str) -> PortResult<BinaryMask> {
        self.enter()?.segment(image, prompt)
    }
}

pub(super) fn wrap(ports: &Ports) -> (Ports, Probes) {
    let mut probes = Probes::default();
    macro_rules! probe {
        ($field:ident, $name:expr) => {{
            let (wrapped, probe) = Instrumented::new(ports.$field.clone(), $name);
            probes.by_port.insert($name, probe);
            wrapped
        }};
    }
    let wrapped = Ports {
        llm: probe!(llm, names::TEXT_GENERATOR),
        web: probe!(web, names::WEB_SEARCHER),
        image_search: probe!(image_search, names::IMAGE_SEARCHER),
        text_embedder: probe!(text_embedder, names::TEXT_EMBEDDER),
        visual_embedder: probe!(visual_embedder, names::VISUAL_EMBEDDER),
        entity_extractor: probe!(entity_extractor, names::ENTITY_EXTRACTOR),
        detector: probe!(detector, names::OBJECT_DETECTOR),
        mask_generator: probe!(mask_generator, names::MASK_GENERATOR),
        segmenter: probe!(segmenter, names::REFERRING_SEGMENTER),
    };
    (wrapped, probes)
}
