//! Deterministic, content-based implementations of every port.
//!
//! A [`FixtureWorld`] describes a small universe: an entity catalog, keyword
//! tables for web and image search, and a script for the language model.
//! Images are synthetic: the red channel of each pixel carries the code of the
//! entity painted there (0 is background), so every image-facing mock works on
//! pixel content alone and handles crops and unseen images consistently.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regex::RegexBuilder;
use sha2::{Digest, Sha256};

use super::*;
use crate::error::{Error, Result};
use crate::text;

/// Weight of a background pixel relative to an entity pixel in the mock
/// visual embedding.
const BACKGROUND_WEIGHT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureEntity {
    pub name: String,
    /// Red-channel code when the entity can be painted into images.
    pub code: Option<u8>,
    /// Generic nouns the mock segmenter understands ("footballer", "suv").
    pub categories: Vec<String>,
    /// Whether the mock segmenter recognizes the entity by name.
    pub known_to_segmenter: bool,
}

impl FixtureEntity {
    pub fn new(name: &str, code: Option<u8>, categories: &[&str], known: bool) -> Self {
        Self {
            name: name.to_string(),
            code,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            known_to_segmenter: known,
        }
    }
}

/// Canned behaviour for the mock language model.
#[derive(Debug, Clone, Default)]
pub struct LlmScript {
    /// Question to search-query rewrites. Unlisted questions get a keyword rewrite.
    pub rewrites: BTreeMap<String, Vec<String>>,
    /// Queries the retrieval gate should answer SKIP for.
    pub skip_queries: BTreeSet<String>,
    /// Terms accepted as segmentable; `None` accepts exactly the catalog names.
    pub segmentable: Option<BTreeSet<String>>,
    /// Co-occurring entity proposals for query enhancement.
    pub enhancements: BTreeMap<String, String>,
    /// Answers of the search-capable answerer used by the two-stage baseline.
    pub answers: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct FixtureWorld {
    pub visual_dim: usize,
    pub text_dim: usize,
    /// Norm of the per-image noise added to visual embeddings.
    pub noise: f64,
    pub entities: Vec<FixtureEntity>,
    /// keyword -> documents
    pub documents: Vec<(String, Vec<WebDocument>)>,
    /// keyword -> images
    pub images: Vec<(String, Vec<RasterImage>)>,
    pub script: LlmScript,
}

impl Default for FixtureWorld {
    fn default() -> Self {
        Self {
            visual_dim: 64,
            text_dim: 256,
            noise: 0.02,
            entities: Vec::new(),
            documents: Vec::new(),
            images: Vec::new(),
            script: LlmScript::default(),
        }
    }
}

impl FixtureWorld {
    pub fn entity(&self, name: &str) -> Option<&FixtureEntity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn code_of(&self, name: &str) -> Option<u8> {
        self.entity(name).and_then(|e| e.code)
    }

    fn by_code(&self, code: u8) -> Option<&FixtureEntity> {
        self.entities.iter().find(|e| e.code == Some(code))
    }

    fn validate(&self) -> Result<()> {
        if self.entities.is_empty() {
            return Err(Error::config("fixture world has no entity table"));
        }
        if self.visual_dim < 2 || self.text_dim < 2 {
            return Err(Error::config("fixture embedding dimensions must be at least 2"));
        }
        if !(0.0..0.05).contains(&self.noise) {
            return Err(Error::config("fixture embedding noise must be in [0, 0.05)"));
        }
        let mut names = BTreeSet::new();
        let mut codes = BTreeSet::new();
        for e in &self.entities {
            if e.name.trim().is_empty() {
                return Err(Error::config("fixture entity with an empty name"));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::config(format!("duplicate fixture entity `{}`", e.name)));
            }
            if let Some(code) = e.code {
                if code == 0 || code as usize >= self.visual_dim {
                    return Err(Error::config(format!(
                        "entity `{}` has code {code}, expected 1..{}",
                        e.name, self.visual_dim
                    )));
                }
                if !codes.insert(code) {
                    return Err(Error::config(format!("duplicate fixture code {code}")));
                }
            }
        }
        for (key, docs) in &self.documents {
            if let Some(d) = docs.iter().find(|d| d.url.is_empty()) {
                return Err(Error::config(format!("document `{}` under `{key}` has no url", d.snippet)));
            }
        }
        Ok(())
    }
}

/// Paint a synthetic scene: background code 0 with the given entity boxes.
///
/// Green and blue channels carry seeded texture so distinct images get
/// distinct embedding noise.
pub fn paint_scene(id: &str, width: usize, height: usize, objects: &[(u8, BoundingBox)]) -> RasterImage {
    let mut rng = ChaCha8Rng::from_seed(Sha256::digest(id.as_bytes()).into());
    let mut pixels = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let code = objects
                .iter()
                .rev()
                .find(|(_, b)| b.contains(x, y))
                .map_or(0, |(c, _)| *c);
            pixels.extend_from_slice(&[code, rng.random(), rng.random()]);
        }
    }
    RasterImage::new(id, width, height, pixels).expect("scene dimensions are positive")
}

/// Bounding box of every painted entity code, ordered by code.
pub fn scene_boxes(image: &RasterImage) -> BTreeMap<u8, BoundingBox> {
    let mut boxes: BTreeMap<u8, BoundingBox> = BTreeMap::new();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let code = image.pixel(x, y)[0];
            if code == 0 {
                continue;
            }
            boxes
                .entry(code)
                .and_modify(|b| {
                    b.x_min = b.x_min.min(x);
                    b.y_min = b.y_min.min(y);
                    b.x_max = b.x_max.max(x + 1);
                    b.y_max = b.y_max.max(y + 1);
                })
                .or_insert(BoundingBox {
                    x_min: x,
                    y_min: y,
                    x_max: x + 1,
                    y_max: y + 1,
                });
        }
    }
    boxes
}

/// Every port implemented over one shared fixture.
pub struct MockSuite {
    world: Arc<FixtureWorld>,
}

/// Build deterministic implementations of every port over `world`.
///
/// The mask generator is box-exact. The referring segmenter picks the painted
/// entity whose name or category appears last in the prompt, preferring larger
/// entities on ties, and returns an empty mask when nothing matches.
pub fn make_mock_suite(world: FixtureWorld) -> Result<Ports> {
    world.validate()?;
    let suite = Arc::new(MockSuite { world: Arc::new(world) });
    Ok(Ports {
        llm: suite.clone(),
        web: suite.clone(),
        image_search: Arc::new(MockImageSearch(suite.clone())),
        text_embedder: suite.clone(),
        visual_embedder: Arc::new(MockVisualEmbedder(suite.clone())),
        entity_extractor: suite.clone(),
        detector: suite.clone(),
        mask_generator: suite.clone(),
        segmenter: suite,
    })
}

fn line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn section<'a>(prompt: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = prompt.find(start) else { return "" };
    let rest = &prompt[i + start.len()..];
    match rest.rfind(end) {
        Some(j) => rest[..j].trim(),
        None => rest.trim(),
    }
}

const STOPWORDS: [&str; 24] = [
    "who", "what", "which", "when", "where", "why", "how", "is", "was", "were", "did", "does", "do", "of", "in",
    "on", "at", "to", "for", "by", "with", "and", "this", "that",
];

fn first_line(prompt: &str) -> &str {
    prompt.lines().next().unwrap_or("")
}

/// Whether `prompt` was instantiated from `template`, judged by the literal
/// text of the template's first line up to its first placeholder.
fn from_template(prompt: &str, template: &str) -> bool {
    let head = first_line(template);
    let literal = head.split('{').next().unwrap_or(head);
    first_line(prompt).starts_with(literal)
}

impl MockSuite {
    fn respond(&self, prompt: &str) -> String {
        let script = &self.world.script;
        if from_template(prompt, crate::websense::SEMANTIC_TEMPLATE) {
            let query = line_value(prompt, "Query:").unwrap_or("");
            let skip = script.skip_queries.iter().any(|q| text::normalize(q) == text::normalize(query));
            return if skip { "SKIP".into() } else { "RETRIEVE".into() };
        }
        if from_template(prompt, crate::irag::REWRITE_TEMPLATE) {
            let question = line_value(prompt, "Question:").unwrap_or("");
            if let Some(r) = script.rewrites.get(question) {
                return r.join("\n");
            }
            let keywords: Vec<String> = text::tokens(question)
                .into_iter()
                .filter(|t| !STOPWORDS.contains(&t.as_str()))
                .collect();
            let keywords = keywords.join(" ");
            let count = line_value(prompt, "Write up to")
                .and_then(|rest| rest.split_whitespace().next())
                .and_then(|n| n.parse::<usize>().ok())
                .unwrap_or(1);
            let variants = [keywords.clone(), format!("{keywords} news"), format!("{keywords} latest")];
            return variants[..count.clamp(1, variants.len())].join("\n");
        }
        if from_template(prompt, crate::irag::MAP_TEMPLATE) {
            let question = text::words(line_value(prompt, "Question:").unwrap_or(""));
            let passage = text::words(section(prompt, "Passage:", "\nList one candidate"));
            let lines: Vec<String> = self
                .world
                .entities
                .iter()
                .filter(|e| {
                    let name = text::words(&e.name);
                    text::last_phrase_position(&passage, &name).is_some()
                        && text::last_phrase_position(&question, &name).is_none()
                })
                .map(|e| format!("{}\t0.6", e.name))
                .collect();
            return if lines.is_empty() { "NONE".into() } else { lines.join("\n") };
        }
        if from_template(prompt, crate::tpe::SUMMARY_TEMPLATE) {
            let body = section(prompt, "Text:", "\u{0}");
            let sentences: Vec<&str> = body.split_inclusive(". ").take(2).collect();
            return sentences.concat().trim().to_string();
        }
        if from_template(prompt, crate::engine::FILTER_TEMPLATE) {
            let term = line_value(prompt, "Term:").unwrap_or("");
            let accepted = match &script.segmentable {
                Some(set) => set.iter().any(|t| text::normalize(t) == text::normalize(term)),
                None => self.world.entity(term).is_some(),
            };
            return if accepted { "YES".into() } else { "NO".into() };
        }
        if from_template(prompt, crate::engine::ENHANCE_TEMPLATE) {
            let term = line_value(prompt, "Entity:").unwrap_or("");
            return script.enhancements.get(term).cloned().unwrap_or_default();
        }
        if from_template(prompt, crate::engine::QUESTION_TEMPLATE) {
            let answer = line_value(prompt, "Entity:").unwrap_or("");
            let news = section(prompt, "News:", "\u{0}");
            let scrubbed = RegexBuilder::new(&regex::escape(answer))
                .case_insensitive(true)
                .build()
                .map(|re| re.replace_all(news, "this entity").into_owned())
                .unwrap_or_else(|_| news.to_string());
            let scrubbed = scrubbed.trim().trim_end_matches(['.', '!', '?']);
            return format!("Which entity is this report about: {scrubbed}?");
        }
        if from_template(prompt, crate::eval::TWO_STAGE_ANSWER_TEMPLATE) {
            let question = line_value(prompt, "Question:").unwrap_or("");
            return script
                .answers
                .get(question)
                .cloned()
                .unwrap_or_else(|| "I could not find an answer.".into());
        }
        "I don't know.".into()
    }

    fn keyed<'a, T>(&self, table: &'a [(String, Vec<T>)], query: &str) -> Vec<&'a T> {
        let query_tokens: BTreeSet<String> = text::words(query).into_iter().collect();
        let mut matches: Vec<(usize, usize, &Vec<T>)> = table
            .iter()
            .enumerate()
            .filter_map(|(i, (key, items))| {
                let key_tokens: BTreeSet<String> = text::words(key).into_iter().collect();
                (!key_tokens.is_empty() && key_tokens.is_subset(&query_tokens)).then_some((key_tokens.len(), i, items))
            })
            .collect();
        // more specific keys first, then table order
        matches.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        matches.into_iter().flat_map(|(_, _, items)| items.iter()).collect()
    }

    fn labelled_boxes(&self, image: &RasterImage) -> Vec<(u8, BoundingBox, &FixtureEntity)> {
        scene_boxes(image)
            .into_iter()
            .filter_map(|(code, b)| self.world.by_code(code).map(|e| (code, b, e)))
            .collect()
    }
}

fn hashed_index(token: &str, dim: usize) -> (usize, f64) {
    let digest = Sha256::digest(token.as_bytes());
    let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    ((word % dim as u64) as usize, sign)
}

impl TextGenerator for MockSuite {
    fn generate(&self, prompt: &str, max_len: usize) -> PortResult<String> {
        Ok(self.respond(prompt).chars().take(max_len).collect())
    }
}

impl WebSearcher for MockSuite {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<WebDocument>> {
        let mut seen = BTreeSet::new();
        Ok(self
            .keyed(&self.world.documents, query)
            .into_iter()
            .filter(|d| seen.insert(d.url.clone()))
            .take(k)
            .cloned()
            .collect())
    }
}

pub struct MockImageSearch(Arc<MockSuite>);

impl ImageSearcher for MockImageSearch {
    fn search(&self, query: &str, k: usize) -> PortResult<Vec<RasterImage>> {
        let mut seen = BTreeSet::new();
        Ok(self
            .0
            .keyed(&self.0.world.images, query)
            .into_iter()
            .filter(|img| seen.insert(img.id.clone()))
            .take(k)
            .cloned()
            .collect())
    }
}

impl TextEmbedder for MockSuite {
    fn dim(&self) -> usize {
        self.world.text_dim
    }

    fn embed(&self, text_in: &str) -> PortResult<FeatureVector> {
        let dim = self.world.text_dim;
        let mut values = vec![0.0; dim];
        let toks = text::tokens(text_in);
        if toks.is_empty() {
            values[0] = 1.0;
        }
        for t in toks {
            let (i, sign) = hashed_index(&t, dim);
            values[i] += sign;
        }
        if values.iter().all(|v| *v == 0.0) {
            values[0] = 1.0;
        }
        FeatureVector::new(values).map_err(|e| PortError::new(names::TEXT_EMBEDDER, e.to_string()))
    }
}

pub struct MockVisualEmbedder(Arc<MockSuite>);

impl VisualEmbedder for MockVisualEmbedder {
    fn dim(&self) -> usize {
        self.0.world.visual_dim
    }

    fn embed(&self, image: &RasterImage) -> PortResult<FeatureVector> {
        let world = &self.0.world;
        let dim = world.visual_dim;
        let mut mass = vec![0.0; dim];
        for px in image.pixels().chunks_exact(3) {
            let code = px[0] as usize;
            if code == 0 {
                mass[0] += BACKGROUND_WEIGHT;
            } else {
                mass[1 + (code - 1) % (dim - 1)] += 1.0;
            }
        }
        let norm = mass.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut rng = ChaCha8Rng::from_seed(Sha256::digest(image.pixels()).into());
        let noise: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let values = mass
            .iter()
            .zip(&noise)
            .map(|(m, n)| m / norm + world.noise * n / noise_norm)
            .collect();
        FeatureVector::new(values).map_err(|e| PortError::new(names::VISUAL_EMBEDDER, e.to_string()))
    }
}

impl EntityExtractor for MockSuite {
    fn extract(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        Ok(self
            .labelled_boxes(image)
            .into_iter()
            .map(|(_, bbox, e)| DetectedEntity {
                label: Some(e.name.clone()),
                bbox,
                confidence: 0.9,
            })
            .collect())
    }
}

impl ObjectDetector for MockSuite {
    fn detect(&self, image: &RasterImage) -> PortResult<Vec<DetectedEntity>> {
        let mut boxes: Vec<BoundingBox> = scene_boxes(image).into_values().collect();
        boxes.sort_by_key(|b| (b.y_min, b.x_min, b.y_max, b.x_max));
        Ok(boxes
            .into_iter()
            .map(|bbox| DetectedEntity {
                label: None,
                bbox,
                confidence: 0.8,
            })
            .collect())
    }
}

impl PromptableMaskGenerator for MockSuite {
    fn mask_from_box(&self, image: &RasterImage, bbox: &BoundingBox) -> PortResult<BinaryMask> {
        BinaryMask::from_box(image.height(), image.width(), bbox)
            .map_err(|e| PortError::new(names::MASK_GENERATOR, e.to_string()))
    }
}

impl ReferringSegmenter for MockSuite {
    fn segment(&self, image: &RasterImage, prompt: &str) -> PortResult<BinaryMask> {
        let prompt_tokens = text::words(prompt);
        let mut best: Option<(usize, usize, std::cmp::Reverse<u8>, BoundingBox)> = None;
        for (code, bbox, entity) in self.labelled_boxes(image) {
            let mut forms: Vec<&str> = entity.categories.iter().map(String::as_str).collect();
            if entity.known_to_segmenter {
                forms.push(&entity.name);
            }
            let position = forms
                .iter()
                .filter_map(|f| text::last_phrase_position(&prompt_tokens, &text::words(f)))
                .max();
            if let Some(pos) = position {
                let key = (pos, bbox.area(), std::cmp::Reverse(code), bbox);
                if best.as_ref().is_none_or(|b| (key.0, key.1, key.2) > (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
        let (h, w) = image.shape();
        Ok(match best {
            Some((_, _, _, bbox)) => BinaryMask::from_box(h, w, &bbox).expect("scene box fits"),
            None => BinaryMask::empty(h, w),
        })
    }
}

/// A text generator backed by a closure, for scripted tests and examples.
pub struct FnTextGenerator<F>(pub F);

impl<F> TextGenerator for FnTextGenerator<F>
where
    F: Fn(&str) -> PortResult<String> + Send + Sync,
{
    fn generate(&self, prompt: &str, max_len: usize) -> PortResult<String> {
        (self.0)(prompt).map(|s| s.chars().take(max_len).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::cosine_similarity;

    fn bx(x0: usize, y0: usize, x1: usize, y1: usize) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn world() -> FixtureWorld {
        let a_docs = vec![
            WebDocument::new("https://news.example/a1", "A one", "A won the prize."),
            WebDocument::new("https://news.example/a2", "A two", "A again."),
            WebDocument::new("https://news.example/a3", "A three", "A thrice."),
        ];
        FixtureWorld {
            entities: vec![
                FixtureEntity::new("A", Some(1), &["robot"], true),
                FixtureEntity::new("B", Some(2), &["robot"], false),
            ],
            documents: vec![("A".into(), a_docs)],
            ..FixtureWorld::default()
        }
    }

    #[test]
    fn box_exact_mask_generator() {
        let ports = make_mock_suite(world()).unwrap();
        let a = bx(2, 3, 9, 8);
        let img = paint_scene("s", 16, 12, &[(1, a)]);
        let mask = ports.mask_generator.mask_from_box(&img, &a).unwrap();
        assert_eq!(mask, BinaryMask::from_box(12, 16, &a).unwrap());
    }

    #[test]
    fn crops_of_one_entity_embed_alike() {
        let ports = make_mock_suite(world()).unwrap();
        let a1 = paint_scene("one", 20, 20, &[(1, bx(1, 1, 8, 8)), (2, bx(10, 10, 19, 19))]);
        let a2 = paint_scene("two", 30, 16, &[(2, bx(0, 0, 5, 5)), (1, bx(12, 3, 28, 15))]);
        let c1 = a1.crop(&bx(1, 1, 8, 8)).unwrap();
        let c2 = a2.crop(&bx(12, 3, 28, 15)).unwrap();
        let e1 = ports.visual_embedder.embed(&c1).unwrap();
        let e2 = ports.visual_embedder.embed(&c2).unwrap();
        assert!(cosine_similarity(&e1, &e2).unwrap() > 0.9);
        let b = a1.crop(&bx(10, 10, 19, 19)).unwrap();
        let eb = ports.visual_embedder.embed(&b).unwrap();
        assert!(cosine_similarity(&e1, &eb).unwrap() < 0.5);
    }

    #[test]
    fn keyed_search_is_stable_and_truncated() {
        let ports = make_mock_suite(world()).unwrap();
        let docs = ports.web.search("A news", 2).unwrap();
        let urls: Vec<_> = docs.iter().map(|d| d.url.as_str()).collect();
        assert_eq!(urls, ["https://news.example/a1", "https://news.example/a2"]);
        assert!(ports.web.search("nothing here", 5).unwrap().is_empty());
    }

    #[test]
    fn segmenter_picks_last_mentioned_entity() {
        let ports = make_mock_suite(world()).unwrap();
        let img = paint_scene("s", 20, 10, &[(1, bx(0, 0, 5, 5)), (2, bx(10, 0, 20, 10))]);
        // B is unknown by name, so "A" is the only match
        let m = ports.segmenter.segment(&img, "segment B then A").unwrap();
        assert_eq!(m, BinaryMask::from_box(10, 20, &bx(0, 0, 5, 5)).unwrap());
        // shared category: larger entity wins
        let m = ports.segmenter.segment(&img, "the robot").unwrap();
        assert_eq!(m, BinaryMask::from_box(10, 20, &bx(10, 0, 20, 10)).unwrap());
        assert!(ports.segmenter.segment(&img, "the cat").unwrap().is_empty());
    }

    #[test]
    fn missing_entity_table_is_a_configuration_error() {
        let err = make_mock_suite(FixtureWorld::default()).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
        let mut w = world();
        w.entities[1].code = Some(1);
        assert!(matches!(make_mock_suite(w).err().unwrap(), Error::Config(_)));
    }

    #[test]
    fn detector_and_extractor_read_pixels() {
        let ports = make_mock_suite(world()).unwrap();
        let img = paint_scene("s", 20, 10, &[(2, bx(10, 0, 20, 10)), (1, bx(0, 2, 5, 5))]);
        let dets = ports.detector.detect(&img).unwrap();
        assert_eq!(dets.len(), 2);
        assert!(dets.iter().all(|d| d.label.is_none() && d.bbox.fits(20, 10)));
        let ents = ports.entity_extractor.extract(&img).unwrap();
        let labels: Vec<_> = ents.iter().map(|e| e.label.clone().unwrap()).collect();
        assert_eq!(labels, ["A", "B"]);
    }

    #[test]
    fn text_embedding_is_deterministic() {
        let ports = make_mock_suite(world()).unwrap();
        let a = ports.text_embedder.embed("electric scooter award").unwrap();
        let b = ports.text_embedder.embed("Electric  scooter award!").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 256);
    }
}
