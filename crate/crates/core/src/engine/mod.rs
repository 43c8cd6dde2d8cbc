//! The automated data engine: turn trending search terms and their news into
//! (question, answer, image, mask) benchmark samples.
//!
//! Per term: keep only segmentable entities, collect single-entity reference
//! images and multi-entity scene images, deduplicate the news, write one
//! question per news item, and auto-label every scene with the same
//! prototype-and-proposal procedure the pipeline uses for mask correction.

mod news;

use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

pub use news::dedup_news;

use crate::backends::{ImageSearcher, ObjectDetector, Ports, PromptableMaskGenerator, TextGenerator, VisualEmbedder};
use crate::config::Config;
use crate::dataset::{EntityType, NestSample, TrendQuery};
use crate::error::{Error, Result};
use crate::primitives::{BinaryMask, RasterImage, WebDocument};
use crate::text;
use crate::vpe;

/// Segmentability classification prompt.
pub const FILTER_TEMPLATE: &str = "Does the search term name a concrete entity that can be segmented in a photo, such as a person or a product?
Term: {term}
Answer YES or NO.";

/// Co-occurring entity proposal prompt.
pub const ENHANCE_TEMPLATE: &str = "List entities that often appear in photos together with the given entity, such as teammates or rival products.
Entity: {term}
Reply with the names on one line separated by spaces.";

/// Question generation prompt.
pub const QUESTION_TEMPLATE: &str = "Write one natural question about the news below whose answer is the given entity. Do not mention the entity.
Entity: {answer}
News: {text}";

const QUESTION_RETRY_NOTE: &str = "\nYour previous question named the entity. Write a new question that does not name it.";
const ENHANCE_RETRY_NOTE: &str = "\nPropose different entities than the given one.";
const ENHANCE_FALLBACK: &str = " with others";

static YES_NO: LazyLock<regex::Regex> = LazyLock::new(|| {
    RegexBuilder::new(r"\b(yes|no)\b")
        .case_insensitive(true)
        .build()
        .expect("valid regex")
});

/// Why an attempted sample was not emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NotSegmentable,
    NoImages,
    NoNews,
    QuestionLeak,
    LabelFailed,
    PortFailure,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NotSegmentable => "not_segmentable",
            DropReason::NoImages => "no_images",
            DropReason::NoNews => "no_news",
            DropReason::QuestionLeak => "question_leak",
            DropReason::LabelFailed => "label_failed",
            DropReason::PortFailure => "port_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPair {
    pub original: String,
    pub enhanced: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaDraft {
    pub question: String,
    pub answer: String,
    pub source_doc: WebDocument,
}

/// Result of the segmentability filter.
#[derive(Debug, Clone, Default)]
pub struct Filtered {
    pub kept: Vec<TrendQuery>,
    pub rejected: Vec<TrendQuery>,
    /// Port failures; a failing classifier rejects the term.
    pub errors: Vec<String>,
}

/// Keep the terms the language model calls segmentable, in input order.
/// Unparseable or failed classifications reject the term.
pub fn filter_segmentable_queries(queries: &[TrendQuery], llm: &dyn TextGenerator) -> Filtered {
    let mut out = Filtered::default();
    for q in queries {
        let prompt = FILTER_TEMPLATE.replace("{term}", &q.term);
        let keep = match llm.generate(&prompt, 16) {
            Ok(reply) => YES_NO
                .find(&reply)
                .is_some_and(|m| m.as_str().eq_ignore_ascii_case("yes")),
            Err(e) => {
                out.errors.push(format!("{}: {e}", q.term));
                false
            }
        };
        if keep {
            out.kept.push(q.clone());
        } else {
            out.rejected.push(q.clone());
        }
    }
    out
}

/// Append co-occurring entities to the term so image search favors scenes
/// with several entities. Proposals that add nothing are retried once, then
/// replaced by a generic suffix.
pub fn enhance_query(q: &str, llm: &dyn TextGenerator) -> QueryPair {
    let original = q.trim().to_string();
    let base = ENHANCE_TEMPLATE.replace("{term}", &original);
    let own = text::token_set(&original);
    for prompt in [base.clone(), base + ENHANCE_RETRY_NOTE] {
        let proposal = match llm.generate(&prompt, 256) {
            Ok(reply) => reply.split_whitespace().collect::<Vec<_>>().join(" "),
            Err(e) => {
                log::warn!("query enhancement for `{original}` failed: {e}");
                break;
            }
        };
        let adds_something = !text::token_set(&proposal).is_subset(&own);
        if adds_something {
            return QueryPair {
                enhanced: format!("{original} {proposal}"),
                original,
            };
        }
    }
    QueryPair {
        enhanced: format!("{original}{ENHANCE_FALLBACK}"),
        original,
    }
}

/// Single-entity reference images and multi-entity scene images for a term.
#[derive(Debug, Clone, Default)]
pub struct ImageSets {
    pub single: Vec<RasterImage>,
    pub multi: Vec<RasterImage>,
}

/// `single`: the largest visual cluster among images of the bare term.
/// `multi`: images of the enhanced query with at least two detections.
pub fn collect_and_filter_images(
    pair: &QueryPair,
    isearch: &dyn ImageSearcher,
    vembedder: &dyn VisualEmbedder,
    detector: &dyn ObjectDetector,
    k: usize,
    cluster_delta: f64,
) -> Result<ImageSets> {
    if k == 0 {
        return Err(Error::contract("image fan-out must be at least 1"));
    }
    let originals = isearch.search(&pair.original, k)?;
    let single = if originals.is_empty() {
        Vec::new()
    } else {
        vpe::cluster_largest(&originals, vembedder, cluster_delta)?
    };
    let mut multi = Vec::new();
    for image in isearch.search(&pair.enhanced, k)? {
        if detector.detect(&image)?.len() >= 2 {
            multi.push(image);
        }
    }
    Ok(ImageSets { single, multi })
}

/// Outcome of question generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionOutcome {
    Draft(VqaDraft),
    /// Every attempt named the answer (after normalization).
    Leaked,
    Failed(String),
}

/// Whether `question` names `answer`, ignoring case, spacing and punctuation.
pub fn leaks_answer(question: &str, answer: &str) -> bool {
    let answer = text::compact(answer);
    !answer.is_empty() && text::compact(question).contains(&answer)
}

/// Ask for a question about `doc` whose answer is `answer`; retry once if the
/// question names the answer.
pub fn generate_question(doc: &WebDocument, answer: &str, llm: &dyn TextGenerator) -> Result<QuestionOutcome> {
    if answer.trim().is_empty() {
        return Err(Error::contract("question generation needs an answer"));
    }
    let news = if doc.snippet.trim().is_empty() {
        text::strip_html(&doc.body)
    } else {
        doc.snippet.trim().to_string()
    };
    let base = QUESTION_TEMPLATE.replace("{answer}", answer).replace("{text}", &news);
    for prompt in [base.clone(), base + QUESTION_RETRY_NOTE] {
        let question = match llm.generate(&prompt, 512) {
            Ok(q) => q.split_whitespace().collect::<Vec<_>>().join(" "),
            Err(e) => return Ok(QuestionOutcome::Failed(e.to_string())),
        };
        if !question.is_empty() && !leaks_answer(&question, answer) {
            return Ok(QuestionOutcome::Draft(VqaDraft {
                question,
                answer: answer.to_string(),
                source_doc: doc.clone(),
            }));
        }
    }
    Ok(QuestionOutcome::Leaked)
}

/// Label the answer entity in `image`: build a prototype from the references
/// and run the proposal-correction procedure. `None` when no proposal reaches `tau`.
pub fn auto_label(
    image: &RasterImage,
    reference_images: &[RasterImage],
    detector: &dyn ObjectDetector,
    vembedder: &dyn VisualEmbedder,
    maskgen: &dyn PromptableMaskGenerator,
    tau: f64,
) -> Result<Option<BinaryMask>> {
    let proto = vpe::make_prototype(reference_images, vembedder)?;
    let correction = vpe::correct_segmentation(image, &proto, detector, vembedder, maskgen, tau)?;
    Ok(correction.mask.filter(|m| !m.is_empty()))
}

/// Novel unless the answer is one of the terms the backbone already knows.
pub fn classify_entity(answer: &str, known_terms: &[String]) -> EntityType {
    let answer = text::normalize(answer);
    if known_terms.iter().any(|t| text::normalize(t) == answer) {
        EntityType::Emerging
    } else {
        EntityType::Novel
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub term: String,
    pub enhanced: Option<String>,
    pub emitted: usize,
    pub attempted: usize,
    pub drops: BTreeMap<DropReason, usize>,
    pub news_kept: usize,
    pub news_removed: usize,
    pub notes: Vec<String>,
}

impl QueryReport {
    fn drop(&mut self, reason: DropReason, count: usize, note: impl Into<String>) {
        *self.drops.entry(reason).or_default() += count;
        self.attempted += count;
        self.notes.push(note.into());
    }
}

/// Drop accounting for a build: `samples_emitted + Σ drops == samples_attempted`.
///
/// A term dropped before sample construction counts as one attempt. Otherwise
/// each (news representative, scene image) pair is one attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub queries: usize,
    pub samples_attempted: usize,
    pub samples_emitted: usize,
    pub drops: BTreeMap<DropReason, usize>,
    pub news_removed: usize,
    pub per_query: Vec<QueryReport>,
}

impl BuildReport {
    pub fn reconciles(&self) -> bool {
        self.samples_emitted + self.drops.values().sum::<usize>() == self.samples_attempted
    }
}

pub struct BuildOutput {
    pub samples: Vec<NestSample>,
    pub report: BuildReport,
}

struct Emitted {
    draft: VqaDraft,
    image: RasterImage,
    mask: BinaryMask,
    category: String,
}

fn build_one(query: &TrendQuery, ports: &Ports, config: &Config) -> (Vec<Emitted>, QueryReport) {
    let mut report = QueryReport {
        term: query.term.clone(),
        ..QueryReport::default()
    };
    let engine = &config.engine;
    let pair = enhance_query(&query.term, ports.llm.as_ref());
    report.enhanced = Some(pair.enhanced.clone());

    let sets = match collect_and_filter_images(
        &pair,
        ports.image_search.as_ref(),
        ports.visual_embedder.as_ref(),
        ports.detector.as_ref(),
        engine.image_fanout,
        config.vpe.cluster_delta,
    ) {
        Ok(sets) => sets,
        Err(e) => {
            report.drop(DropReason::PortFailure, 1, format!("image collection failed: {e}"));
            return (Vec::new(), report);
        }
    };
    if sets.single.is_empty() || sets.multi.is_empty() {
        report.drop(
            DropReason::NoImages,
            1,
            format!("{} reference and {} scene images", sets.single.len(), sets.multi.len()),
        );
        return (Vec::new(), report);
    }

    let news = dedup_news(&query.news, engine.window_days, engine.dedup_threshold);
    report.news_kept = news.len();
    report.news_removed = query.news.len() - news.len();
    if news.is_empty() {
        report.drop(DropReason::NoNews, 1, "no news items");
        return (Vec::new(), report);
    }

    let mut labels = Vec::with_capacity(sets.multi.len());
    for image in &sets.multi {
        let label = auto_label(
            image,
            &sets.single,
            ports.detector.as_ref(),
            ports.visual_embedder.as_ref(),
            ports.mask_generator.as_ref(),
            engine.label_threshold,
        );
        labels.push(label.map_err(|e| e.to_string()));
    }

    let mut emitted = Vec::new();
    for doc in &news {
        let draft = match generate_question(doc, &query.term, ports.llm.as_ref()) {
            Ok(QuestionOutcome::Draft(d)) => d,
            Ok(QuestionOutcome::Leaked) => {
                report.drop(DropReason::QuestionLeak, sets.multi.len(), format!("{}: question named the answer", doc.url));
                continue;
            }
            Ok(QuestionOutcome::Failed(e)) => {
                report.drop(DropReason::PortFailure, sets.multi.len(), format!("{}: {e}", doc.url));
                continue;
            }
            Err(e) => {
                report.drop(DropReason::PortFailure, sets.multi.len(), format!("{}: {e}", doc.url));
                continue;
            }
        };
        for (image, label) in sets.multi.iter().zip(&labels) {
            match label {
                Ok(Some(mask)) => {
                    report.attempted += 1;
                    report.emitted += 1;
                    emitted.push(Emitted {
                        draft: draft.clone(),
                        image: image.clone(),
                        mask: mask.clone(),
                        category: query.category.clone(),
                    });
                }
                Ok(None) => report.drop(DropReason::LabelFailed, 1, format!("{}: no proposal matched", image.id)),
                Err(e) => report.drop(DropReason::PortFailure, 1, format!("{}: {e}", image.id)),
            }
        }
    }
    (emitted, report)
}

/// Build benchmark samples from trend queries. Terms are processed
/// independently (on `config.runtime.workers` threads); sample ids are
/// assigned in input order, so output does not depend on the worker count.
pub fn build_dataset(queries: &[TrendQuery], ports: &Ports, config: &Config) -> Result<BuildOutput> {
    use rayon::prelude::*;

    let started: DateTime<Utc> = Utc::now();
    let filtered = filter_segmentable_queries(queries, ports.llm.as_ref());
    let kept: std::collections::BTreeSet<&str> = filtered.kept.iter().map(|q| q.term.as_str()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.runtime.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(Vec<Emitted>, QueryReport)> = pool.install(|| {
        queries
            .par_iter()
            .map(|q| {
                if kept.contains(q.term.as_str()) {
                    build_one(q, ports, config)
                } else {
                    let mut report = QueryReport {
                        term: q.term.clone(),
                        ..QueryReport::default()
                    };
                    let note = filtered
                        .errors
                        .iter()
                        .find(|e| e.starts_with(&format!("{}:", q.term)))
                        .cloned()
                        .unwrap_or_else(|| "classified as not segmentable".into());
                    report.drop(DropReason::NotSegmentable, 1, note);
                    (Vec::new(), report)
                }
            })
            .collect()
    });

    let mut report = BuildReport {
        queries: queries.len(),
        ..BuildReport::default()
    };
    let mut samples = Vec::new();
    for (emitted, query_report) in results {
        for e in emitted {
            let id = format!("nest-{:04}", samples.len());
            let collected_at = e
                .draft
                .source_doc
                .published_at
                .or(config.engine.collected_at)
                .unwrap_or(started);
            let mut image = e.image;
            image.id = id.clone();
            samples.push(NestSample {
                id,
                image,
                entity_type: classify_entity(&e.draft.answer, &config.engine.known_terms),
                question: e.draft.question,
                answer: e.draft.answer,
                mask: e.mask,
                category: e.category,
                collected_at,
                source_url: e.draft.source_doc.url,
            });
        }
        report.samples_attempted += query_report.attempted;
        report.samples_emitted += query_report.emitted;
        report.news_removed += query_report.news_removed;
        for (reason, count) in &query_report.drops {
            *report.drops.entry(*reason).or_default() += count;
        }
        report.per_query.push(query_report);
    }
    debug_assert!(report.reconciles());
    Ok(BuildOutput { samples, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::FnTextGenerator;
    use crate::backends::PortResult;
    use crate::error::PortError;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn trend(term: &str) -> TrendQuery {
        TrendQuery {
            term: term.into(),
            category: "misc".into(),
            related_terms: vec![],
            news: vec![],
        }
    }

    fn llm(f: impl Fn(&str) -> PortResult<String> + Send + Sync) -> FnTextGenerator<impl Fn(&str) -> PortResult<String> + Send + Sync> {
        FnTextGenerator(f)
    }

    #[test]
    fn filter_is_fail_closed_and_ordered() {
        let classifier = llm(|p: &str| {
            Ok(if p.contains("Term: Google stock") {
                "NO".into()
            } else if p.contains("Term: ???") {
                "maybe".into()
            } else {
                "Yes, it is a person.".into()
            })
        });
        let out = filter_segmentable_queries(&[trend("Google stock"), trend("Lamine Yamal"), trend("???"), trend("Zeekr 7X")], &classifier);
        let kept: Vec<_> = out.kept.iter().map(|q| q.term.as_str()).collect();
        assert_eq!(kept, ["Lamine Yamal", "Zeekr 7X"]);
        assert_eq!(out.rejected.len(), 2);
        let down = llm(|_: &str| Err(PortError::new("text_generator", "down")));
        let out = filter_segmentable_queries(&[trend("Lamine Yamal")], &down);
        assert!(out.kept.is_empty());
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn enhancement_rules() {
        let proposer = llm(|_: &str| Ok("Neymar Messi".into()));
        let pair = enhance_query("Mbappé", &proposer);
        for name in ["Mbappé", "Neymar", "Messi"] {
            assert!(pair.enhanced.contains(name));
        }
        let calls = AtomicUsize::new(0);
        let echo = llm(|_: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("mbappé".into())
        });
        assert_eq!(enhance_query("Mbappé", &echo).enhanced, "Mbappé with others");
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        let empty = llm(|_: &str| Ok("  ".into()));
        assert_eq!(enhance_query("Mbappé", &empty).enhanced, "Mbappé with others");
    }

    #[test]
    fn question_leak_rules() {
        let doc = WebDocument::new("u", "The SU7 sold out in a day.", "");
        let clean = llm(|_: &str| Ok("Which car sold out in a day?".into()));
        assert!(matches!(generate_question(&doc, "SU7", &clean).unwrap(), QuestionOutcome::Draft(_)));
        let leaky = llm(|_: &str| Ok("Did the su-7 sell out?".into()));
        assert_eq!(generate_question(&doc, "SU7", &leaky).unwrap(), QuestionOutcome::Leaked);
        let calls = AtomicUsize::new(0);
        let second_try = llm(|_: &str| {
            Ok(if calls.fetch_add(1, Ordering::SeqCst) == 0 { "What is the SU7?" } else { "Which car sold out?" }.into())
        });
        assert!(matches!(generate_question(&doc, "SU7", &second_try).unwrap(), QuestionOutcome::Draft(_)));
    }

    #[test]
    fn entity_split_uses_known_terms() {
        let known = vec!["Lionel Messi".to_string()];
        assert_eq!(classify_entity("lionel messi", &known), EntityType::Emerging);
        assert_eq!(classify_entity("Lamine Yamal", &known), EntityType::Novel);
    }
}
