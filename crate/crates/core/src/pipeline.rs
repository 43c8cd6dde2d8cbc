//! The plug-and-play orchestrator: gate, retrieve, enhance the prompt,
//! segment, then verify and correct — recording every stage in a trace.
//!
//! Every retrieval-path failure degrades to segmenting with the raw query;
//! only a failing segmenter ends a sample without a mask.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backends::Ports;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::irag::{self, ResolvedAnswer};
use crate::primitives::{BinaryMask, RasterImage};
use crate::tpe::{self, BackgroundKnowledge, PromptTemplate};
use crate::vpe::{self, CorrectionResult, VerificationReport};
use crate::websense::{self, RetrievalDecision, Ruleset};

/// One image and the question asked about it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRequest {
    pub image: RasterImage,
    pub query: String,
}

impl UserRequest {
    pub fn new(image: RasterImage, query: impl Into<String>) -> Result<Self> {
        let query = query.into();
        if query.trim().is_empty() {
            return Err(Error::contract("user query is empty"));
        }
        Ok(Self { image, query })
    }
}

/// Stage switch presets matching the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// The wrapped segmenter alone, prompted with the raw query.
    Baseline,
    /// Retrieved answer in the baseline directive; no background, no VPE.
    Irag,
    IragTpe,
    IragVpe,
    /// Every stage, including the retrieval gate.
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Baseline,
        Ablation::Irag,
        Ablation::IragTpe,
        Ablation::IragVpe,
        Ablation::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Irag => "irag",
            Ablation::IragTpe => "irag_tpe",
            Ablation::IragVpe => "irag_vpe",
            Ablation::Full => "full",
        }
    }

    /// Set the four stage switches of `config` for this preset.
    pub fn apply(self, config: &mut Config) {
        let (websense, irag, tpe, vpe) = match self {
            Ablation::Baseline => (false, false, false, false),
            Ablation::Irag => (false, true, false, false),
            Ablation::IragTpe => (false, true, true, false),
            Ablation::IragVpe => (false, true, false, true),
            Ablation::Full => (true, true, true, true),
        };
        config.websense.enabled = websense;
        config.irag.enabled = irag;
        config.tpe.enabled = tpe;
        config.vpe.enabled = vpe;
    }

    pub fn uses_retrieval(self) -> bool {
        self != Ablation::Baseline
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Skipped,
    Degraded,
    Failed,
}

/// One trace line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub outcome: Outcome,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoseResult {
    pub mask: BinaryMask,
    pub answer: Option<String>,
    pub prompt: String,
    pub decision: RetrievalDecision,
    pub verification: Option<VerificationReport>,
    pub correction: Option<CorrectionResult>,
    /// Wall-clock time per stage; excluded from serialized output so reruns
    /// stay byte-identical.
    #[serde(skip)]
    pub stage_timings: BTreeMap<String, Duration>,
    pub trace: Vec<StageRecord>,
}

impl RoseResult {
    /// The mask in the run-length text format.
    pub fn mask_rle(&self) -> String {
        crate::primitives::rle_encode(&self.mask).to_string()
    }

    /// The trace as one JSON record per line.
    pub fn trace_lines(&self) -> String {
        trace_lines(&self.trace)
    }

    pub fn stages(&self) -> Vec<&str> {
        self.trace.iter().map(|r| r.stage.as_str()).collect()
    }

    pub fn degraded(&self) -> bool {
        self.trace.iter().any(|r| r.outcome == Outcome::Degraded)
    }
}

fn trace_lines(trace: &[StageRecord]) -> String {
    trace
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
        .collect()
}

/// A sample that ended without a mask, with the trace up to the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct SampleFailure {
    pub message: String,
    pub trace: Vec<StageRecord>,
}

impl SampleFailure {
    pub fn trace_lines(&self) -> String {
        trace_lines(&self.trace)
    }
}

struct Recorder {
    trace: Vec<StageRecord>,
    timings: BTreeMap<String, Duration>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            trace: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    fn record(&mut self, stage: &str, outcome: Outcome, detail: impl Into<String>, started: Instant) {
        *self.timings.entry(stage.to_string()).or_default() += started.elapsed();
        let detail = detail.into();
        match outcome {
            Outcome::Failed | Outcome::Degraded => log::info!("{stage}: {detail}"),
            Outcome::Ok | Outcome::Skipped => log::debug!("{stage}: {detail}"),
        }
        self.trace.push(StageRecord {
            stage: stage.to_string(),
            outcome,
            detail,
        });
    }
}

struct Retrieved {
    answer: ResolvedAnswer,
    references: Vec<RasterImage>,
}

/// A configured pipeline. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: Config,
    ruleset: Ruleset,
    template: PromptTemplate,
}

impl Pipeline {
    pub fn new(config: &Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            ruleset: config.ruleset()?,
            template: config.template()?,
        })
    }

    /// A pipeline whose stage switches follow `ablation`.
    pub fn with_ablation(config: &Config, ablation: Ablation) -> Result<Self> {
        let mut config = config.clone();
        ablation.apply(&mut config);
        Self::new(&config)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Run every stage for one request.
    pub fn run_sample(&self, ports: &Ports, request: &UserRequest) -> std::result::Result<RoseResult, SampleFailure> {
        let mut rec = Recorder::new();
        let cfg = &self.config;

        let started = Instant::now();
        let decision = if !cfg.irag.enabled {
            RetrievalDecision::forced(false)
        } else if !cfg.websense.enabled {
            RetrievalDecision::forced(true)
        } else {
            websense::decide(&request.query, &self.ruleset, ports.llm.as_ref(), cfg.websense.knowledge_cutoff)
        };
        let outcome = if decision.tier == websense::Tier::Config {
            Outcome::Skipped
        } else {
            Outcome::Ok
        };
        rec.record("websense", outcome, decision.to_string(), started);

        let retrieved = if decision.retrieve {
            match self.retrieve(ports, request, &mut rec) {
                Ok(r) => Some(r),
                Err(e) => {
                    rec.record(
                        "retrieval",
                        Outcome::Degraded,
                        format!("{e}; segmenting with the raw query"),
                        Instant::now(),
                    );
                    None
                }
            }
        } else {
            None
        };

        let prompt = match &retrieved {
            Some(r) => self.enhance_prompt(ports, request, &r.answer, &mut rec),
            None => request.query.clone(),
        };

        let started = Instant::now();
        let mask = match ports.segmenter.segment(&request.image, &prompt) {
            Ok(mask) if mask.shape() == request.image.shape() => mask,
            Ok(mask) => {
                let message = format!(
                    "segmenter returned a {:?} mask for a {:?} image",
                    mask.shape(),
                    request.image.shape()
                );
                rec.record("segment", Outcome::Failed, message.clone(), started);
                return Err(SampleFailure {
                    message,
                    trace: rec.trace,
                });
            }
            Err(e) => {
                rec.record("segment", Outcome::Failed, e.to_string(), started);
                return Err(SampleFailure {
                    message: e.to_string(),
                    trace: rec.trace,
                });
            }
        };
        rec.record("segment", Outcome::Ok, format!("{} foreground pixels", mask.count()), started);

        let mut result = RoseResult {
            mask,
            answer: retrieved.as_ref().map(|r| r.answer.text.clone()),
            prompt,
            decision,
            verification: None,
            correction: None,
            stage_timings: BTreeMap::new(),
            trace: Vec::new(),
        };
        if let Some(r) = &retrieved {
            if cfg.vpe.enabled {
                self.visual_enhance(ports, request, &r.references, &mut result, &mut rec);
            }
        }
        result.trace = rec.trace;
        result.stage_timings = rec.timings;
        Ok(result)
    }

    /// Run samples on `workers` threads. Results are aligned with the inputs
    /// and identical to a sequential run.
    pub fn run_batch(
        &self,
        ports: &Ports,
        samples: &[UserRequest],
        workers: usize,
    ) -> Result<Vec<std::result::Result<RoseResult, SampleFailure>>> {
        use rayon::prelude::*;

        if workers == 0 {
            return Err(Error::contract("run_batch needs at least one worker"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(|| samples.par_iter().map(|s| self.run_sample(ports, s)).collect()))
    }

    fn retrieve(&self, ports: &Ports, request: &UserRequest, rec: &mut Recorder) -> Result<Retrieved> {
        let cfg = &self.config.irag;

        let started = Instant::now();
        let queries = irag::generate_search_queries(&request.query, ports.llm.as_ref(), cfg.query_count);
        let outcome = if queries.len() < cfg.query_count {
            Outcome::Degraded
        } else {
            Outcome::Ok
        };
        rec.record("queries", outcome, queries.join(" | "), started);

        let started = Instant::now();
        let fetched = irag::fetch_documents(&queries, ports.web.as_ref(), cfg.search_fanout);
        if fetched.documents.is_empty() {
            let why = if fetched.failures.is_empty() {
                "no documents found".to_string()
            } else {
                fetched.failures.join("; ")
            };
            rec.record("search", Outcome::Failed, why.clone(), started);
            return Err(Error::Retrieval(why));
        }
        let outcome = if fetched.failures.is_empty() {
            Outcome::Ok
        } else {
            Outcome::Degraded
        };
        rec.record("search", outcome, format!("{} documents", fetched.documents.len()), started);

        let started = Instant::now();
        let mut chunks = Vec::new();
        for doc in &fetched.documents {
            chunks.extend(irag::split_chunks(doc, cfg.chunk_size, cfg.chunk_overlap)?);
        }
        let indexed = irag::build_vector_store(&chunks, ports.text_embedder.as_ref()).and_then(|store| {
            let query_vec = ports.text_embedder.embed(&request.query)?;
            let top = irag::retrieve_top_k(&store, &query_vec, cfg.top_k)?;
            Ok((store, top))
        });
        let (store, top) = match indexed {
            Ok(v) => v,
            Err(e) => {
                rec.record("index", Outcome::Failed, e.to_string(), started);
                return Err(e);
            }
        };
        let outcome = if store.skipped().is_empty() {
            Outcome::Ok
        } else {
            Outcome::Degraded
        };
        rec.record(
            "index",
            outcome,
            format!("{} of {} chunks indexed, top {} kept", store.len(), chunks.len(), top.len()),
            started,
        );

        let started = Instant::now();
        let summary = irag::map_reduce_answer(&top, &request.query, ports.llm.as_ref());
        if summary.is_empty() {
            rec.record("map_reduce", Outcome::Failed, "no answer candidates", started);
            return Err(Error::Retrieval("no answer candidates".into()));
        }
        let listing: Vec<String> = summary
            .candidates
            .iter()
            .map(|c| format!("{} ({:.3})", c.text, c.confidence))
            .collect();
        rec.record("map_reduce", Outcome::Ok, listing.join(", "), started);

        let started = Instant::now();
        let entities = match ports.entity_extractor.extract(&request.image) {
            Ok(entities) => {
                let labels: Vec<&str> = entities.iter().filter_map(|e| e.label.as_deref()).collect();
                rec.record("entities", Outcome::Ok, labels.join(", "), started);
                entities
            }
            Err(e) => {
                rec.record("entities", Outcome::Degraded, e.to_string(), started);
                Vec::new()
            }
        };

        let started = Instant::now();
        let answer = irag::resolve_answer(&summary, &entities, cfg.match_threshold)?;
        rec.record(
            "resolve",
            Outcome::Ok,
            format!("{} via {:?}", answer.text, answer.resolution),
            started,
        );

        let references = if self.config.vpe.enabled {
            let started = Instant::now();
            let references = irag::fetch_reference_images(&answer, ports.image_search.as_ref(), cfg.reference_images);
            let outcome = if references.is_empty() {
                Outcome::Degraded
            } else {
                Outcome::Ok
            };
            rec.record("references", outcome, format!("{} images", references.len()), started);
            references
        } else {
            Vec::new()
        };
        Ok(Retrieved { answer, references })
    }

    fn enhance_prompt(&self, ports: &Ports, request: &UserRequest, answer: &ResolvedAnswer, rec: &mut Recorder) -> String {
        if !self.config.tpe.enabled {
            let started = Instant::now();
            let prompt = tpe::baseline_prompt(&answer.text);
            rec.record("prompt", Outcome::Ok, prompt.clone(), started);
            return prompt;
        }
        let started = Instant::now();
        let background = tpe::fetch_background(
            answer,
            ports.web.as_ref(),
            ports.llm.as_ref(),
            self.config.tpe.background_max_chars,
        );
        let (outcome, detail) = match &background.source_url {
            Some(url) => (Outcome::Ok, format!("{} characters from {url}", background.text.chars().count())),
            None => (Outcome::Degraded, "no background found".to_string()),
        };
        rec.record("background", outcome, detail, started);

        let started = Instant::now();
        let empty = BackgroundKnowledge::default();
        let background = if background.is_empty() { &empty } else { &background };
        match tpe::build_prompt_with(&self.template, &request.query, answer, background) {
            Ok(p) => {
                rec.record("prompt", Outcome::Ok, p.text.clone(), started);
                p.text
            }
            Err(e) => {
                let prompt = tpe::baseline_prompt(&answer.text);
                rec.record("prompt", Outcome::Degraded, format!("{e}; using `{prompt}`"), started);
                prompt
            }
        }
    }

    fn visual_enhance(
        &self,
        ports: &Ports,
        request: &UserRequest,
        references: &[RasterImage],
        result: &mut RoseResult,
        rec: &mut Recorder,
    ) {
        let cfg = &self.config.vpe;
        let started = Instant::now();
        if references.is_empty() {
            rec.record("prototype", Outcome::Skipped, "no reference images; mask kept", started);
            return;
        }
        let ve = ports.visual_embedder.as_ref();
        let proto = vpe::cluster_largest(references, ve, cfg.cluster_delta)
            .and_then(|cluster| vpe::make_prototype(&cluster, ve));
        let proto = match proto {
            Ok(p) => {
                rec.record(
                    "prototype",
                    Outcome::Ok,
                    format!("{} of {} references", p.support_count, references.len()),
                    started,
                );
                p
            }
            Err(e) => {
                rec.record("prototype", Outcome::Degraded, format!("{e}; mask kept"), started);
                return;
            }
        };

        let started = Instant::now();
        let report = match vpe::verify_foreground(&request.image, &result.mask, &proto, ve, cfg.verify_threshold) {
            Ok(r) => r,
            Err(e) => {
                rec.record("verify", Outcome::Degraded, format!("{e}; mask kept"), started);
                return;
            }
        };
        let passed = report.passed;
        rec.record(
            "verify",
            Outcome::Ok,
            format!(
                "similarity {:.4} {} threshold {}",
                report.similarity,
                if passed { ">=" } else { "<" },
                report.threshold_used
            ),
            started,
        );
        result.verification = Some(report);
        if passed {
            return;
        }

        let started = Instant::now();
        let correction = vpe::correct_segmentation(
            &request.image,
            &proto,
            ports.detector.as_ref(),
            ve,
            ports.mask_generator.as_ref(),
            cfg.accept_threshold,
        );
        match correction {
            Ok(c) => {
                let detail = match (&c.chosen_entity, c.corrected) {
                    (Some(e), true) => format!("replaced mask with proposal {} ({:.4})", e.bbox, c.best_similarity),
                    (_, false) => format!("best proposal {:.4} below threshold; mask kept", c.best_similarity),
                    (None, true) => unreachable!("a correction always names its proposal"),
                };
                if let Some(mask) = &c.mask {
                    result.mask = mask.clone();
                }
                rec.record("correct", Outcome::Ok, detail, started);
                result.correction = Some(c);
            }
            Err(e) => rec.record("correct", Outcome::Degraded, format!("{e}; mask kept"), started),
        }
    }
}
