//! Run configuration, read from a TOML document.
//!
//! Every section and key is optional; omitted keys take the defaults below.
//! Unknown keys are rejected so typos surface as configuration errors.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tpe::{PromptTemplate, DEFAULT_TEMPLATE};
use crate::websense::{default_cutoff, Ruleset};

/// Reference for every configuration key, shown by the command-line help.
pub const CONFIG_REFERENCE: &str = "\
Configuration keys (TOML; every key optional):
  [websense]
    enabled               run the retrieval gate (default true)
    knowledge_cutoff      backbone knowledge cutoff date (default 2023-12-31)
    ruleset_path          rule file, one `verdict<TAB>pattern` per line (default: built-in rules)
  [irag]
    enabled               retrieve answers from the web (default true)
    chunk_size            characters per chunk (default 1200)
    chunk_overlap         characters shared by consecutive chunks (default 200)
    top_k                 chunks passed to answer synthesis (default 8)
    search_fanout         documents requested per search query (default 5)
    query_count           search queries including the original (default 3)
    reference_images      reference images fetched for the answer (default 8)
    match_threshold       token-overlap threshold for answer matching (default 1.0)
  [tpe]
    enabled               add background knowledge to the prompt (default true)
    template              prompt template with {query}, {answer}, {background} and optional [..] groups
    background_max_chars  background length limit (default 600)
  [vpe]
    enabled               verify and correct masks against a visual prototype (default true)
    cluster_delta         single-link cosine-distance merge threshold (default 0.3)
    verify_threshold      similarity a mask needs to be kept (default 0.5)
    accept_threshold      similarity a correction needs to be accepted (default 0.5)
  [engine]
    image_fanout          images requested per trend query (default 8)
    window_days           news deduplication window in days (default 3)
    dedup_threshold       snippet Jaccard similarity treated as duplicate (default 0.8)
    label_threshold       similarity an auto-label needs (default 0.5)
    known_terms           terms the backbone already knows; answers matching one are `emerging`
    collected_at          timestamp recorded on samples whose news item has none (default: build start)
  [backends]
    kind                  port implementation: `mock` (default)
    fixture               fixture world for the mock backend: `demo` (default)
    cache_dir             response cache directory (env ROSE_CACHE_DIR overrides; unset disables caching)
    port_delay_ms         delay before each uncached port call (default 0)
  [runtime]
    workers               parallel samples (default 1)
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WebsenseConfig {
    pub enabled: bool,
    pub knowledge_cutoff: NaiveDate,
    pub ruleset_path: Option<PathBuf>,
}

impl Default for WebsenseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            knowledge_cutoff: default_cutoff(),
            ruleset_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IragConfig {
    pub enabled: bool,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub top_k: usize,
    pub search_fanout: usize,
    pub query_count: usize,
    pub reference_images: usize,
    pub match_threshold: f64,
}

impl Default for IragConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            chunk_size: 1200,
            chunk_overlap: 200,
            top_k: 8,
            search_fanout: 5,
            query_count: 3,
            reference_images: 8,
            match_threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub enabled: bool,
    pub template: String,
    pub background_max_chars: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            template: DEFAULT_TEMPLATE.to_string(),
            background_max_chars: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VpeConfig {
    pub enabled: bool,
    pub cluster_delta: f64,
    pub verify_threshold: f64,
    pub accept_threshold: f64,
}

impl Default for VpeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            cluster_delta: crate::vpe::DEFAULT_CLUSTER_DELTA,
            verify_threshold: crate::vpe::DEFAULT_VERIFY_THRESHOLD,
            accept_threshold: crate::vpe::DEFAULT_ACCEPT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub image_fanout: usize,
    pub window_days: u32,
    pub dedup_threshold: f64,
    pub label_threshold: f64,
    pub known_terms: Vec<String>,
    pub collected_at: Option<DateTime<Utc>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            image_fanout: 8,
            window_days: 3,
            dedup_threshold: 0.8,
            label_threshold: 0.5,
            known_terms: Vec::new(),
            collected_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub kind: String,
    pub fixture: String,
    pub cache_dir: Option<PathBuf>,
    pub port_delay_ms: u64,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            kind: "mock".into(),
            fixture: "demo".into(),
            cache_dir: None,
            port_delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub workers: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub websense: WebsenseConfig,
    pub irag: IragConfig,
    pub tpe: TpeConfig,
    pub vpe: VpeConfig,
    pub engine: EngineConfig,
    pub backends: BackendsConfig,
    pub runtime: RuntimeConfig,
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be within [0, 1], got {v}")))
    }
}

impl Config {
    /// Parse and validate a TOML document. Relative paths inside it resolve
    /// against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut config: Config = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if let (Some(base), Some(path)) = (base_dir, config.websense.ruleset_path.as_mut()) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let (Some(base), Some(path)) = (base_dir, config.backends.cache_dir.as_mut()) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.irag;
        if i.chunk_size == 0 || i.chunk_overlap >= i.chunk_size {
            return Err(Error::config("irag.chunk_size must exceed irag.chunk_overlap"));
        }
        for (name, v) in [
            ("irag.top_k", i.top_k),
            ("irag.search_fanout", i.search_fanout),
            ("irag.query_count", i.query_count),
            ("irag.reference_images", i.reference_images),
            ("tpe.background_max_chars", self.tpe.background_max_chars),
            ("engine.image_fanout", self.engine.image_fanout),
            ("runtime.workers", self.runtime.workers),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        unit("irag.match_threshold", i.match_threshold)?;
        if i.match_threshold == 0.0 {
            return Err(Error::config("irag.match_threshold must be positive"));
        }
        unit("engine.dedup_threshold", self.engine.dedup_threshold)?;
        for (name, v) in [
            ("vpe.verify_threshold", self.vpe.verify_threshold),
            ("vpe.accept_threshold", self.vpe.accept_threshold),
            ("engine.label_threshold", self.engine.label_threshold),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be within [-1, 1], got {v}")));
            }
        }
        if !(0.0..=2.0).contains(&self.vpe.cluster_delta) {
            return Err(Error::config("vpe.cluster_delta must be within [0, 2]"));
        }
        if self.backends.kind != "mock" {
            return Err(Error::config(format!(
                "backends.kind `{}` is not available; this build ships the `mock` backend",
                self.backends.kind
            )));
        }
        self.template()?;
        self.ruleset()?;
        Ok(())
    }

    /// The compiled prompt template.
    pub fn template(&self) -> Result<PromptTemplate> {
        PromptTemplate::parse(&self.tpe.template)
    }

    /// The configured ruleset, or the built-in one.
    pub fn ruleset(&self) -> Result<Ruleset> {
        match &self.websense.ruleset_path {
            Some(path) => Ruleset::load(path),
            None => Ok(Ruleset::default()),
        }
    }
}
