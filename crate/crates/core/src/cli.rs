//! The `rose` command line: run the pipeline on one image, evaluate a
//! system on a dataset, build a dataset from trend queries, manage the cache.
//!
//! Exit status: 0 on success, 1 when an input or the configuration is
//! invalid, 2 when execution fails.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::backends::{Ports, ResponseCache};
use crate::config::{Config, CONFIG_REFERENCE};
use crate::dataset::{self, load_dataset, load_trends, write_dataset};
use crate::engine;
use crate::error::Error;
use crate::eval::{self, render_table, EvalReport};
use crate::fixtures::ports_from_config;
use crate::pipeline::{Ablation, Pipeline, UserRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const MASK_FILE: &str = "mask.rle";
pub const ANSWER_FILE: &str = "answer.txt";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const REPORT_STEM: &str = "report";
pub const BUILD_REPORT_FILE: &str = "build_report.json";

#[derive(Debug, Parser)]
#[command(name = "rose", version, about = "Retrieval-oriented segmentation enhancement", after_help = CONFIG_REFERENCE)]
pub struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Parallel samples (overrides runtime.workers)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Response cache directory (overrides ROSE_CACHE_DIR and backends.cache_dir)
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image for one query; writes mask.rle, answer.txt and trace.jsonl
    #[command(after_help = CONFIG_REFERENCE)]
    Run(RunArgs),
    /// Evaluate on a dataset; writes report.jsonl, report.json and report.txt
    #[command(after_help = CONFIG_REFERENCE)]
    Eval(EvalArgs),
    /// Build a dataset from trend queries; writes dataset.jsonl, images/ and build_report.json
    #[command(after_help = CONFIG_REFERENCE)]
    Build(BuildArgs),
    /// Inspect or clear the response cache
    #[command(subcommand, after_help = CONFIG_REFERENCE)]
    Cache(CacheCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input image (PNG)
    #[arg(long, value_name = "PNG")]
    pub image: PathBuf,
    /// The question about the image
    #[arg(long)]
    pub query: String,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Stage preset: baseline, irag, irag_tpe, irag_vpe or full (default: the configured switches)
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Validate the inputs and print the plan without calling any backend
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset file (dataset.jsonl)
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Stage preset, or `all` to sweep every preset
    #[arg(long)]
    pub ablation: Option<AblationChoice>,
    /// Evaluate the two-stage comparator (answer, then segment) instead
    #[arg(long, conflicts_with = "ablation")]
    pub two_stage: bool,
    /// Validate the dataset without evaluating
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Trend queries, one JSON record per line
    #[arg(long, value_name = "PATH")]
    pub trends: PathBuf,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Validate the inputs without building
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Remove every cached response
    Clear,
    /// Print entry counts per port
    Stats,
}

/// One preset or the full sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationChoice {
    One(Ablation),
    All,
}

impl std::str::FromStr for AblationChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "all" {
            Ok(AblationChoice::All)
        } else {
            s.parse().map(AblationChoice::One)
        }
    }
}

/// A reported failure and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.to_string()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.to_string()))
    }
}

/// Parse `args` (including the program name), execute, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).invalid()?,
        None => Config::default(),
    };
    if let Some(workers) = cli.workers {
        config.runtime.workers = workers;
    }
    config.validate().invalid()?;
    Ok(config)
}

fn ports(cli: &Cli, config: &Config) -> Result<Ports, Failure> {
    ports_from_config(config, cli.cache_dir.as_deref()).invalid()
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .runtime()
}

fn write(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| Error::io(path, e))
        .runtime()
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(args) => cmd_run(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Build(args) => cmd_build(cli, args),
        Command::Cache(cmd) => cmd_cache(cli, cmd),
    }
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let pipeline = match args.ablation {
        Some(a) => Pipeline::with_ablation(&config, a),
        None => Pipeline::new(&config),
    }
    .invalid()?;
    let image = dataset::read_png(&args.image).invalid()?;
    let request = UserRequest::new(image, args.query.clone()).invalid()?;
    if args.dry_run {
        let c = pipeline.config();
        println!(
            "would segment {} ({}x{}) with websense={} irag={} tpe={} vpe={} into {}",
            args.image.display(),
            request.image.width(),
            request.image.height(),
            c.websense.enabled,
            c.irag.enabled,
            c.tpe.enabled,
            c.vpe.enabled,
            args.out.display()
        );
        return Ok(());
    }
    let ports = ports(cli, &config)?;
    let result = pipeline.run_sample(&ports, &request).map_err(|f| {
        for line in f.trace_lines().lines() {
            log::error!("{line}");
        }
        Failure::Runtime(f.message)
    })?;
    create_dir(&args.out)?;
    write(&args.out.join(MASK_FILE), &format!("{}\n", result.mask_rle()))?;
    write(&args.out.join(ANSWER_FILE), &format!("{}\n", result.answer.as_deref().unwrap_or("")))?;
    write(&args.out.join(TRACE_FILE), &result.trace_lines())?;
    println!("answer: {}", result.answer.as_deref().unwrap_or("(none)"));
    println!("prompt: {}", result.prompt);
    println!("mask: {} foreground pixels", result.mask.count());
    if result.degraded() {
        println!("note: some stages degraded; see {}", args.out.join(TRACE_FILE).display());
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let samples = load_dataset(&args.dataset).invalid()?;
    if args.dry_run {
        println!("{}: {} valid samples", args.dataset.display(), samples.len());
        return Ok(());
    }
    let ports = ports(cli, &config)?;
    let workers = config.runtime.workers;
    let run = |ablation: Option<Ablation>| -> Result<EvalReport, Failure> {
        let (pipeline, name, rag) = match ablation {
            Some(a) => (Pipeline::with_ablation(&config, a).invalid()?, a.as_str(), a.uses_retrieval()),
            None => (Pipeline::new(&config).invalid()?, "rose", config.irag.enabled),
        };
        eval::evaluate_system(&samples, |req| pipeline.run_sample(&ports, req), name, rag, workers).runtime()
    };
    let reports: Vec<(String, EvalReport)> = if args.two_stage {
        let report =
            eval::run_two_stage_baseline(&samples, ports.llm.as_ref(), ports.segmenter.as_ref(), workers).runtime()?;
        vec![(REPORT_STEM.to_string(), report)]
    } else {
        match args.ablation {
            Some(AblationChoice::All) => Ablation::ALL
                .iter()
                .map(|a| Ok((format!("{REPORT_STEM}-{a}"), run(Some(*a))?)))
                .collect::<Result<_, Failure>>()?,
            Some(AblationChoice::One(a)) => vec![(REPORT_STEM.to_string(), run(Some(a))?)],
            None => vec![(REPORT_STEM.to_string(), run(None)?)],
        }
    };
    for (stem, report) in &reports {
        report.write(&args.out, stem).runtime()?;
    }
    let table = render_table(&reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>());
    if reports.len() > 1 {
        write(&args.out.join(format!("{REPORT_STEM}.txt")), &table)?;
    }
    print!("{table}");
    let failed: usize = reports.iter().map(|(_, r)| r.rows.iter().filter(|row| row.error.is_some()).count()).sum();
    if failed > 0 {
        log::warn!("{failed} sample runs failed and scored zero; see the report rows");
    }
    Ok(())
}

fn cmd_build(cli: &Cli, args: &BuildArgs) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let queries = load_trends(&args.trends).invalid()?;
    if args.dry_run {
        println!("{}: {} trend queries; nothing written", args.trends.display(), queries.len());
        return Ok(());
    }
    let ports = ports(cli, &config)?;
    let output = engine::build_dataset(&queries, &ports, &config).runtime()?;
    let path = write_dataset(&args.out, &output.samples).runtime()?;
    let report = serde_json::to_string_pretty(&output.report).runtime()?;
    write(&args.out.join(BUILD_REPORT_FILE), &(report + "\n"))?;
    println!(
        "{}: {} samples from {} queries ({} attempted)",
        path.display(),
        output.report.samples_emitted,
        output.report.queries,
        output.report.samples_attempted
    );
    for (reason, count) in &output.report.drops {
        println!("  dropped {count} ({})", reason.as_str());
    }
    Ok(())
}

fn cmd_cache(cli: &Cli, cmd: &CacheCommand) -> Result<(), Failure> {
    let config = load_config(cli)?;
    let dir = ResponseCache::resolve_dir(cli.cache_dir.as_deref(), config.backends.cache_dir.as_deref())
        .ok_or_else(|| Failure::Invalid("no cache directory: pass --cache-dir, set ROSE_CACHE_DIR or backends.cache_dir".into()))?;
    let cache = ResponseCache::open(&dir).runtime()?;
    match cmd {
        CacheCommand::Clear => {
            let removed = cache.clear().runtime()?;
            println!("removed {removed} entries from {}", dir.display());
        }
        CacheCommand::Stats => {
            let stats = cache.stats().runtime()?;
            println!("{}", serde_json::to_string_pretty(&stats).runtime()?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_config_key() {
        let help = Cli::command()
            .find_subcommand_mut("eval")
            .unwrap()
            .render_long_help()
            .to_string();
        for key in ["knowledge_cutoff", "chunk_overlap", "cluster_delta", "port_delay_ms", "workers"] {
            assert!(help.contains(key), "{key} missing");
        }
    }

    #[test]
    fn usage_errors_are_invalid_input() {
        assert_eq!(main_with_args(["rose", "frobnicate"]), EXIT_INVALID);
        assert_eq!(main_with_args(["rose", "eval", "--ablation", "nope", "--dataset", "x", "--out", "y"]), EXIT_INVALID);
        assert_eq!(main_with_args(["rose", "--help"]), EXIT_OK);
    }
}
