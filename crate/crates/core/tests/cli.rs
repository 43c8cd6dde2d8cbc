use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rose::dataset::{write_dataset, write_png, write_trends};
use rose::fixtures::{demo_config, demo_dataset, demo_trends};

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &demo_dataset()).unwrap();
        write_trends(&dir.path().join("trends.jsonl"), &demo_trends()).unwrap();
        write_png(&dir.path().join("query.png"), &demo_dataset()[15].image).unwrap();
        std::fs::write(dir.path().join("demo.toml"), demo_config().to_toml()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn rose(&self, args: &[&str]) -> Output {
        let config = self.path("demo.toml");
        Command::new(env!("CARGO_BIN_EXE_rose"))
            .args(["--config", config.to_str().unwrap()])
            .args(args)
            .env_remove("ROSE_CACHE_DIR")
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUESTION: &str = "Which household helper did Aroha Labs release in 2025?";

#[test]
fn run_writes_three_files() {
    let f = Fixture::new();
    let out = f.path("run");
    let o = f.rose(&["run", "--image", s(&f.path("query.png")), "--query", QUESTION, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["answer.txt", "mask.rle", "trace.jsonl"]);
    assert_eq!(std::fs::read_to_string(out.join("answer.txt")).unwrap(), "Koru\n");
    let rle: rose::primitives::Rle = std::fs::read_to_string(out.join("mask.rle")).unwrap().trim().parse().unwrap();
    assert_eq!(rle.decode().unwrap(), demo_dataset()[15].mask);
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(trace.contains("\"correct\""));
}

#[test]
fn run_baseline_trace_has_no_retrieval() {
    let f = Fixture::new();
    let out = f.path("run");
    let o = f.rose(&[
        "run", "--image", s(&f.path("query.png")), "--query", QUESTION, "--out", s(&out), "--ablation", "baseline",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let stages: Vec<String> = trace
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["stage"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(stages, ["websense", "segment"]);
    assert_eq!(std::fs::read_to_string(out.join("answer.txt")).unwrap(), "\n");
}

#[test]
fn invalid_inputs_exit_with_one() {
    let f = Fixture::new();
    let out = f.path("x");
    let missing = f.rose(&["run", "--image", s(&f.path("nope.png")), "--query", "q", "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!out.exists());
    std::fs::write(f.path("bad.toml"), "[vpe]\nthreshold = 1\n").unwrap();
    let bad_config = Command::new(env!("CARGO_BIN_EXE_rose"))
        .args(["--config", s(&f.path("bad.toml")), "eval", "--dataset", s(&f.path("dataset.jsonl")), "--out", s(&out)])
        .output()
        .unwrap();
    assert_eq!(bad_config.status.code(), Some(1));
    assert!(stderr(&bad_config).contains("threshold"));
    assert_eq!(f.rose(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn corrupted_dataset_reports_its_line() {
    let f = Fixture::new();
    let path = f.path("dataset.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = lines[3].replace("\"novel\"", "\"famous\"").replace("\"emerging\"", "\"famous\"");
    std::fs::write(&path, lines.join("\n")).unwrap();
    let o = f.rose(&["eval", "--dataset", s(&path), "--out", s(&f.path("eval"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset.jsonl:4:"), "{}", stderr(&o));
}

#[test]
fn eval_prints_the_table_and_writes_reports() {
    let f = Fixture::new();
    let out = f.path("eval");
    let o = f.rose(&["eval", "--dataset", s(&f.path("dataset.jsonl")), "--out", s(&out), "--workers", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.lines().next().unwrap().starts_with("Method"));
    assert!(table.contains("rose"));
    for ext in ["jsonl", "json", "txt"] {
        assert!(out.join(format!("report.{ext}")).is_file());
    }
    let rows = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 20);
}

#[test]
fn ablation_sweep_writes_five_monotone_reports() {
    let f = Fixture::new();
    let out = f.path("sweep");
    let o = f.rose(&["eval", "--dataset", s(&f.path("dataset.jsonl")), "--out", s(&out), "--ablation", "all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let giou = |name: &str| {
        let text = std::fs::read_to_string(out.join(format!("report-{name}.json"))).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()["overall"]["giou"].as_f64().unwrap()
    };
    let (b, i, t, v, full) = (giou("baseline"), giou("irag"), giou("irag_tpe"), giou("irag_vpe"), giou("full"));
    assert!(full > t && t > i && i > b && v > i, "{b} {i} {t} {v} {full}");
    assert_eq!(stdout(&o).lines().count(), 7);
}

#[test]
fn two_stage_flag_evaluates_the_comparator() {
    let f = Fixture::new();
    let o = f.rose(&["eval", "--dataset", s(&f.path("dataset.jsonl")), "--out", s(&f.path("ts")), "--two-stage"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("two_stage"));
}

#[test]
fn build_and_dry_run() {
    let f = Fixture::new();
    let out = f.path("build");
    let dry = f.rose(&["build", "--trends", s(&f.path("trends.jsonl")), "--out", s(&out), "--dry-run"]);
    assert_eq!(dry.status.code(), Some(0));
    assert!(!out.join("dataset.jsonl").exists());

    let o = f.rose(&["build", "--trends", s(&f.path("trends.jsonl")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dataset = std::fs::read_to_string(out.join("dataset.jsonl")).unwrap();
    assert_eq!(dataset.lines().count(), 6);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("build_report.json")).unwrap()).unwrap();
    assert_eq!(report["samples_emitted"], 6);

    std::fs::write(f.path("bad.jsonl"), "{\"term\": \"ok\"}\nnot json\n").unwrap();
    let bad = f.rose(&["build", "--trends", s(&f.path("bad.jsonl")), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains(":2:"), "{}", stderr(&bad));
}

#[test]
fn commands_are_idempotent_over_a_warm_cache() {
    let f = Fixture::new();
    let cache = f.path("cache");
    let mut outputs = Vec::new();
    for pass in 0..2 {
        let out = f.path(&format!("pass{pass}"));
        let eval = f.rose(&[
            "eval", "--dataset", s(&f.path("dataset.jsonl")), "--out", s(&out.join("eval")), "--cache-dir", s(&cache),
        ]);
        assert_eq!(eval.status.code(), Some(0), "{}", stderr(&eval));
        let build = f.rose(&[
            "build", "--trends", s(&f.path("trends.jsonl")), "--out", s(&out.join("build")), "--cache-dir", s(&cache),
        ]);
        assert_eq!(build.status.code(), Some(0), "{}", stderr(&build));
        let files: Vec<Vec<u8>> = ["eval/report.jsonl", "eval/report.json", "build/dataset.jsonl", "build/build_report.json"]
            .iter()
            .map(|name| std::fs::read(out.join(name)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);

    let stats = f.rose(&["cache", "stats", "--cache-dir", s(&cache)]);
    let stats: serde_json::Value = serde_json::from_str(&stdout(&stats)).unwrap();
    assert!(stats["entries"].as_u64().unwrap() > 0);
    let clear = f.rose(&["cache", "clear", "--cache-dir", s(&cache)]);
    assert_eq!(clear.status.code(), Some(0));
    let stats = f.rose(&["cache", "stats", "--cache-dir", s(&cache)]);
    let stats: serde_json::Value = serde_json::from_str(&stdout(&stats)).unwrap();
    assert_eq!(stats["entries"], 0);
    assert_eq!(f.rose(&["cache", "stats"]).status.code(), Some(1));
}

#[test]
fn help_documents_configuration_keys() {
    for cmd in ["run", "eval", "build"] {
        let o = Command::new(env!("CARGO_BIN_EXE_rose")).args([cmd, "--help"]).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        let help = stdout(&o);
        for key in ["ruleset_path", "reference_images", "background_max_chars", "accept_threshold", "known_terms", "cache_dir"] {
            assert!(help.contains(key), "{cmd} --help lacks {key}");
        }
    }
}
