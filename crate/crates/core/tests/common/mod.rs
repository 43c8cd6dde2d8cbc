//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::Path;

use rose::backends::mock::make_mock_suite;
use rose::backends::Ports;
use rose::config::Config;
use rose::dataset::{write_dataset, NestSample};
use rose::eval::{evaluate_system, EvalReport};
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::{Ablation, Pipeline, UserRequest};

pub fn demo_ports() -> Ports {
    make_mock_suite(demo_world()).expect("demo world is valid")
}

pub fn requests(samples: &[NestSample]) -> Vec<UserRequest> {
    samples
        .iter()
        .map(|s| UserRequest::new(s.image.clone(), s.question.clone()).expect("demo questions are non-empty"))
        .collect()
}

pub fn evaluate(ports: &Ports, samples: &[NestSample], ablation: Ablation, workers: usize) -> EvalReport {
    let pipeline = Pipeline::with_ablation(&Config::default(), ablation).expect("default config is valid");
    evaluate_system(
        samples,
        |r| pipeline.run_sample(ports, r),
        ablation.as_str(),
        ablation.uses_retrieval(),
        workers,
    )
    .expect("evaluation runs")
}

/// Write the demo dataset into `dir` and return the dataset file's text.
pub fn write_demo(dir: &Path) -> String {
    let path = write_dataset(dir, &demo_dataset()).expect("dataset written");
    std::fs::read_to_string(path).expect("dataset readable")
}

/// Corruptions of one dataset line, each of which a loader must reject.
/// `line` is a valid record; `previous_id` is the id on the line before it.
pub fn mutants(line: &str, previous_id: &str) -> Vec<(&'static str, String)> {
    let record: serde_json::Value = serde_json::from_str(line).expect("valid record");
    let with = |key: &str, value: serde_json::Value| {
        let mut r = record.clone();
        r[key] = value;
        r.to_string()
    };
    let answer = record["answer"].as_str().unwrap_or_default().to_string();
    let shape = record["mask_shape"].clone();
    let (h, w) = (shape[0].as_u64().unwrap_or(0), shape[1].as_u64().unwrap_or(0));
    vec![
        ("truncated json", line[..line.len() / 2].to_string()),
        ("unknown field", with("extra", serde_json::json!(1))),
        ("empty question", with("question", serde_json::json!("  "))),
        ("bad entity type", with("entity_type", serde_json::json!("famous"))),
        ("rle grammar", with("mask_rle", serde_json::json!(format!("{h}x{w}:abc")))),
        ("shape disagrees with rle", with("mask_shape", serde_json::json!([h + 1, w]))),
        ("rle sum", with("mask_rle", serde_json::json!(format!("{h}x{w}:5,10")))),
        ("empty mask", with("mask_rle", serde_json::json!(format!("{h}x{w}:{}", h * w)))),
        ("answer leak", with("question", serde_json::json!(format!("Where is {answer}?")))),
        ("duplicate id", with("id", serde_json::json!(previous_id))),
    ]
}
