mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{demo_ports, mutants, write_demo};
use rose::backends::{names, ResponseCache};
use rose::dataset::{load_dataset, load_trends, write_dataset, write_trends, EntityType, DATASET_FILE};
use rose::engine::{build_dataset, DropReason};
use rose::error::Error;
use rose::fixtures::{demo_config, demo_trends};

#[test]
fn demo_trends_yield_the_expected_samples() {
    let out = build_dataset(&demo_trends(), &demo_ports(), &demo_config()).unwrap();
    let r = &out.report;
    assert_eq!((r.queries, r.samples_attempted, r.samples_emitted, r.news_removed), (5, 13, 6, 1));
    let drops: Vec<(DropReason, usize)> = r.drops.iter().map(|(k, v)| (*k, *v)).collect();
    assert_eq!(
        drops,
        [
            (DropReason::NotSegmentable, 1),
            (DropReason::NoImages, 1),
            (DropReason::NoNews, 1),
            (DropReason::QuestionLeak, 2),
            (DropReason::LabelFailed, 2),
        ]
    );
    assert!(r.reconciles());
    let ids: Vec<&str> = out.samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["nest-0000", "nest-0001", "nest-0002", "nest-0003", "nest-0004", "nest-0005"]);
    let emerging = out.samples.iter().filter(|s| s.entity_type == EntityType::Emerging).count();
    assert_eq!(emerging, 4);
    for s in &out.samples {
        assert!(!s.question.to_lowercase().contains(&s.answer.to_lowercase()));
        assert_eq!(s.mask.shape(), s.image.shape());
    }
}

#[test]
fn output_is_identical_across_runs_workers_and_cache_state() {
    let cache_dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(cache_dir.path()).unwrap());
    let ports = demo_ports().cached(cache, Duration::ZERO);
    let mut parallel = demo_config();
    parallel.runtime.workers = 4;
    let mut files = Vec::new();
    for config in [demo_config(), demo_config(), parallel] {
        let out = build_dataset(&demo_trends(), &ports, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), &out.samples).unwrap();
        let images: Vec<Vec<u8>> = out
            .samples
            .iter()
            .map(|s| std::fs::read(dir.path().join("images").join(format!("{}.png", s.id))).unwrap())
            .collect();
        files.push((std::fs::read(path).unwrap(), images, serde_json::to_string(&out.report).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn emitted_dataset_loads_back() {
    let out = build_dataset(&demo_trends(), &demo_ports(), &demo_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_dataset(dir.path(), &out.samples).unwrap();
    let loaded = load_dataset(&path).unwrap();
    assert_eq!(loaded.len(), out.samples.len());
    for (a, b) in loaded.iter().zip(&out.samples) {
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.image.pixels(), b.image.pixels());
        assert_eq!(a.collected_at, b.collected_at);
    }
}

#[test]
fn classifier_outage_keeps_nothing() {
    let (ports, probes) = demo_ports().instrumented();
    probes.fail_only(Some(names::TEXT_GENERATOR));
    let out = build_dataset(&demo_trends(), &ports, &demo_config()).unwrap();
    assert!(out.samples.is_empty());
    assert_eq!(out.report.drops[&DropReason::NotSegmentable], 5);
    assert!(out.report.reconciles());
}

#[test]
fn every_mutant_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let content = write_demo(dir.path());
    let lines: Vec<&str> = content.lines().collect();
    let previous: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    for (name, mutant) in mutants(lines[1], previous["id"].as_str().unwrap()) {
        let mut mutated = lines.clone();
        mutated[1] = &mutant;
        std::fs::write(dir.path().join(DATASET_FILE), mutated.join("\n") + "\n").unwrap();
        match load_dataset(&dir.path().join(DATASET_FILE)) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 2, "{name}"),
            other => panic!("{name}: expected a validation error, got {other:?}"),
        }
    }
}

#[test]
fn trends_round_trip_and_report_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trends.jsonl");
    write_trends(&path, &demo_trends()).unwrap();
    assert_eq!(load_trends(&path).unwrap(), demo_trends());
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"term\": 3}\n");
    std::fs::write(&path, text).unwrap();
    match load_trends(&path) {
        Err(Error::Validation { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected a validation error, got {other:?}"),
    }
}
