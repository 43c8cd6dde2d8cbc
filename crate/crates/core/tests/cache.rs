mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{demo_ports, requests};
use rose::backends::{names, ResponseCache};
use rose::config::Config;
use rose::fixtures::demo_dataset;
use rose::pipeline::Pipeline;

fn files_under(dir: &std::path::Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path, ext));
        } else if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn warm_cache_serves_every_call() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    let (inner, probes) = demo_ports().instrumented();
    let ports = inner.cached(cache, Duration::ZERO);
    let pipeline = Pipeline::new(&Config::default()).unwrap();
    let reqs = requests(&demo_dataset());

    let cold = pipeline.run_batch(&ports, &reqs, 3).unwrap();
    assert!(probes.total_calls() > 0);
    probes.reset();
    let warm = pipeline.run_batch(&ports, &reqs, 3).unwrap();
    assert_eq!(probes.total_calls(), 0, "{:?}", probes.calls());
    for (a, b) in cold.iter().zip(&warm) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn tampered_entry_is_an_integrity_failure_not_a_wrong_answer() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    let ports = demo_ports().cached(cache, Duration::ZERO);
    let answer = ports.llm.generate("Decide whether answering the query needs information published after the knowledge cutoff.\nQuery: x", 50).unwrap();

    let bins = files_under(&dir.path().join(names::TEXT_GENERATOR), "bin");
    assert_eq!(bins.len(), 1);
    std::fs::write(&bins[0], b"\"tampered\"").unwrap();
    let err = ports
        .llm
        .generate("Decide whether answering the query needs information published after the knowledge cutoff.\nQuery: x", 50)
        .unwrap_err();
    assert!(err.message.contains("digest"), "{err}");
    assert_ne!(answer, "tampered");
}

#[test]
fn a_failed_call_is_not_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    let (inner, probes) = demo_ports().instrumented();
    let ports = inner.cached(cache.clone(), Duration::ZERO);
    probes.fail_only(Some(names::WEB_SEARCHER));
    assert!(ports.web.search("golden boot", 3).is_err());
    probes.fail_only(None);
    assert_eq!(ports.web.search("golden boot", 3).unwrap().len(), 2);
    assert_eq!(cache.stats().unwrap().per_port[names::WEB_SEARCHER], 1);
}
