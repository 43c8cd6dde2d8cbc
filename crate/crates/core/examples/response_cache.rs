//! Route every port through the content-addressed response cache: the
//! second run is served from disk and returns identical results.
//!
//! Run with `cargo run --example response_cache`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rose::backends::mock::make_mock_suite;
use rose::backends::ResponseCache;
use rose::config::Config;
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::{Pipeline, UserRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cache = Arc::new(ResponseCache::open(dir.path())?);
    // simulate slow services: every cache miss waits 5 ms
    let ports = make_mock_suite(demo_world())?.cached(cache.clone(), Duration::from_millis(5));
    let pipeline = Pipeline::new(&Config::default())?;
    let requests: Vec<UserRequest> = demo_dataset()
        .into_iter()
        .map(|s| UserRequest::new(s.image, s.question))
        .collect::<Result<_, _>>()?;

    let mut masks = Vec::new();
    for pass in ["cold", "warm"] {
        let started = Instant::now();
        let results = pipeline.run_batch(&ports, &requests, 2)?;
        println!("{pass}: {:?}", started.elapsed());
        masks.push(results.into_iter().map(|r| r.map(|r| r.mask_rle()).ok()).collect::<Vec<_>>());
    }
    assert_eq!(masks[0], masks[1]);

    let stats = cache.stats()?;
    println!("{} entries, {} bytes", stats.entries, stats.bytes);
    for (port, n) in &stats.per_port {
        println!("  {port:<20} {n}");
    }
    println!("cleared {} entries", cache.clear()?);
    Ok(())
}
