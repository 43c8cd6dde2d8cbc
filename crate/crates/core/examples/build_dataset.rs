//! Build benchmark samples from trend queries: filter, enhance, collect and
//! label images, deduplicate news and write questions. Prints the drop
//! accounting and writes the dataset to a temporary directory.
//!
//! Run with `cargo run --example build_dataset`.

use rose::backends::mock::make_mock_suite;
use rose::dataset::{load_dataset, write_dataset};
use rose::engine::build_dataset;
use rose::fixtures::{demo_config, demo_trends, demo_world};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let output = build_dataset(&demo_trends(), &ports, &demo_config())?;
    let report = &output.report;
    println!(
        "{} queries, {} attempted, {} emitted, {} duplicate news removed",
        report.queries, report.samples_attempted, report.samples_emitted, report.news_removed
    );
    for (reason, n) in &report.drops {
        println!("  dropped {n}: {}", reason.as_str());
    }
    for q in &report.per_query {
        println!("  {:<13} enhanced {:?} -> {} samples", q.term, q.enhanced.as_deref().unwrap_or("-"), q.emitted);
    }
    assert!(report.reconciles());

    for s in output.samples.iter().take(2) {
        println!("{} [{}] {} -> {}", s.id, s.entity_type, s.question, s.answer);
    }
    let dir = tempfile::tempdir()?;
    let path = write_dataset(dir.path(), &output.samples)?;
    println!("reloaded {} samples from {}", load_dataset(&path)?.len(), path.display());
    Ok(())
}
