//! Write the demo dataset, trend queries and configuration to a directory so
//! the `rose` command line can use them.
//!
//! Run with `cargo run --example export_demo_fixture -- <dir>`, then e.g.
//! `cargo run -- eval --config <dir>/demo.toml --dataset <dir>/dataset.jsonl --out <dir>/eval --ablation all`.

use std::path::PathBuf;

use rose::dataset::{write_dataset, write_png, write_trends};
use rose::fixtures::{demo_config, demo_dataset, demo_trends};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo-fixture".into()));
    let dataset = demo_dataset();
    let path = write_dataset(&dir, &dataset)?;
    println!("wrote {} ({} samples)", path.display(), dataset.len());

    let trends = dir.join("trends.jsonl");
    write_trends(&trends, &demo_trends())?;
    println!("wrote {}", trends.display());

    let config = dir.join("demo.toml");
    std::fs::write(&config, demo_config().to_toml())?;
    println!("wrote {}", config.display());

    // a single query image for `rose run`
    let query = dir.join("query.png");
    write_png(&query, &dataset[15].image)?;
    println!("wrote {} for the question {:?}", query.display(), dataset[15].question);
    Ok(())
}
