//! Evaluate every stage preset on the demo dataset and print the table.
//!
//! Run with `cargo run --example ablation_sweep`.

use rose::backends::mock::make_mock_suite;
use rose::config::Config;
use rose::eval::{evaluate_system, render_table};
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::{Ablation, Pipeline};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let dataset = demo_dataset();
    let mut reports = Vec::new();
    for ablation in Ablation::ALL {
        let pipeline = Pipeline::with_ablation(&Config::default(), ablation)?;
        reports.push(evaluate_system(
            &dataset,
            |request| pipeline.run_sample(&ports, request),
            ablation.as_str(),
            ablation.uses_retrieval(),
            4,
        )?);
    }
    print!("{}", render_table(&reports));
    Ok(())
}
