//! Compare the full pipeline with the two-stage comparator, which asks a
//! search-backed model for the answer and then prompts the segmenter with
//! `Please segment {answer} in this image.`.
//!
//! Run with `cargo run --example two_stage_baseline`.

use rose::backends::mock::make_mock_suite;
use rose::config::Config;
use rose::eval::{evaluate_system, render_table, run_two_stage_baseline};
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let dataset = demo_dataset();
    let two_stage = run_two_stage_baseline(&dataset, ports.llm.as_ref(), ports.segmenter.as_ref(), 2)?;
    let pipeline = Pipeline::new(&Config::default())?;
    let full = evaluate_system(&dataset, |r| pipeline.run_sample(&ports, r), "rose", true, 2)?;
    print!("{}", render_table(&[two_stage.clone(), full]));

    for row in two_stage.rows.iter().filter(|r| r.iou < 1.0).take(3) {
        println!("two-stage miss {}: answered {:?}", row.id, row.answer);
    }
    Ok(())
}
