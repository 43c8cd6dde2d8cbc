//! Run the full pipeline on one request and print its stage trace, then run
//! a batch on several workers.
//!
//! Run with `cargo run --example rose_pipeline`.

use rose::backends::mock::make_mock_suite;
use rose::config::Config;
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::{Pipeline, UserRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let pipeline = Pipeline::new(&Config::default())?;
    let samples = demo_dataset();

    let sample = &samples[16];
    let request = UserRequest::new(sample.image.clone(), sample.question.clone())?;
    let result = pipeline.run_sample(&ports, &request).map_err(|f| f.message)?;
    println!("query:  {}", request.query);
    println!("answer: {:?}", result.answer);
    println!("prompt: {}", result.prompt);
    for record in &result.trace {
        println!("  {:<10} {:<9} {}", record.stage, format!("{:?}", record.outcome), record.detail);
    }
    println!("IoU {:.3}", result.mask.pair_stats(&sample.mask)?.iou());

    let requests: Vec<UserRequest> = samples
        .iter()
        .map(|s| UserRequest::new(s.image.clone(), s.question.clone()))
        .collect::<Result<_, _>>()?;
    let batch = pipeline.run_batch(&ports, &requests, 4)?;
    let ok = batch.iter().filter(|r| r.is_ok()).count();
    println!("batch: {ok} of {} samples produced a mask", batch.len());
    Ok(())
}
