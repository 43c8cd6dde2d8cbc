//! Write the demo dataset to disk, load and validate it, evaluate the
//! pipeline, and save the report files.
//!
//! Run with `cargo run --example evaluate_dataset`.

use rose::backends::mock::make_mock_suite;
use rose::config::Config;
use rose::dataset::write_dataset;
use rose::eval::{evaluate_system, load_dataset};
use rose::fixtures::{demo_dataset, demo_world};
use rose::pipeline::Pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = write_dataset(dir.path(), &demo_dataset())?;
    let dataset = load_dataset(&path)?;

    let ports = make_mock_suite(demo_world())?;
    let pipeline = Pipeline::new(&Config::default())?;
    let report = evaluate_system(&dataset, |r| pipeline.run_sample(&ports, r), "rose", true, 4)?;
    for (split, m) in [("novel", &report.novel), ("emerging", &report.emerging)] {
        if let Some(m) = m {
            println!("{split:<9} n={:<3} gIoU {:.3} cIoU {:.3} acc {:.3}", m.n_samples, m.giou, m.ciou, m.accuracy);
        }
    }
    let o = &report.overall;
    println!("{:<9} n={:<3} gIoU {:.3} cIoU {:.3} acc {:.3}", "overall", o.n_samples, o.giou, o.ciou, o.accuracy);

    for file in report.write(dir.path(), "report")? {
        println!("wrote {}", file.display());
    }
    Ok(())
}
