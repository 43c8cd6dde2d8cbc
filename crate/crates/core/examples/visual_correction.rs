//! Verify a mask against a visual prototype built from reference images and
//! replace it with the best matching detector proposal when it fails.
//!
//! Run with `cargo run --example visual_correction`.

use rose::backends::mock::make_mock_suite;
use rose::fixtures::{demo_dataset, demo_world};
use rose::irag::ResolvedAnswer;
use rose::vpe;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ports = make_mock_suite(demo_world())?;
    let sample = &demo_dataset()[15];
    let ve = ports.visual_embedder.as_ref();

    let references =
        rose::irag::fetch_reference_images(&ResolvedAnswer::given(&sample.answer), ports.image_search.as_ref(), 8);
    let cluster = vpe::cluster_largest(&references, ve, vpe::DEFAULT_CLUSTER_DELTA)?;
    println!("{} references, {} kept after clustering", references.len(), cluster.len());
    let proto = vpe::make_prototype(&cluster, ve)?;

    // the segmenter picks the larger look-alike for "robot"
    let first_try = ports.segmenter.segment(&sample.image, &format!("{} is a home robot.", sample.answer))?;
    let report = vpe::verify_foreground(&sample.image, &first_try, &proto, ve, vpe::DEFAULT_VERIFY_THRESHOLD)?;
    println!("verification: similarity {:.3}, passed {}", report.similarity, report.passed);

    let fixed = vpe::correct_segmentation(
        &sample.image,
        &proto,
        ports.detector.as_ref(),
        ve,
        ports.mask_generator.as_ref(),
        vpe::DEFAULT_ACCEPT_THRESHOLD,
    )?;
    println!("correction: corrected {}, best similarity {:.3}", fixed.corrected, fixed.best_similarity);
    if let Some(mask) = &fixed.mask {
        println!("IoU before {:.3}, after {:.3}", first_try.pair_stats(&sample.mask)?.iou(), mask.pair_stats(&sample.mask)?.iou());
    }
    Ok(())
}
