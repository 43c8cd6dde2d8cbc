//! Encode a mask as column-major run lengths, parse it back, and score two
//! masks with gIoU and cIoU.
//!
//! Run with `cargo run --example rle_masks`.

use rose::eval::{compute_ciou, compute_giou};
use rose::primitives::{rle_encode, BinaryMask, BoundingBox, Rle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gt = BinaryMask::from_box(6, 8, &BoundingBox::new(1, 1, 5, 4)?)?;
    let pred = BinaryMask::from_box(6, 8, &BoundingBox::new(2, 1, 6, 4)?)?;

    let text = rle_encode(&gt).to_string();
    println!("ground truth: {text}");
    let parsed: Rle = text.parse()?;
    assert_eq!(parsed.decode()?, gt);
    println!("round trip ok, area {}", parsed.area());

    let stats = pred.pair_stats(&gt)?;
    println!("intersection {}, union {}, IoU {:.3}", stats.intersection, stats.union, stats.iou());

    // a large perfect match and a small miss: gIoU averages, cIoU weights by size
    let big = BinaryMask::from_box(10, 10, &BoundingBox::new(0, 0, 10, 10)?)?;
    let left = BinaryMask::from_box(10, 10, &BoundingBox::new(0, 0, 5, 1)?)?;
    let right = BinaryMask::from_box(10, 10, &BoundingBox::new(5, 0, 10, 1)?)?;
    let pairs = [(big.clone(), big), (left, right)];
    println!("gIoU {:.4}  cIoU {:.4}", compute_giou(&pairs)?, compute_ciou(&pairs)?);

    for bad in ["4x4:3,20", "4x4:x", "0x4:"] {
        println!("{bad:>10} -> {}", bad.parse::<Rle>().map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string()));
    }
    Ok(())
}
