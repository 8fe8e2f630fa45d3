//! Clean up a deliberately jagged object mask with the GraphCut refiner and
//! write the before/after rasters.
//!
//! Usage: `cargo run --example refine_masks [out_dir]`

use anyhow::Result;
use image::{Rgb, RgbImage};

use scene_synth::mask_refine::{refine_mask, RefineParams};
use scene_synth::raster::Mask;

fn main() -> Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scene-synth-demo".to_string());
    std::fs::create_dir_all(&out_dir)?;

    // a red disk on a blue background, as if cropped from a capture
    let size = 96u32;
    let radius = 34.0;
    let center = size as f64 / 2.0;
    let truth = Mask::from_fn(size, size, |x, y| {
        let dx = x as f64 + 0.5 - center;
        let dy = y as f64 + 0.5 - center;
        (dx * dx + dy * dy).sqrt() <= radius
    });
    let rgb = RgbImage::from_fn(size, size, |x, y| {
        if truth.get(x, y) {
            Rgb([198, 44, 38])
        } else {
            Rgb([26, 32, 104])
        }
    });

    // simulate a depth-derived mask with jagged, incomplete boundaries
    let dilated = truth.dilate(4);
    let eroded = truth.erode(3);
    let jagged = Mask::from_fn(size, size, |x, y| {
        if (x * 7 + y * 13) % 5 == 0 {
            eroded.get(x, y)
        } else if (x * 3 + y * 5) % 7 == 0 {
            dilated.get(x, y)
        } else {
            truth.get(x, y)
        }
    });

    let refined = refine_mask(&rgb, &jagged, &RefineParams::default())?;
    let iou = {
        let inter = refined.mask.intersection(&truth).count() as f64;
        let union = refined.mask.union(&truth).count() as f64;
        inter / union
    };
    println!(
        "input IoU {:.4} -> refined IoU {iou:.4}{}",
        jagged.intersection(&truth).count() as f64 / jagged.union(&truth).count() as f64,
        if refined.fallback { " (fallback)" } else { "" }
    );

    rgb.save(format!("{out_dir}/crop.png"))?;
    jagged.to_gray().save(format!("{out_dir}/mask_input.png"))?;
    refined
        .mask
        .to_gray()
        .save(format!("{out_dir}/mask_refined.png"))?;
    println!("wrote {out_dir}/crop.png, mask_input.png, mask_refined.png");
    Ok(())
}
