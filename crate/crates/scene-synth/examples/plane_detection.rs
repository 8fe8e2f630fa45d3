//! Detect support surfaces in a synthetic RGB-D tabletop scene and write a
//! color overlay of the result.
//!
//! Usage: `cargo run --example plane_detection [out_dir]`

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_synth::geometry::{
    backproject, compute_normals, detect_support_surfaces, oversegment, GeometryParams,
    GravityModel,
};
use scene_synth::semantics::{placement_region, validate_surfaces, SemanticConfig};
use scene_synth::synthetic::{tabletop_frame, TabletopScene};

fn main() -> Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scene-synth-demo".to_string());
    std::fs::create_dir_all(&out_dir)?;

    let frame = tabletop_frame("demo", &TabletopScene::default());
    let params = GeometryParams::default();

    let cloud = backproject(&frame);
    println!("backprojected {} valid points", cloud.valid_count());
    let normals = compute_normals(&cloud, params.normal_window);
    let regions = oversegment(&cloud, &normals, &params);
    println!(
        "oversegmentation: {} regions, sizes {:?}",
        regions.len(),
        regions.iter().map(|r| r.len()).collect::<Vec<_>>()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let surfaces = detect_support_surfaces(&frame, &GravityModel::default(), &params, &mut rng);
    for (i, surface) in surfaces.iter().enumerate() {
        println!(
            "surface {i}: normal ({:+.3}, {:+.3}, {:+.3}), offset {:.3} m, extent {} px",
            surface.plane.normal.x,
            surface.plane.normal.y,
            surface.plane.normal.z,
            surface.plane.offset,
            surface.extent_px
        );
    }

    let surfaces = validate_surfaces(surfaces, frame.labels.as_ref(), &SemanticConfig::default())?;
    let valid = surfaces.iter().filter(|s| s.semantic_valid).count();
    println!("{valid} of {} surfaces are semantically valid", surfaces.len());

    let mask = placement_region(
        &surfaces,
        frame.intrinsics.width,
        frame.intrinsics.height,
        5,
    );
    println!("placement region: {} pixels", mask.count());

    // overlay: tint valid surfaces green, others orange, region mask white
    let mut overlay = frame.rgb.clone();
    for surface in &surfaces {
        let tint: [u8; 3] = if surface.semantic_valid {
            [40, 220, 60]
        } else {
            [240, 150, 40]
        };
        for (x, y) in surface.support_mask.set_pixels() {
            let px = overlay.get_pixel_mut(x, y);
            for c in 0..3 {
                px[c] = ((px[c] as u16 + 2 * tint[c] as u16) / 3) as u8;
            }
        }
    }
    let path = format!("{out_dir}/surfaces.png");
    overlay.save(&path)?;
    println!("wrote {path}");
    Ok(())
}
