//! Plan object placements on a synthetic scene in every parameter
//! combination and print the resulting plans.
//!
//! Usage: `cargo run --example plan_placements`

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_synth::blending::BlendMode;
use scene_synth::geometry::{detect_support_surfaces, GeometryParams, GravityModel};
use scene_synth::placement::{
    sample_placements, GenerationParams, Positioning, ScaleMode,
};
use scene_synth::semantics::{placement_region, validate_surfaces, SemanticConfig};
use scene_synth::synthetic::{tabletop_frame, toy_library, TabletopScene};

fn main() -> Result<()> {
    let frame = tabletop_frame("demo", &TabletopScene::default());
    let library = toy_library(3, 4);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let surfaces = detect_support_surfaces(
        &frame,
        &GravityModel::default(),
        &GeometryParams::default(),
        &mut rng,
    );
    let surfaces = validate_surfaces(surfaces, frame.labels.as_ref(), &SemanticConfig::default())?;
    let mask = placement_region(
        &surfaces,
        frame.intrinsics.width,
        frame.intrinsics.height,
        5,
    );
    println!(
        "placement mask: {} pixels from {} surfaces\n",
        mask.count(),
        surfaces.len()
    );

    let combos = [
        (Positioning::Random, BlendMode::Superimpose, ScaleMode::Random),
        (Positioning::Random, BlendMode::Blend, ScaleMode::Random),
        (Positioning::Selective, BlendMode::Superimpose, ScaleMode::Selective),
        (Positioning::Selective, BlendMode::Blend, ScaleMode::Selective),
    ];
    for (positioning, appearance, scale_mode) in combos {
        let params = GenerationParams {
            positioning,
            appearance,
            scale_mode,
            objects_per_image: [2, 4],
            ..Default::default()
        };
        let mask_ref = (positioning == Positioning::Selective).then_some(&mask);
        let plan = sample_placements(&frame, mask_ref, &library, &params, 42)?;
        println!("{} (seed {}):", params.mode_code(), plan.seed);
        for p in &plan.placements {
            println!(
                "  {} az{:03} el{} at ({}, {}) scale {:.3}{} box [{}, {}, {}, {}]",
                p.instance_id,
                p.azimuth_idx,
                p.elevation_idx,
                p.anchor[0],
                p.anchor[1],
                p.scale,
                p.depth_m
                    .map(|z| format!(" (z {z:.2} m)"))
                    .unwrap_or_default(),
                p.bbox.x_min,
                p.bbox.y_min,
                p.bbox.x_max,
                p.bbox.y_max
            );
        }
        println!();
    }
    Ok(())
}
