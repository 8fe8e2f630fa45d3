//! Blend a single (source, mask, destination, x, y) tuple to a PNG.
//!
//! With file arguments this is a standalone blending tool:
//!
//! ```text
//! cargo run --example seamless_clone -- source.png mask.png dest.png X Y out.png
//! ```
//!
//! Without arguments it builds a synthetic demo pair and writes both the
//! direct superimposition and the seamless clone for comparison.

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};

use scene_synth::blending::{
    seamless_clone, simple_superimpose, BlendRequest, PoissonParams,
};
use scene_synth::raster::Mask;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.len() {
        0 | 1 => demo(args.first().map(String::as_str).unwrap_or("scene-synth-demo")),
        6 => {
            let source = image::open(&args[0]).context("source")?.to_rgb8();
            let mask = Mask::from_gray(&image::open(&args[1]).context("mask")?.to_luma8());
            let dest = image::open(&args[2]).context("destination")?.to_rgb8();
            let x: i64 = args[3].parse().context("x")?;
            let y: i64 = args[4].parse().context("y")?;
            let request = BlendRequest {
                source: &source,
                mask: &mask,
                destination: &dest,
                top_left: (x, y),
            };
            let outcome = seamless_clone(&request, &PoissonParams::default())?;
            if !outcome.converged {
                eprintln!("warning: solver stopped before reaching tolerance");
            }
            outcome.image.save(&args[5])?;
            println!("wrote {} ({} iterations)", args[5], outcome.iterations);
            Ok(())
        }
        n => bail!("expected 0 or 6 arguments, got {n}"),
    }
}

fn demo(out_dir: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;

    // destination: soft vertical gradient; source: bright textured disk
    let dest = RgbImage::from_fn(200, 150, |x, y| {
        Rgb([
            (30 + y / 2) as u8,
            (60 + y / 3) as u8,
            (110 + x / 4) as u8,
        ])
    });
    let side = 70u32;
    let center = side as f64 / 2.0;
    let mask = Mask::from_fn(side, side, |x, y| {
        let dx = x as f64 + 0.5 - center;
        let dy = y as f64 + 0.5 - center;
        (dx * dx + dy * dy).sqrt() <= 30.0
    });
    let source = RgbImage::from_fn(side, side, |x, y| {
        let stripe = if (x / 6) % 2 == 0 { 40 } else { 0 };
        Rgb([200 - stripe, (90 + y) as u8, 60])
    });

    let request = BlendRequest {
        source: &source,
        mask: &mask,
        destination: &dest,
        top_left: (60, 45),
    };
    let pasted = simple_superimpose(&request)?;
    let cloned = seamless_clone(&request, &PoissonParams::default())?;
    println!(
        "seamless clone converged after {} iterations",
        cloned.iterations
    );

    dest.save(format!("{out_dir}/clone_background.png"))?;
    pasted.save(format!("{out_dir}/clone_superimposed.png"))?;
    cloned.image.save(format!("{out_dir}/clone_seamless.png"))?;
    println!("wrote {out_dir}/clone_background.png, clone_superimposed.png, clone_seamless.png");
    Ok(())
}
