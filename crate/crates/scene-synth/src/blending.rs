//! Compositing an object view into a background: direct masked
//! superimposition (SI) or seamless cloning (BL).
//!
//! Seamless cloning solves, per color channel, the discrete Poisson system
//! over the placed mask with the source gradients as guidance and the
//! destination as Dirichlet boundary. For each interior masked pixel `p`
//! (all four neighbors inside the destination image):
//!
//! ```text
//! |N(p)|·f_p − Σ_{q∈N(p)∩Ω} f_q = Σ_{q∈N(p)\Ω} f*_q + Σ_{q∈N(p)} (g_p − g_q)
//! ```
//!
//! with `Ω` the interior set, `f*` the destination, and `g` the source.
//! Masked pixels whose neighborhood exits the image are pinned to the
//! destination, as is everything outside the mask. The solver runs
//! successive over-relaxation sweeps in checkerboard order until the
//! max-norm residual of the system falls under `tol` (8-bit intensity
//! scale) or `max_iters` is reached; the interior is clamped to `[0, 255]`
//! after convergence.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Mask;

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("source and mask dimensions differ")]
    DimensionMismatch,
    #[error("crop of {width}x{height} at ({x}, {y}) exceeds destination {dest_width}x{dest_height}")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: u32,
        height: u32,
        dest_width: u32,
        dest_height: u32,
    },
}

/// Appearance mode for a composite: direct superimposition or seamless
/// cloning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlendMode {
    #[serde(rename = "SI")]
    Superimpose,
    #[serde(rename = "BL")]
    Blend,
}

/// One compositing request: a scaled source crop with its mask, the
/// destination image, and the placement of the crop's origin.
pub struct BlendRequest<'a> {
    pub source: &'a RgbImage,
    pub mask: &'a Mask,
    pub destination: &'a RgbImage,
    pub top_left: (i64, i64),
}

impl BlendRequest<'_> {
    fn validate(&self) -> Result<(u32, u32), BlendError> {
        if self.source.width() != self.mask.width() || self.source.height() != self.mask.height() {
            return Err(BlendError::DimensionMismatch);
        }
        let (x, y) = self.top_left;
        let (w, h) = (self.source.width(), self.source.height());
        let (dw, dh) = (self.destination.width(), self.destination.height());
        if x < 0 || y < 0 || x + w as i64 > dw as i64 || y + h as i64 > dh as i64 {
            return Err(BlendError::OutOfBounds {
                x,
                y,
                width: w,
                height: h,
                dest_width: dw,
                dest_height: dh,
            });
        }
        Ok((x as u32, y as u32))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonParams {
    pub max_iters: usize,
    /// Residual threshold, max-norm over interior pixels on the 0..255
    /// intensity scale.
    pub tol: f64,
    /// Over-relaxation factor for the checkerboard sweeps.
    pub omega: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 0.1,
            omega: 1.9,
        }
    }
}

/// Replace destination pixels under the placed mask with source pixels;
/// everything else is bit-identical to the destination.
pub fn simple_superimpose(req: &BlendRequest) -> Result<RgbImage, BlendError> {
    let (left, top) = req.validate()?;
    let mut out = req.destination.clone();
    for (mx, my) in req.mask.set_pixels() {
        out.put_pixel(left + mx, top + my, *req.source.get_pixel(mx, my));
    }
    Ok(out)
}

/// Continuous (pre-quantization) solution of the clone system.
#[derive(Clone, Debug)]
pub struct CloneSolution {
    /// Interior pixels in destination coordinates, raster order.
    pub interior: Vec<(u32, u32)>,
    /// Per-channel solution values aligned with `interior`.
    pub channels: [Vec<f64>; 3],
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
}

/// Result of a seamless clone; `converged == false` means the residual
/// never reached `tol` within `max_iters` (the image is still returned).
#[derive(Clone, Debug)]
pub struct CloneOutcome {
    pub image: RgbImage,
    pub converged: bool,
    pub iterations: usize,
}

/// Seamless clone of `req.source` under `req.mask` into the destination.
pub fn seamless_clone(
    req: &BlendRequest,
    params: &PoissonParams,
) -> Result<CloneOutcome, BlendError> {
    let solution = solve_clone_system(req, params)?;
    let mut out = req.destination.clone();
    for (i, &(x, y)) in solution.interior.iter().enumerate() {
        let px = out.get_pixel_mut(x, y);
        for c in 0..3 {
            px[c] = solution.channels[c][i].round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(CloneOutcome {
        image: out,
        converged: solution.converged,
        iterations: solution.iterations,
    })
}

/// Solve the clone system and return the continuous interior values,
/// without writing an image. Exposed so results can be checked against
/// independent solvers.
pub fn solve_clone_system(
    req: &BlendRequest,
    params: &PoissonParams,
) -> Result<CloneSolution, BlendError> {
    let (left, top) = req.validate()?;
    let (dw, dh) = (req.destination.width(), req.destination.height());
    let (sw, sh) = (req.source.width(), req.source.height());

    // interior: placed masked pixels with all four neighbors in-image
    let mut index = vec![u32::MAX; (dw * dh) as usize];
    let mut interior: Vec<(u32, u32)> = Vec::new();
    for my in 0..sh {
        for mx in 0..sw {
            if !req.mask.get(mx, my) {
                continue;
            }
            let (x, y) = (left + mx, top + my);
            if x > 0 && y > 0 && x + 1 < dw && y + 1 < dh {
                index[(y * dw + x) as usize] = interior.len() as u32;
                interior.push((x, y));
            }
        }
    }
    if interior.is_empty() {
        return Ok(CloneSolution {
            interior,
            channels: [Vec::new(), Vec::new(), Vec::new()],
            iterations: 0,
            converged: true,
            max_residual: 0.0,
        });
    }

    // source sample in destination coordinates, clamped to the crop
    let src_at = |x: i64, y: i64, c: usize| -> f64 {
        let sx = (x - left as i64).clamp(0, sw as i64 - 1) as u32;
        let sy = (y - top as i64).clamp(0, sh as i64 - 1) as u32;
        req.source.get_pixel(sx, sy)[c] as f64
    };

    let n = interior.len();
    let mut neighbors = vec![[u32::MAX; 4]; n];
    let mut rhs = [vec![0.0f64; n], vec![0.0f64; n], vec![0.0f64; n]];
    let mut values = [vec![0.0f64; n], vec![0.0f64; n], vec![0.0f64; n]];
    const DIRS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    for (i, &(x, y)) in interior.iter().enumerate() {
        for c in 0..3 {
            values[c][i] = req.destination.get_pixel(x, y)[c] as f64;
        }
        for (d, &(dx, dy)) in DIRS.iter().enumerate() {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            let nidx = index[(ny as u32 * dw + nx as u32) as usize];
            neighbors[i][d] = nidx;
            for c in 0..3 {
                if nidx == u32::MAX {
                    rhs[c][i] += req.destination.get_pixel(nx as u32, ny as u32)[c] as f64;
                }
                rhs[c][i] += src_at(x as i64, y as i64, c) - src_at(nx, ny, c);
            }
        }
    }

    // checkerboard SOR
    let parity: Vec<bool> = interior.iter().map(|&(x, y)| (x + y) % 2 == 0).collect();
    let mut iterations = 0;
    let mut max_residual = residual_max(&values, &neighbors, &rhs);
    while max_residual > params.tol && iterations < params.max_iters {
        for phase in [true, false] {
            for c in 0..3 {
                for i in 0..n {
                    if parity[i] != phase {
                        continue;
                    }
                    let mut sum = 0.0;
                    for &nb in &neighbors[i] {
                        if nb != u32::MAX {
                            sum += values[c][nb as usize];
                        }
                    }
                    let gauss_seidel = (rhs[c][i] + sum) / 4.0;
                    values[c][i] += params.omega * (gauss_seidel - values[c][i]);
                }
            }
        }
        iterations += 1;
        max_residual = residual_max(&values, &neighbors, &rhs);
    }

    Ok(CloneSolution {
        interior,
        channels: values,
        iterations,
        converged: max_residual <= params.tol,
        max_residual,
    })
}

fn residual_max(values: &[Vec<f64>; 3], neighbors: &[[u32; 4]], rhs: &[Vec<f64>; 3]) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..3 {
        for i in 0..values[c].len() {
            let mut sum = 0.0;
            for &nb in &neighbors[i] {
                if nb != u32::MAX {
                    sum += values[c][nb as usize];
                }
            }
            worst = worst.max((4.0 * values[c][i] - sum - rhs[c][i]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| {
            Rgb([rng.gen(), rng.gen(), rng.gen()])
        })
    }

    fn centered_disk(w: u32, h: u32, radius: f64) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            let dx = x as f64 - w as f64 / 2.0;
            let dy = y as f64 - h as f64 / 2.0;
            (dx * dx + dy * dy).sqrt() <= radius
        })
    }

    #[test]
    fn superimpose_empty_mask_is_identity() {
        let dest = random_image(24, 24, 1);
        let src = random_image(8, 8, 2);
        let mask = Mask::new(8, 8);
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (4, 4),
        };
        assert_eq!(simple_superimpose(&req).unwrap(), dest);
    }

    #[test]
    fn superimpose_full_mask_copies_crop() {
        let dest = RgbImage::from_pixel(24, 24, Rgb([0, 0, 0]));
        let src = random_image(10, 10, 3);
        let mask = Mask::filled(10, 10, true);
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (0, 0),
        };
        let out = simple_superimpose(&req).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(out.get_pixel(x, y), src.get_pixel(x, y));
            }
        }
        assert_eq!(out.get_pixel(15, 15), dest.get_pixel(15, 15));
    }

    #[test]
    fn crop_past_border_is_out_of_bounds() {
        let dest = random_image(16, 16, 4);
        let src = random_image(8, 8, 5);
        let mask = Mask::filled(8, 8, true);
        for top_left in [(10, 4), (4, 10), (-1, 0)] {
            let req = BlendRequest {
                source: &src,
                mask: &mask,
                destination: &dest,
                top_left,
            };
            assert!(matches!(
                simple_superimpose(&req),
                Err(BlendError::OutOfBounds { .. })
            ));
            assert!(matches!(
                seamless_clone(&req, &PoissonParams::default()),
                Err(BlendError::OutOfBounds { .. })
            ));
        }
    }

    #[test]
    fn clone_of_identical_region_returns_destination() {
        let dest = random_image(32, 32, 6);
        // source equals the destination region it is pasted over; the mask
        // keeps a margin inside the crop so guidance sampling never clamps
        let src = RgbImage::from_fn(14, 14, |x, y| *dest.get_pixel(x + 8, y + 8));
        let mask = centered_disk(14, 14, 5.0);
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (8, 8),
        };
        let out = seamless_clone(&req, &PoissonParams::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0, "g = f* solves the system at init");
        for y in 0..32 {
            for x in 0..32 {
                let a = out.image.get_pixel(x, y);
                let b = dest.get_pixel(x, y);
                for c in 0..3 {
                    assert!((a[c] as i32 - b[c] as i32).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn constant_on_constant_converges_to_destination_color() {
        let dest = RgbImage::from_pixel(24, 24, Rgb([90, 140, 200]));
        let src = RgbImage::from_pixel(10, 10, Rgb([10, 220, 30]));
        let mask = Mask::filled(10, 10, true);
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (6, 6),
        };
        let out = seamless_clone(&req, &PoissonParams::default()).unwrap();
        assert!(out.converged);
        for y in 0..24 {
            for x in 0..24 {
                let px = out.image.get_pixel(x, y);
                for c in 0..3 {
                    assert!(
                        (px[c] as i32 - dest.get_pixel(x, y)[c] as i32).abs() <= 1,
                        "pixel ({x},{y}) channel {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn exterior_pixels_are_bit_identical() {
        let dest = random_image(40, 40, 7);
        let src = random_image(16, 16, 8);
        let mask = centered_disk(16, 16, 6.0);
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (10, 12),
        };
        let si = simple_superimpose(&req).unwrap();
        let bl = seamless_clone(&req, &PoissonParams::default()).unwrap().image;
        for y in 0..40u32 {
            for x in 0..40u32 {
                let inside = {
                    let mx = x as i64 - 10;
                    let my = y as i64 - 12;
                    mx >= 0 && my >= 0 && mx < 16 && my < 16 && mask.get(mx as u32, my as u32)
                };
                if !inside {
                    assert_eq!(si.get_pixel(x, y), dest.get_pixel(x, y));
                    assert_eq!(bl.get_pixel(x, y), dest.get_pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn solution_satisfies_the_discrete_equation() {
        let dest = random_image(32, 32, 9);
        let src = random_image(14, 14, 10);
        let mask = centered_disk(14, 14, 6.0);
        let params = PoissonParams::default();
        let req = BlendRequest {
            source: &src,
            mask: &mask,
            destination: &dest,
            top_left: (9, 9),
        };
        let solution = solve_clone_system(&req, &params).unwrap();
        assert!(solution.converged);

        // independent residual recompute straight from the equation
        let mut lookup = std::collections::HashMap::new();
        for (i, &(x, y)) in solution.interior.iter().enumerate() {
            lookup.insert((x, y), i);
        }
        let g = |x: i64, y: i64, c: usize| -> f64 {
            let sx = (x - 9).clamp(0, 13) as u32;
            let sy = (y - 9).clamp(0, 13) as u32;
            src.get_pixel(sx, sy)[c] as f64
        };
        for (i, &(x, y)) in solution.interior.iter().enumerate() {
            for c in 0..3 {
                let mut lhs = 4.0 * solution.channels[c][i];
                let mut rhs = 0.0;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    match lookup.get(&(nx as u32, ny as u32)) {
                        Some(&j) => lhs -= solution.channels[c][j],
                        None => rhs += dest.get_pixel(nx as u32, ny as u32)[c] as f64,
                    }
                    rhs += g(x as i64, y as i64, c) - g(nx, ny, c);
                }
                assert!(
                    (lhs - rhs).abs() <= params.tol + 1e-9,
                    "residual {} at ({x},{y})",
                    (lhs - rhs).abs()
                );
            }
        }
    }

    #[test]
    fn constant_source_offset_does_not_change_output() {
        let dest = random_image(30, 30, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // source values kept away from the channel limits so +20 stays in range
        let src = RgbImage::from_fn(12, 12, |_, _| {
            Rgb([rng.gen_range(40..200), rng.gen_range(40..200), rng.gen_range(40..200)])
        });
        let shifted = RgbImage::from_fn(12, 12, |x, y| {
            let p = src.get_pixel(x, y);
            Rgb([p[0] + 20, p[1] + 20, p[2] + 20])
        });
        let mask = centered_disk(12, 12, 5.0);
        let params = PoissonParams::default();
        let base = seamless_clone(
            &BlendRequest {
                source: &src,
                mask: &mask,
                destination: &dest,
                top_left: (9, 9),
            },
            &params,
        )
        .unwrap();
        let offset = seamless_clone(
            &BlendRequest {
                source: &shifted,
                mask: &mask,
                destination: &dest,
                top_left: (9, 9),
            },
            &params,
        )
        .unwrap();
        assert_eq!(base.image, offset.image);
    }

    #[test]
    fn clone_is_deterministic() {
        let dest = random_image(28, 28, 13);
        let src = random_image(12, 12, 14);
        let mask = centered_disk(12, 12, 5.0);
        let params = PoissonParams::default();
        let run = || {
            seamless_clone(
                &BlendRequest {
                    source: &src,
                    mask: &mask,
                    destination: &dest,
                    top_left: (8, 8),
                },
                &params,
            )
            .unwrap()
            .image
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nonconvergence_is_flagged_not_fatal() {
        let dest = random_image(40, 40, 15);
        let src = random_image(30, 30, 16);
        let mask = Mask::filled(30, 30, true);
        let params = PoissonParams {
            max_iters: 2,
            ..Default::default()
        };
        let out = seamless_clone(
            &BlendRequest {
                source: &src,
                mask: &mask,
                destination: &dest,
                top_left: (5, 5),
            },
            &params,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
