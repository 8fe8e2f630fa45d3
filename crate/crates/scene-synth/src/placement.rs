//! Planning which objects, poses, positions, and scales go into one
//! composite image under a chosen generation-parameter combination.
//!
//! Positioning is either Random (RP: any pixel) or Selective (SP: pixels of
//! the placement mask); scaling is either Random (RS: a factor from
//! `rs_scales`) or Selective (SS: `ŵ = round(w·z̄/z)` from the scene depth
//! at the anchor). Planned boxes rest bottom-centered on their anchor pixel
//! and respect the pairwise overlap cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::blending::BlendMode;
use crate::dataset_io::{ObjectLibrary, RgbdFrame};
use crate::raster::{DepthMap, Mask};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("depth at the anchor is missing or non-positive")]
    InvalidDepth,
    #[error("no valid placement could be drawn for this frame")]
    NoValidPlacement,
    #[error("generation parameters invalid: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positioning {
    #[serde(rename = "RP")]
    Random,
    #[serde(rename = "SP")]
    Selective,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    #[serde(rename = "RS")]
    Random,
    #[serde(rename = "SS")]
    Selective,
}

/// Denominator of the pairwise overlap fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapDenominator {
    /// Intersection over the smaller box's area.
    MinArea,
    /// Intersection over the union area.
    Union,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub positioning: Positioning,
    pub appearance: BlendMode,
    pub scale_mode: ScaleMode,
    /// Maximum pairwise overlap fraction between placed boxes.
    pub max_overlap: f64,
    /// Inclusive `[min, max]` range for the number of objects per image.
    pub objects_per_image: [u32; 2],
    pub rs_scales: Vec<f64>,
    pub max_attempts_per_object: u32,
    /// Minimum rendered side of a placed object in pixels.
    pub min_px: u32,
    pub overlap_denominator: OverlapDenominator,
    /// Side of the square window for the anchor depth median read.
    pub depth_window: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            positioning: Positioning::Selective,
            appearance: BlendMode::Blend,
            scale_mode: ScaleMode::Selective,
            max_overlap: 0.4,
            objects_per_image: [2, 6],
            rs_scales: (2..=10).map(|i| i as f64 / 10.0).collect(),
            max_attempts_per_object: 25,
            min_px: 10,
            overlap_denominator: OverlapDenominator::MinArea,
            depth_window: 5,
        }
    }
}

impl GenerationParams {
    /// Short code of the parameter combination, e.g. `SP-BL-SS`.
    pub fn mode_code(&self) -> String {
        let p = match self.positioning {
            Positioning::Random => "RP",
            Positioning::Selective => "SP",
        };
        let a = match self.appearance {
            BlendMode::Superimpose => "SI",
            BlendMode::Blend => "BL",
        };
        let s = match self.scale_mode {
            ScaleMode::Random => "RS",
            ScaleMode::Selective => "SS",
        };
        format!("{p}-{a}-{s}")
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        if !(0.0..1.0).contains(&self.max_overlap) {
            return Err(PlacementError::InvalidParams(
                "max_overlap must be in [0, 1)".into(),
            ));
        }
        if self.objects_per_image[0] < 1 || self.objects_per_image[0] > self.objects_per_image[1] {
            return Err(PlacementError::InvalidParams(
                "objects_per_image must be a [min, max] range with min >= 1".into(),
            ));
        }
        if self.rs_scales.is_empty() || self.rs_scales.iter().any(|&s| s <= 0.0 || s > 1.0) {
            return Err(PlacementError::InvalidParams(
                "rs_scales must be non-empty with values in (0, 1]".into(),
            ));
        }
        if self.max_attempts_per_object == 0 {
            return Err(PlacementError::InvalidParams(
                "max_attempts_per_object must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One planned superimposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub instance_id: String,
    pub azimuth_idx: u32,
    pub elevation_idx: u32,
    /// Anchor pixel; the box rests bottom-centered here.
    pub anchor: [u32; 2],
    /// Scene depth read at the anchor (selective scaling only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
    /// Scale factor `s`, so the rendered crop is `round(s·w) × round(s·h)`.
    pub scale: f64,
    pub bbox: BBox,
}

/// The ordered placement choices defining one synthetic image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositePlan {
    pub frame_id: String,
    pub placements: Vec<PlacementSpec>,
    pub params: GenerationParams,
    pub seed: u64,
}

/// Depth-driven scaling: `ŵ = round(w·z̄/z)`, `ĥ = round(h·z̄/z)`, each at
/// least 1. `z̄` is the object's median training depth, `z` the scene depth
/// at the chosen position.
pub fn selective_scale(w: u32, h: u32, z_bar: f64, z: f64) -> Result<(u32, u32), PlacementError> {
    debug_assert!(w >= 1 && h >= 1 && z_bar > 0.0);
    if z <= 0.0 || !z.is_finite() {
        return Err(PlacementError::InvalidDepth);
    }
    let s = z_bar / z;
    let sw = (w as f64 * s).round().max(1.0) as u32;
    let sh = (h as f64 * s).round().max(1.0) as u32;
    Ok((sw, sh))
}

/// Overlap fraction between two boxes: intersection over the smaller area.
pub fn bbox_overlap_frac(a: &BBox, b: &BBox) -> f64 {
    bbox_overlap_frac_with(a, b, OverlapDenominator::MinArea)
}

pub fn bbox_overlap_frac_with(a: &BBox, b: &BBox, denom: OverlapDenominator) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let d = match denom {
        OverlapDenominator::MinArea => a.area().min(b.area()),
        OverlapDenominator::Union => a.area() + b.area() - inter,
    };
    if d <= 0.0 {
        0.0
    } else {
        inter / d
    }
}

/// Median of the valid depths in a `window × window` neighborhood of
/// `center`; `None` when the window holds no measurement.
pub fn median_depth_window(depth: &DepthMap, center: (u32, u32), window: u32) -> Option<f64> {
    let half = (window / 2) as i64;
    let mut vals: Vec<f32> = Vec::new();
    for dy in -half..=half {
        for dx in -half..=half {
            let x = center.0 as i64 + dx;
            let y = center.1 as i64 + dy;
            if x < 0 || y < 0 || x >= depth.width() as i64 || y >= depth.height() as i64 {
                continue;
            }
            let v = depth.get(x as u32, y as u32);
            if v > 0.0 {
                vals.push(v);
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    Some(if n % 2 == 1 {
        vals[n / 2] as f64
    } else {
        (vals[n / 2 - 1] as f64 + vals[n / 2] as f64) / 2.0
    })
}

/// Draw one composite plan for a frame. The rng is seeded from `seed`, so
/// identical inputs yield bit-identical plans. Objects that fail every
/// attempt are skipped; a plan needs at least one accepted placement.
pub fn sample_placements(
    frame: &RgbdFrame,
    placement_mask: Option<&Mask>,
    library: &ObjectLibrary,
    params: &GenerationParams,
    seed: u64,
) -> Result<CompositePlan, PlacementError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = (frame.intrinsics.width, frame.intrinsics.height);

    let mask_pixels: Option<Vec<(u32, u32)>> = match params.positioning {
        Positioning::Selective => {
            let pixels = placement_mask.map(|m| m.set_pixels()).unwrap_or_default();
            if pixels.is_empty() {
                return Err(PlacementError::NoValidPlacement);
            }
            Some(pixels)
        }
        Positioning::Random => None,
    };

    let instance_ids = library.instance_ids();
    if instance_ids.is_empty() {
        return Err(PlacementError::NoValidPlacement);
    }

    let [n_min, n_max] = params.objects_per_image;
    let n_objects = rng.gen_range(n_min..=n_max);
    let mut placements: Vec<PlacementSpec> = Vec::new();

    for _ in 0..n_objects {
        let instance_id = instance_ids[rng.gen_range(0..instance_ids.len())];
        let views = library.views(instance_id).expect("instance views");
        let view = &views[rng.gen_range(0..views.len())];
        let z_bar = library.median_depth(instance_id).expect("median depth");

        for _attempt in 0..params.max_attempts_per_object {
            let anchor = match &mask_pixels {
                Some(pixels) => pixels[rng.gen_range(0..pixels.len())],
                None => (rng.gen_range(0..width), rng.gen_range(0..height)),
            };
            let (scale, depth_m, scaled_w, scaled_h) = match params.scale_mode {
                ScaleMode::Selective => {
                    let Some(z) = median_depth_window(&frame.depth, anchor, params.depth_window)
                    else {
                        continue; // no depth here; resample the anchor
                    };
                    let (sw, sh) = selective_scale(view.width(), view.height(), z_bar, z)?;
                    (z_bar / z, Some(z), sw, sh)
                }
                ScaleMode::Random => {
                    let s = params.rs_scales[rng.gen_range(0..params.rs_scales.len())];
                    let sw = (view.width() as f64 * s).round().max(1.0) as u32;
                    let sh = (view.height() as f64 * s).round().max(1.0) as u32;
                    (s, None, sw, sh)
                }
            };
            if scaled_w < params.min_px || scaled_h < params.min_px {
                continue;
            }
            // box rests bottom-centered on the anchor
            let x_min = anchor.0 as i64 - (scaled_w / 2) as i64;
            let y_max = anchor.1 as i64 + 1;
            let bbox = BBox::new(
                x_min as f64,
                (y_max - scaled_h as i64) as f64,
                (x_min + scaled_w as i64) as f64,
                y_max as f64,
            );
            if !bbox.within_image(width, height) {
                continue;
            }
            if placements.iter().any(|p| {
                bbox_overlap_frac_with(&p.bbox, &bbox, params.overlap_denominator)
                    > params.max_overlap
            }) {
                continue;
            }
            placements.push(PlacementSpec {
                instance_id: instance_id.to_string(),
                azimuth_idx: view.azimuth_idx,
                elevation_idx: view.elevation_idx,
                anchor: [anchor.0, anchor.1],
                depth_m,
                scale,
                bbox,
            });
            break;
        }
    }

    if placements.is_empty() {
        return Err(PlacementError::NoValidPlacement);
    }
    Ok(CompositePlan {
        frame_id: frame.frame_id.clone(),
        placements,
        params: params.clone(),
        seed,
    })
}
