//! Deterministic synthetic RGB-D scenes and object libraries for tests,
//! examples, and desk-scale pipeline runs.
//!
//! Scenes are ray-cast from three planes in a level camera frame (camera y
//! down): a wall, a floor, and a table slab that carries the `table`
//! semantic label. Object views are flat-ish colored shapes with constant
//! depth and a tight mask.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::dataset_io::{
    save_frame, save_view, write_scene_manifest, CameraIntrinsics, DatasetError, ObjectLibrary,
    ObjectView, RgbdFrame, SceneManifest,
};
use crate::raster::{DepthMap, LabelMap, Mask};

/// Small deterministic per-pixel hash for texture noise.
fn pixel_noise(x: u32, y: u32, salt: u32) -> u8 {
    let mut v = x.wrapping_mul(0x9E37_79B9) ^ y.wrapping_mul(0x85EB_CA6B) ^ salt;
    v ^= v >> 13;
    v = v.wrapping_mul(0xC2B2_AE35);
    (v >> 24) as u8
}

/// Parameters of a synthetic tabletop scene.
#[derive(Clone, Copy, Debug)]
pub struct TabletopScene {
    pub width: u32,
    pub height: u32,
    /// Camera height above the table surface, meters.
    pub table_drop_m: f64,
    /// Near/far table depth range, meters.
    pub table_z_range: (f64, f64),
    /// Table half-width in meters.
    pub table_half_width_m: f64,
    /// Wall distance, meters.
    pub wall_z_m: f64,
    /// Camera height above the floor, meters.
    pub floor_drop_m: f64,
    /// Whether to emit the semantic label map.
    pub with_labels: bool,
}

impl Default for TabletopScene {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            table_drop_m: 0.45,
            table_z_range: (0.9, 2.1),
            table_half_width_m: 0.9,
            wall_z_m: 2.8,
            floor_drop_m: 1.4,
            with_labels: true,
        }
    }
}

/// Ray-cast a tabletop frame. Depth is exact plane depth; color carries a
/// little deterministic texture so blending has gradients to work with.
pub fn tabletop_frame(frame_id: &str, scene: &TabletopScene) -> RgbdFrame {
    let (w, h) = (scene.width, scene.height);
    let intr = CameraIntrinsics {
        fx: 0.6 * w as f64,
        fy: 0.6 * w as f64,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        width: w,
        height: h,
    };

    let mut depth = DepthMap::new(w, h);
    let mut labels = LabelMap::new(w, h);
    let mut rgb = RgbImage::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let a = (u as f64 - intr.cx) / intr.fx; // x/z
            let b = (v as f64 - intr.cy) / intr.fy; // y/z

            // candidates: (depth, label id, base color)
            let mut best: Option<(f64, u16, [u8; 3])> = None;
            let mut consider = |z: f64, label: u16, color: [u8; 3]| {
                if z > 0.1 && best.map_or(true, |(bz, _, _)| z < bz) {
                    best = Some((z, label, color));
                }
            };

            // wall: z = wall_z
            consider(scene.wall_z_m, 1, [168, 160, 150]);
            // floor: y = floor_drop (below camera), z = drop / b for b > 0
            if b > 1e-6 {
                let z = scene.floor_drop_m / b;
                consider(z, 2, [96, 78, 60]);
            }
            // table slab: y = table_drop, bounded in z and x
            if b > 1e-6 {
                let z = scene.table_drop_m / b;
                let x = a * z;
                if z >= scene.table_z_range.0
                    && z <= scene.table_z_range.1
                    && x.abs() <= scene.table_half_width_m
                {
                    consider(z, 7, [190, 140, 90]);
                }
            }

            if let Some((z, label, base)) = best {
                depth.set(u, v, z as f32);
                labels.set(u, v, label);
                let n = pixel_noise(u, v, label as u32) % 24;
                rgb.put_pixel(
                    u,
                    v,
                    Rgb([
                        base[0].saturating_add(n),
                        base[1].saturating_add(n / 2),
                        base[2].saturating_add(n / 3),
                    ]),
                );
            } else {
                rgb.put_pixel(u, v, Rgb([12, 12, 16]));
            }
        }
    }

    RgbdFrame {
        frame_id: frame_id.to_string(),
        rgb,
        depth,
        labels: scene.with_labels.then_some(labels),
        intrinsics: intr,
        up: None,
    }
}

/// A frame with no measured depth anywhere (e.g. a failed capture).
pub fn depthless_frame(frame_id: &str, width: u32, height: u32) -> RgbdFrame {
    let intr = CameraIntrinsics {
        fx: 0.6 * width as f64,
        fy: 0.6 * width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    RgbdFrame {
        frame_id: frame_id.to_string(),
        rgb: RgbImage::from_fn(width, height, |x, y| {
            Rgb([pixel_noise(x, y, 1), pixel_noise(x, y, 2), pixel_noise(x, y, 3)])
        }),
        depth: DepthMap::new(width, height),
        labels: Some(LabelMap::new(width, height)),
        intrinsics: intr,
        up: None,
    }
}

/// Shape of a toy object view.
#[derive(Clone, Copy, Debug)]
pub enum ToyShape {
    Disk,
    RoundedBox,
}

/// Build one toy object view: a colored shape on a transparent background
/// with constant metric depth under the mask.
pub fn toy_view(
    instance_id: &str,
    azimuth_idx: u32,
    elevation_idx: u32,
    side: u32,
    color: [u8; 3],
    depth_m: f32,
    shape: ToyShape,
) -> ObjectView {
    let c = side as f64 / 2.0;
    let inside = |x: u32, y: u32| -> bool {
        let dx = x as f64 + 0.5 - c;
        let dy = y as f64 + 0.5 - c;
        match shape {
            ToyShape::Disk => (dx * dx + dy * dy).sqrt() <= c - 1.5,
            ToyShape::RoundedBox => dx.abs().max(dy.abs()) <= c - 2.0 && (dx * dx + dy * dy).sqrt() <= 1.35 * c,
        }
    };
    let mask = Mask::from_fn(side, side, inside);
    let rgb = RgbImage::from_fn(side, side, |x, y| {
        if inside(x, y) {
            let shade = pixel_noise(x, y, azimuth_idx) % 40;
            Rgb([
                color[0].saturating_sub(shade),
                color[1].saturating_sub(shade / 2),
                color[2].saturating_sub(shade / 3),
            ])
        } else {
            Rgb([0, 0, 0])
        }
    });
    let depth = DepthMap::from_fn(side, side, |x, y| if inside(x, y) { depth_m } else { 0.0 });
    ObjectView {
        instance_id: instance_id.to_string(),
        azimuth_idx,
        elevation_idx,
        rgb,
        depth,
        mask,
    }
}

/// In-memory toy library: `n_instances` instances with `views_per_instance`
/// azimuth steps each.
pub fn toy_library(n_instances: usize, views_per_instance: usize) -> ObjectLibrary {
    let palette: [[u8; 3]; 6] = [
        [200, 60, 50],
        [60, 170, 80],
        [70, 90, 200],
        [210, 180, 60],
        [160, 70, 190],
        [80, 190, 190],
    ];
    let mut views = Vec::new();
    for i in 0..n_instances {
        let shape = if i % 2 == 0 {
            ToyShape::Disk
        } else {
            ToyShape::RoundedBox
        };
        for v in 0..views_per_instance {
            views.push(toy_view(
                &format!("toy{i:02}"),
                v as u32,
                0,
                56 + (i as u32 % 3) * 8,
                palette[i % palette.len()],
                0.7 + 0.05 * i as f32,
                shape,
            ));
        }
    }
    ObjectLibrary::from_views(views).expect("toy library")
}

/// Write `frames` as a scene collection under `dir` and return the manifest
/// path.
pub fn write_scene_collection(frames: &[RgbdFrame], dir: &Path) -> Result<PathBuf, DatasetError> {
    let mut entries = Vec::new();
    for frame in frames {
        entries.push(save_frame(frame, dir)?);
    }
    let manifest_path = dir.join("scenes.json");
    write_scene_manifest(&manifest_path, &SceneManifest { frames: entries })?;
    Ok(manifest_path)
}

/// Write a toy object library under `dir` and return `dir`.
pub fn write_toy_library(
    dir: &Path,
    n_instances: usize,
    views_per_instance: usize,
) -> Result<PathBuf, DatasetError> {
    let lib = toy_library(n_instances, views_per_instance);
    for id in lib.instance_ids() {
        for view in lib.views(id).unwrap() {
            save_view(view, dir)?;
        }
    }
    Ok(dir.to_path_buf())
}
