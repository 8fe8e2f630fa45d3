//! Loading, validation, and indexing of background scene collections and
//! object-view libraries.
//!
//! On-disk formats:
//!
//! * Scene manifest: JSON `{ "frames": [{ "id", "rgb", "depth", "labels"?,
//!   "intrinsics": { "fx", "fy", "cx", "cy", "width", "height" },
//!   "up"? }] }` with raster paths relative to the manifest file. `up` is an
//!   optional per-frame gravity override in camera coordinates.
//! * Color rasters: 8-bit-per-channel PNG. Depth and label maps: 16-bit
//!   grayscale PNG, depth stored as millimeters (0 = missing), labels as
//!   raw class ids.
//! * Object library: `<root>/<instance_id>/<view_id>.rgb.png` plus
//!   `.depth.png` and `.mask.png` siblings, where `view_id` is
//!   `az<azimuth>_el<elevation>` (e.g. `az017_el2`). Refined masks, when
//!   present, live alongside as `<view_id>.mask_refined.png`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{DepthMap, LabelMap, Mask};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },
    #[error("frame '{frame_id}': {what} dimensions do not match")]
    DimensionMismatch { frame_id: String, what: String },
    #[error("instance '{instance_id}' has no views")]
    EmptyInstance { instance_id: String },
    #[error("view '{view}' of instance '{instance_id}' has an all-background mask")]
    MaskAllBackground { instance_id: String, view: String },
    #[error("no valid masked depth for instance '{instance_id}'")]
    NoValidDepth { instance_id: String },
    #[error("invalid intrinsics for frame '{frame_id}': {reason}")]
    InvalidIntrinsics { frame_id: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

/// Pinhole camera intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self, frame_id: &str) -> Result<(), DatasetError> {
        let bad = |reason: &str| DatasetError::InvalidIntrinsics {
            frame_id: frame_id.to_string(),
            reason: reason.to_string(),
        };
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(bad("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(bad("cx outside image"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(bad("cy outside image"));
        }
        Ok(())
    }
}

/// One background scene sample: color, metric depth, optional semantic
/// labels, and the intrinsics they were captured with.
#[derive(Clone, Debug)]
pub struct RgbdFrame {
    pub frame_id: String,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub labels: Option<LabelMap>,
    pub intrinsics: CameraIntrinsics,
    /// Per-frame gravity override (camera coordinates); `None` uses the
    /// run-level default.
    pub up: Option<[f64; 3]>,
}

impl RgbdFrame {
    /// Check that all rasters agree with the intrinsics dimensions.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let mismatch = |what: &str| DatasetError::DimensionMismatch {
            frame_id: self.frame_id.clone(),
            what: what.to_string(),
        };
        self.intrinsics.validate(&self.frame_id)?;
        if self.rgb.width() != w || self.rgb.height() != h {
            return Err(mismatch("rgb"));
        }
        if self.depth.width() != w || self.depth.height() != h {
            return Err(mismatch("depth"));
        }
        if let Some(labels) = &self.labels {
            if labels.width() != w || labels.height() != h {
                return Err(mismatch("labels"));
            }
        }
        if self.depth.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(mismatch("depth values (non-finite or negative)"));
        }
        Ok(())
    }
}

/// One cropped object pose.
#[derive(Clone, Debug)]
pub struct ObjectView {
    pub instance_id: String,
    pub azimuth_idx: u32,
    pub elevation_idx: u32,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub mask: Mask,
}

impl ObjectView {
    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn view_id(&self) -> String {
        format!("az{:03}_el{}", self.azimuth_idx, self.elevation_idx)
    }

    /// Masked depth values that carry a measurement.
    pub fn valid_masked_depths(&self) -> impl Iterator<Item = f32> + '_ {
        let mask = &self.mask;
        let depth = &self.depth;
        (0..self.height()).flat_map(move |y| {
            (0..self.width()).filter_map(move |x| {
                if mask.get(x, y) && depth.is_valid(x, y) {
                    Some(depth.get(x, y))
                } else {
                    None
                }
            })
        })
    }
}

/// All views of all object instances, indexed by instance id, plus the
/// per-instance median depth used as the scale anchor.
#[derive(Clone, Debug, Default)]
pub struct ObjectLibrary {
    instances: BTreeMap<String, Vec<ObjectView>>,
    median_depth: BTreeMap<String, f64>,
}

impl ObjectLibrary {
    pub fn from_views(views: Vec<ObjectView>) -> Result<Self, DatasetError> {
        let mut instances: BTreeMap<String, Vec<ObjectView>> = BTreeMap::new();
        for view in views {
            instances.entry(view.instance_id.clone()).or_default().push(view);
        }
        let mut median_depth = BTreeMap::new();
        for (id, views) in &instances {
            if views.is_empty() {
                return Err(DatasetError::EmptyInstance {
                    instance_id: id.clone(),
                });
            }
            let z_bar = compute_median_depth(views).map_err(|_| DatasetError::NoValidDepth {
                instance_id: id.clone(),
            })?;
            median_depth.insert(id.clone(), z_bar);
        }
        Ok(Self {
            instances,
            median_depth,
        })
    }

    pub fn instance_ids(&self) -> Vec<&str> {
        self.instances.keys().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn views(&self, instance_id: &str) -> Option<&[ObjectView]> {
        self.instances.get(instance_id).map(|v| v.as_slice())
    }

    pub fn median_depth(&self, instance_id: &str) -> Option<f64> {
        self.median_depth.get(instance_id).copied()
    }

    pub fn median_depths(&self) -> &BTreeMap<String, f64> {
        &self.median_depth
    }

    pub fn find_view(&self, instance_id: &str, azimuth_idx: u32, elevation_idx: u32) -> Option<&ObjectView> {
        self.instances.get(instance_id)?.iter().find(|v| {
            v.azimuth_idx == azimuth_idx && v.elevation_idx == elevation_idx
        })
    }
}

/// Median over the multiset of valid masked depth pixels pooled across all
/// views. Even-sized pools average the two middle values.
pub fn compute_median_depth(views: &[ObjectView]) -> Result<f64, DatasetError> {
    assert!(!views.is_empty(), "compute_median_depth requires views");
    let mut pool: Vec<f32> = views
        .iter()
        .flat_map(|v| v.valid_masked_depths())
        .collect();
    if pool.is_empty() {
        return Err(DatasetError::NoValidDepth {
            instance_id: views[0].instance_id.clone(),
        });
    }
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pool.len();
    let median = if n % 2 == 1 {
        pool[n / 2] as f64
    } else {
        (pool[n / 2 - 1] as f64 + pool[n / 2] as f64) / 2.0
    };
    Ok(median)
}

// ---------------------------------------------------------------------------
// Scene manifests
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneManifest {
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub rgb: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub intrinsics: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
}

/// Load every frame listed in a scene manifest, in manifest order.
pub fn load_scene_collection(manifest_path: &Path) -> Result<Vec<RgbdFrame>, DatasetError> {
    let manifest = read_scene_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .frames
        .iter()
        .map(|entry| load_frame(base, entry))
        .collect()
}

pub fn read_scene_manifest(manifest_path: &Path) -> Result<SceneManifest, DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile {
                path: manifest_path.to_path_buf(),
            }
        } else {
            DatasetError::Io {
                path: manifest_path.to_path_buf(),
                source: e,
            }
        }
    })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::MalformedManifest {
        path: manifest_path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_frame(base: &Path, entry: &FrameEntry) -> Result<RgbdFrame, DatasetError> {
    let rgb = load_rgb_png(&base.join(&entry.rgb))?;
    let depth = DepthMap::from_gray16(&load_gray16_png(&base.join(&entry.depth))?);
    let labels = match &entry.labels {
        Some(rel) => Some(LabelMap::from_gray16(&load_gray16_png(&base.join(rel))?)),
        None => None,
    };
    let frame = RgbdFrame {
        frame_id: entry.id.clone(),
        rgb,
        depth,
        labels,
        intrinsics: entry.intrinsics,
        up: entry.up,
    };
    frame.validate()?;
    Ok(frame)
}

/// Write a frame's rasters into `dir` and return the manifest entry that
/// references them (paths relative to `dir`).
pub fn save_frame(frame: &RgbdFrame, dir: &Path) -> Result<FrameEntry, DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let rgb_name = format!("{}.rgb.png", frame.frame_id);
    let depth_name = format!("{}.depth.png", frame.frame_id);
    save_png(&dir.join(&rgb_name), frame.rgb.clone())?;
    save_png16(&dir.join(&depth_name), frame.depth.to_gray16())?;
    let labels = match &frame.labels {
        Some(labels) => {
            let name = format!("{}.labels.png", frame.frame_id);
            save_png16(&dir.join(&name), labels.to_gray16())?;
            Some(name)
        }
        None => None,
    };
    Ok(FrameEntry {
        id: frame.frame_id.clone(),
        rgb: rgb_name,
        depth: depth_name,
        labels,
        intrinsics: frame.intrinsics,
        up: frame.up,
    })
}

pub fn write_scene_manifest(path: &Path, manifest: &SceneManifest) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialization");
    fs::write(path, text).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

// ---------------------------------------------------------------------------
// Object libraries
// ---------------------------------------------------------------------------

/// Load an object-view library from its directory layout. Median depths are
/// computed from the raw (unrefined) masks.
pub fn load_object_library(library_path: &Path) -> Result<ObjectLibrary, DatasetError> {
    load_object_library_with(library_path, false)
}

/// As [`load_object_library`], but when `use_refined` is set, any view with
/// a `<view_id>.mask_refined.png` sibling uses it in place of the raw mask.
pub fn load_object_library_with(
    library_path: &Path,
    use_refined: bool,
) -> Result<ObjectLibrary, DatasetError> {
    let mut instance_dirs: Vec<PathBuf> = fs::read_dir(library_path)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                DatasetError::MissingFile {
                    path: library_path.to_path_buf(),
                }
            } else {
                DatasetError::Io {
                    path: library_path.to_path_buf(),
                    source: e,
                }
            }
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    instance_dirs.sort();

    let mut views = Vec::new();
    for dir in &instance_dirs {
        let instance_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let mut count = 0usize;
        let mut rgb_files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| DatasetError::Io {
                path: dir.clone(),
                source: e,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".rgb.png")))
            .collect();
        rgb_files.sort();
        for rgb_path in rgb_files {
            let view = load_view(&instance_id, &rgb_path, use_refined)?;
            views.push(view);
            count += 1;
        }
        if count == 0 {
            return Err(DatasetError::EmptyInstance { instance_id });
        }
    }
    ObjectLibrary::from_views(views)
}

fn load_view(
    instance_id: &str,
    rgb_path: &Path,
    use_refined: bool,
) -> Result<ObjectView, DatasetError> {
    let file_name = rgb_path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let view_id = file_name.trim_end_matches(".rgb.png").to_string();
    let (azimuth_idx, elevation_idx) =
        parse_view_id(&view_id).ok_or_else(|| DatasetError::MalformedManifest {
            path: rgb_path.to_path_buf(),
            reason: format!("view id '{view_id}' is not az<NNN>_el<N>"),
        })?;
    let dir = rgb_path.parent().unwrap_or_else(|| Path::new("."));
    let rgb = load_rgb_png(rgb_path)?;
    let depth = DepthMap::from_gray16(&load_gray16_png(&dir.join(format!("{view_id}.depth.png")))?);
    let refined_path = dir.join(format!("{view_id}.mask_refined.png"));
    let mask_path = if use_refined && refined_path.exists() {
        refined_path
    } else {
        dir.join(format!("{view_id}.mask.png"))
    };
    let mask = Mask::from_gray(&load_gray8_png(&mask_path)?);

    if depth.width() != rgb.width()
        || depth.height() != rgb.height()
        || mask.width() != rgb.width()
        || mask.height() != rgb.height()
    {
        return Err(DatasetError::DimensionMismatch {
            frame_id: format!("{instance_id}/{view_id}"),
            what: "object view rasters".to_string(),
        });
    }
    if mask.is_empty() {
        return Err(DatasetError::MaskAllBackground {
            instance_id: instance_id.to_string(),
            view: view_id,
        });
    }
    let view = ObjectView {
        instance_id: instance_id.to_string(),
        azimuth_idx,
        elevation_idx,
        rgb,
        depth,
        mask,
    };
    if view.valid_masked_depths().next().is_none() {
        return Err(DatasetError::NoValidDepth {
            instance_id: instance_id.to_string(),
        });
    }
    Ok(view)
}

/// Parse `az<NNN>_el<N>` into `(azimuth_idx, elevation_idx)`.
pub fn parse_view_id(view_id: &str) -> Option<(u32, u32)> {
    let rest = view_id.strip_prefix("az")?;
    let (az, el) = rest.split_once("_el")?;
    Some((az.parse().ok()?, el.parse().ok()?))
}

/// Write a view's rasters into `<dir>/<instance_id>/`.
pub fn save_view(view: &ObjectView, library_root: &Path) -> Result<(), DatasetError> {
    let dir = library_root.join(&view.instance_id);
    fs::create_dir_all(&dir).map_err(|e| DatasetError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let id = view.view_id();
    save_png(&dir.join(format!("{id}.rgb.png")), view.rgb.clone())?;
    save_png16(&dir.join(format!("{id}.depth.png")), view.depth.to_gray16())?;
    save_png(&dir.join(format!("{id}.mask.png")), image::DynamicImage::ImageLuma8(view.mask.to_gray()).to_luma8())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PNG helpers
// ---------------------------------------------------------------------------

pub fn load_rgb_png(path: &Path) -> Result<RgbImage, DatasetError> {
    Ok(open_image(path)?.to_rgb8())
}

pub fn load_gray8_png(path: &Path) -> Result<image::GrayImage, DatasetError> {
    Ok(open_image(path)?.to_luma8())
}

pub fn load_gray16_png(path: &Path) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>, DatasetError> {
    Ok(open_image(path)?.to_luma16())
}

fn open_image(path: &Path) -> Result<image::DynamicImage, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    image::open(path).map_err(|e| DatasetError::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn save_png<P, C>(path: &Path, img: ImageBuffer<P, C>) -> Result<(), DatasetError>
where
    P: image::PixelWithColorType,
    C: std::ops::Deref<Target = [P::Subpixel]>,
    [P::Subpixel]: image::EncodableLayout,
{
    img.save(path).map_err(|e| DatasetError::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

fn save_png16(path: &Path, img: ImageBuffer<Luma<u16>, Vec<u16>>) -> Result<(), DatasetError> {
    save_png(path, img)
}
