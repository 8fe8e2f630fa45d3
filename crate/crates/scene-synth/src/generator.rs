//! End-to-end dataset synthesis: per background frame, derive the placement
//! mask (selective positioning), draw K composite plans, execute the
//! blends, and emit images, annotations, a run manifest, and statistics —
//! all deterministically from a master seed.
//!
//! Per-frame seeds derive from `(master_seed, frame_id, stream)`, never
//! from iteration order, so worker count and scheduling cannot change any
//! output. Output files are written atomically (temp + rename).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::blending::{seamless_clone, simple_superimpose, BlendMode, BlendRequest, PoissonParams};
use crate::dataset_io::{
    load_object_library_with, load_scene_collection, DatasetError, ObjectLibrary, RgbdFrame,
};
use crate::geometry::{detect_support_surfaces, GeometryParams, GravityModel};
use crate::placement::{sample_placements, GenerationParams, PlacementError, Positioning};
use crate::raster::Mask;
use crate::semantics::{placement_region, validate_surfaces, SemanticConfig, SemanticsError};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Semantic-validation settings for selective positioning.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticsSettings {
    /// When false, geometric support surfaces are used without label
    /// checks (frames then need no label maps).
    pub enabled: bool,
    pub config: SemanticConfig,
    /// Erosion margin of the placement region, pixels.
    pub margin_px: u32,
}

impl Default for SemanticsSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            config: SemanticConfig::default(),
            margin_px: 5,
        }
    }
}

/// Everything one synthesis run needs; serialized as the run config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// Scene manifest path.
    pub scenes: PathBuf,
    /// Object library root.
    pub objects: PathBuf,
    /// Output directory; created if absent.
    pub output: PathBuf,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default = "default_composites_per_frame")]
    pub composites_per_frame: u32,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub geometry: GeometryParams,
    #[serde(default)]
    pub gravity: GravityModel,
    #[serde(default)]
    pub semantics: SemanticsSettings,
    #[serde(default)]
    pub blend: PoissonParams,
    #[serde(default)]
    pub use_refined_masks: bool,
    /// Additionally emit one VOC-style XML annotation per composite.
    #[serde(default)]
    pub emit_voc_xml: bool,
}

fn default_composites_per_frame() -> u32 {
    4
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, GeneratorError> {
    let text = fs::read_to_string(path).map_err(|e| GeneratorError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| GeneratorError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.composites_per_frame < 1 {
            return Err(GeneratorError::InvalidConfig(
                "composites_per_frame must be >= 1".into(),
            ));
        }
        self.params
            .validate()
            .map_err(|e| GeneratorError::InvalidConfig(e.to_string()))?;
        if !self.scenes.exists() {
            return Err(GeneratorError::InvalidConfig(format!(
                "scene manifest not found: {}",
                self.scenes.display()
            )));
        }
        if !self.objects.exists() {
            return Err(GeneratorError::InvalidConfig(format!(
                "object library not found: {}",
                self.objects.display()
            )));
        }
        Ok(())
    }
}

/// One annotated object inside a composite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationObject {
    pub label: String,
    pub bbox: BBox,
    pub view: ViewRef,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRef {
    pub azimuth: u32,
    pub elevation: u32,
}

pub const BBOX_CONVENTION: &str =
    "x_min,y_min,x_max,y_max; zero-based pixels; max edges exclusive";

/// Per-composite annotation file contents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub bbox_convention: String,
    pub objects: Vec<AnnotationObject>,
}

/// One emitted composite with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub id: String,
    pub frame_id: String,
    pub image: String,
    pub annotation: String,
    pub width: u32,
    pub height: u32,
    /// Generation-parameter code, e.g. `SP-BL-SS`.
    pub mode: String,
    pub seed: u64,
    pub objects: Vec<AnnotationObject>,
    /// Wall-clock execution time; the only manifest field that varies
    /// between identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub frame_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub frames_in_manifest: usize,
    pub composites: Vec<CompositeRecord>,
    pub excluded: Vec<ExclusionRecord>,
}

/// Summary counters recomputed from a run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub frames_in_manifest: usize,
    pub frames_used: usize,
    pub frames_excluded: usize,
    pub composites: usize,
    pub total_instances: usize,
    pub instances_per_class: BTreeMap<String, usize>,
    pub mean_objects_per_composite: f64,
    /// Histogram of sqrt(bbox area) in 16 px buckets; the last bucket
    /// collects everything past 256 px.
    pub bbox_side_histogram: Vec<usize>,
}

/// Outcome of [`generate_dataset`].
#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub stats: RunStats,
    pub manifest_path: PathBuf,
    pub stats_path: PathBuf,
    /// Per-frame warnings (non-fatal), e.g. non-converged blends.
    pub warnings: Vec<String>,
}

/// Derive a per-frame seed from the master seed, the frame id, and a
/// stream index (FNV-1a; stable across platforms and runs).
pub fn derive_seed(master: u64, frame_id: &str, stream: u32) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for b in master.to_le_bytes() {
        eat(b);
    }
    for b in frame_id.as_bytes() {
        eat(*b);
    }
    for b in stream.to_le_bytes() {
        eat(b);
    }
    hash
}

/// Stream index reserved for the geometry rng (composite plans use 0..K).
const GEOMETRY_STREAM: u32 = u32::MAX;

enum FrameOutcome {
    Used {
        records: Vec<CompositeRecord>,
        warnings: Vec<String>,
    },
    Excluded {
        reason: String,
    },
}

/// Run the full synthesis pipeline described by `config`. `jobs` bounds
/// frame-level parallelism (`None` = rayon default).
pub fn generate_dataset(
    config: &RunConfig,
    jobs: Option<usize>,
) -> Result<RunReport, GeneratorError> {
    config.validate()?;
    let frames = load_scene_collection(&config.scenes)?;
    let library = load_object_library_with(&config.objects, config.use_refined_masks)?;
    if library.is_empty() {
        return Err(GeneratorError::InvalidConfig(
            "object library has no instances".into(),
        ));
    }

    let images_dir = config.output.join("images");
    let annotations_dir = config.output.join("annotations");
    for dir in [&config.output, &images_dir, &annotations_dir] {
        fs::create_dir_all(dir).map_err(|e| GeneratorError::Io {
            path: dir.clone(),
            source: e,
        })?;
    }

    let process = || -> Vec<Result<FrameOutcome, GeneratorError>> {
        frames
            .par_iter()
            .map(|frame| process_frame(frame, &library, config))
            .collect()
    };
    let outcomes = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| GeneratorError::InvalidConfig(e.to_string()))?
            .install(process),
        None => process(),
    };

    let mut composites = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (frame, outcome) in frames.iter().zip(outcomes) {
        match outcome? {
            FrameOutcome::Used {
                records,
                warnings: frame_warnings,
            } => {
                composites.extend(records);
                warnings.extend(frame_warnings);
            }
            FrameOutcome::Excluded { reason } => excluded.push(ExclusionRecord {
                frame_id: frame.frame_id.clone(),
                reason,
            }),
        }
    }

    let manifest = RunManifest {
        config: config.clone(),
        frames_in_manifest: frames.len(),
        composites,
        excluded,
    };
    let stats = run_stats(&manifest);

    let manifest_path = config.output.join("run_manifest.json");
    write_json_atomic(&manifest_path, &manifest)?;
    let stats_path = config.output.join("stats.json");
    write_json_atomic(&stats_path, &stats)?;
    if !warnings.is_empty() {
        let log_path = config.output.join("errors.log");
        write_atomic(&log_path, (warnings.join("\n") + "\n").as_bytes())?;
    }

    Ok(RunReport {
        manifest,
        stats,
        manifest_path,
        stats_path,
        warnings,
    })
}

fn process_frame(
    frame: &RgbdFrame,
    library: &ObjectLibrary,
    config: &RunConfig,
) -> Result<FrameOutcome, GeneratorError> {
    let mut warnings = Vec::new();

    let placement_mask: Option<Mask> = match config.params.positioning {
        Positioning::Selective => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                config.master_seed,
                &frame.frame_id,
                GEOMETRY_STREAM,
            ));
            let surfaces =
                detect_support_surfaces(frame, &config.gravity, &config.geometry, &mut rng);
            let surfaces = if config.semantics.enabled {
                match validate_surfaces(surfaces, frame.labels.as_ref(), &config.semantics.config)
                {
                    Ok(surfaces) => surfaces,
                    Err(SemanticsError::LabelMapMissing) => {
                        return Ok(FrameOutcome::Excluded {
                            reason: "label map missing for semantic validation".into(),
                        });
                    }
                    Err(e) => {
                        return Ok(FrameOutcome::Excluded {
                            reason: format!("semantic validation failed: {e}"),
                        });
                    }
                }
            } else {
                surfaces
                    .into_iter()
                    .map(|mut s| {
                        s.semantic_valid = true;
                        s
                    })
                    .collect()
            };
            let mask = placement_region(
                &surfaces,
                frame.intrinsics.width,
                frame.intrinsics.height,
                config.semantics.margin_px,
            );
            if mask.is_empty() {
                return Ok(FrameOutcome::Excluded {
                    reason: "no support surfaces detected".into(),
                });
            }
            Some(mask)
        }
        Positioning::Random => None,
    };

    // draw all K plans first; a frame is used all-or-nothing so emitted
    // frames always carry exactly K composites
    let mut plans = Vec::new();
    for k in 0..config.composites_per_frame {
        let seed = derive_seed(config.master_seed, &frame.frame_id, k);
        match sample_placements(
            frame,
            placement_mask.as_ref(),
            library,
            &config.params,
            seed,
        ) {
            Ok(plan) => plans.push((k, plan)),
            Err(PlacementError::NoValidPlacement) => {
                return Ok(FrameOutcome::Excluded {
                    reason: "no valid placement".into(),
                });
            }
            Err(e) => {
                return Ok(FrameOutcome::Excluded {
                    reason: format!("placement failed: {e}"),
                });
            }
        }
    }

    let mut records = Vec::new();
    for (k, plan) in plans {
        let started = Instant::now();
        let composite_id = format!("{}_synth{}", frame.frame_id, k);
        let (image, objects) = match execute_plan(frame, &plan, library, config, &mut warnings) {
            Ok(out) => out,
            Err(e) => {
                return Ok(FrameOutcome::Excluded {
                    reason: format!("composite {composite_id} failed: {e}"),
                });
            }
        };

        let image_rel = format!("images/{composite_id}.png");
        let annotation_rel = format!("annotations/{composite_id}.json");
        write_png_atomic(&config.output.join(&image_rel), &image)?;
        let annotation = AnnotationFile {
            image: image_rel.clone(),
            width: frame.intrinsics.width,
            height: frame.intrinsics.height,
            bbox_convention: BBOX_CONVENTION.to_string(),
            objects: objects.clone(),
        };
        write_json_atomic(&config.output.join(&annotation_rel), &annotation)?;
        if config.emit_voc_xml {
            let xml_rel = format!("annotations/{composite_id}.xml");
            write_atomic(
                &config.output.join(&xml_rel),
                voc_xml(&annotation, &composite_id).as_bytes(),
            )?;
        }

        records.push(CompositeRecord {
            id: composite_id,
            frame_id: frame.frame_id.clone(),
            image: image_rel,
            annotation: annotation_rel,
            width: frame.intrinsics.width,
            height: frame.intrinsics.height,
            mode: config.params.mode_code(),
            seed: plan.seed,
            objects,
            timing_ms: Some(started.elapsed().as_millis() as u64),
        });
    }
    Ok(FrameOutcome::Used { records, warnings })
}

/// Execute one plan: scale each view to its planned box, composite in plan
/// order with the configured appearance mode.
fn execute_plan(
    frame: &RgbdFrame,
    plan: &crate::placement::CompositePlan,
    library: &ObjectLibrary,
    config: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(RgbImage, Vec<AnnotationObject>), String> {
    let mut composite = frame.rgb.clone();
    let mut objects = Vec::new();
    for placement in &plan.placements {
        let view = library
            .find_view(
                &placement.instance_id,
                placement.azimuth_idx,
                placement.elevation_idx,
            )
            .ok_or_else(|| format!("view not found for {}", placement.instance_id))?;
        let scaled_w = placement.bbox.width() as u32;
        let scaled_h = placement.bbox.height() as u32;
        let scaled_rgb = image::imageops::resize(
            &view.rgb,
            scaled_w,
            scaled_h,
            image::imageops::FilterType::Triangle,
        );
        let scaled_mask = resize_mask_nearest(&view.mask, scaled_w, scaled_h);
        if scaled_mask.is_empty() {
            warnings.push(format!(
                "{}: scaled mask of {} az{} el{} came out empty; placement dropped",
                plan.frame_id, placement.instance_id, placement.azimuth_idx, placement.elevation_idx
            ));
            continue;
        }
        let request = BlendRequest {
            source: &scaled_rgb,
            mask: &scaled_mask,
            destination: &composite,
            top_left: (placement.bbox.x_min as i64, placement.bbox.y_min as i64),
        };
        composite = match config.params.appearance {
            BlendMode::Superimpose => simple_superimpose(&request).map_err(|e| e.to_string())?,
            BlendMode::Blend => {
                let outcome = seamless_clone(&request, &config.blend).map_err(|e| e.to_string())?;
                if !outcome.converged {
                    warnings.push(format!(
                        "{}: blend of {} did not reach tol within {} iterations",
                        plan.frame_id, placement.instance_id, config.blend.max_iters
                    ));
                }
                outcome.image
            }
        };
        objects.push(AnnotationObject {
            label: placement.instance_id.clone(),
            bbox: placement.bbox,
            view: ViewRef {
                azimuth: placement.azimuth_idx,
                elevation: placement.elevation_idx,
            },
            scale: placement.scale,
        });
    }
    Ok((composite, objects))
}

/// Nearest-neighbor mask resize (keeps the raster binary).
pub fn resize_mask_nearest(mask: &Mask, width: u32, height: u32) -> Mask {
    Mask::from_fn(width, height, |x, y| {
        let sx = ((x as u64 * mask.width() as u64) / width as u64).min(mask.width() as u64 - 1);
        let sy = ((y as u64 * mask.height() as u64) / height as u64).min(mask.height() as u64 - 1);
        mask.get(sx as u32, sy as u32)
    })
}

/// Recount statistics from a run manifest.
pub fn run_stats(manifest: &RunManifest) -> RunStats {
    let mut instances_per_class: BTreeMap<String, usize> = BTreeMap::new();
    let mut histogram = vec![0usize; 17];
    let mut total_instances = 0usize;
    for record in &manifest.composites {
        for object in &record.objects {
            total_instances += 1;
            *instances_per_class.entry(object.label.clone()).or_insert(0) += 1;
            let side = object.bbox.area().sqrt();
            let bucket = ((side / 16.0) as usize).min(16);
            histogram[bucket] += 1;
        }
    }
    let composites = manifest.composites.len();
    let used: std::collections::BTreeSet<&str> = manifest
        .composites
        .iter()
        .map(|r| r.frame_id.as_str())
        .collect();
    RunStats {
        frames_in_manifest: manifest.frames_in_manifest,
        frames_used: used.len(),
        frames_excluded: manifest.excluded.len(),
        composites,
        total_instances,
        instances_per_class,
        mean_objects_per_composite: if composites > 0 {
            total_instances as f64 / composites as f64
        } else {
            0.0
        },
        bbox_side_histogram: histogram,
    }
}

pub fn load_run_manifest(run_dir: &Path) -> Result<RunManifest, GeneratorError> {
    let path = run_dir.join("run_manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| GeneratorError::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| GeneratorError::Json { path, source: e })
}

/// VOC-flavor XML for one annotation (1-based inclusive box coordinates).
pub fn voc_xml(annotation: &AnnotationFile, composite_id: &str) -> String {
    let mut xml = String::new();
    xml.push_str("<annotation>\n");
    xml.push_str(&format!("  <filename>{composite_id}.png</filename>\n"));
    xml.push_str(&format!(
        "  <size><width>{}</width><height>{}</height><depth>3</depth></size>\n",
        annotation.width, annotation.height
    ));
    for object in &annotation.objects {
        xml.push_str("  <object>\n");
        xml.push_str(&format!("    <name>{}</name>\n", xml_escape(&object.label)));
        xml.push_str("    <pose>Unspecified</pose>\n    <truncated>0</truncated>\n    <difficult>0</difficult>\n");
        xml.push_str(&format!(
            "    <bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox>\n",
            object.bbox.x_min as i64 + 1,
            object.bbox.y_min as i64 + 1,
            object.bbox.x_max as i64,
            object.bbox.y_max as i64,
        ));
        xml.push_str("  </object>\n");
    }
    xml.push_str("</annotation>\n");
    xml
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Draw annotation boxes onto a composite (3 px outlines, color cycled per
/// label).
pub fn render_bbox_overlay(image: &RgbImage, objects: &[AnnotationObject]) -> RgbImage {
    const PALETTE: [[u8; 3]; 6] = [
        [255, 64, 64],
        [64, 220, 64],
        [80, 120, 255],
        [250, 220, 60],
        [220, 80, 220],
        [70, 220, 220],
    ];
    let mut labels: Vec<&str> = objects.iter().map(|o| o.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut out = image.clone();
    let (w, h) = (out.width() as i64, out.height() as i64);
    for object in objects {
        let color = PALETTE[labels.iter().position(|&l| l == object.label).unwrap_or(0) % PALETTE.len()];
        let (x0, y0) = (object.bbox.x_min as i64, object.bbox.y_min as i64);
        let (x1, y1) = (object.bbox.x_max as i64 - 1, object.bbox.y_max as i64 - 1);
        for t in 0..3i64 {
            for x in x0..=x1 {
                for y in [y0 + t, y1 - t] {
                    if x >= 0 && y >= 0 && x < w && y < h {
                        out.put_pixel(x as u32, y as u32, image::Rgb(color));
                    }
                }
            }
            for y in y0..=y1 {
                for x in [x0 + t, x1 - t] {
                    if x >= 0 && y >= 0 && x < w && y < h {
                        out.put_pixel(x as u32, y as u32, image::Rgb(color));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Atomic file writes
// ---------------------------------------------------------------------------

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), GeneratorError> {
    let tmp = path.with_extension("tmp");
    let io_err = |source: std::io::Error| GeneratorError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), GeneratorError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GeneratorError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_png_atomic(path: &Path, image: &RgbImage) -> Result<(), GeneratorError> {
    let tmp = path.with_extension("tmp.png");
    image.save(&tmp).map_err(|e| GeneratorError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    fs::rename(&tmp, path).map_err(|e| GeneratorError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}
