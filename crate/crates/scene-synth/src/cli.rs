//! Command-line wiring for the pipeline: `generate`, `refine-masks`,
//! `inspect`, `evaluate`, `stats`, and `validate`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 runtime
//! error with partial output. Diagnostics go to stderr as JSON lines with
//! `level`/`stage`/`frame` fields.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataset_io::{load_object_library, load_scene_collection};
use crate::eval::{
    evaluate_detections, format_ap_table, format_recall_table, ground_truth_from_run,
    read_detections_jsonl, read_proposals_jsonl, recall_table, ApVariant,
};
use crate::generator::{
    generate_dataset, load_run_config, load_run_manifest, render_bbox_overlay, run_stats,
};
use crate::geometry::detect_support_surfaces;
use crate::mask_refine::{refine_library_masks, RefineParams};
use crate::semantics::validate_surfaces;

/// Process exit status. 0 = success, 1 = usage, 2 = data/validation,
/// 3 = runtime error with partial output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExitStatus(pub i32);

impl ExitStatus {
    pub const SUCCESS: ExitStatus = ExitStatus(0);
    pub const USAGE: ExitStatus = ExitStatus(1);
    pub const DATA: ExitStatus = ExitStatus(2);
    pub const RUNTIME: ExitStatus = ExitStatus(3);
}

#[derive(Debug)]
struct CliError {
    status: ExitStatus,
    message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::DATA,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::RUNTIME,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::USAGE,
            message: message.into(),
        }
    }
}

fn log_line(level: &str, stage: &str, frame: Option<&str>, msg: &str) {
    let mut record = serde_json::Map::new();
    record.insert("level".into(), level.into());
    record.insert("stage".into(), stage.into());
    if let Some(frame) = frame {
        record.insert("frame".into(), frame.into());
    }
    record.insert("msg".into(), msg.into());
    eprintln!("{}", serde_json::Value::Object(record));
}

#[derive(Parser)]
#[command(
    name = "scene-synth",
    version,
    about = "Synthesize annotated object-detection training images from RGB-D scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a run config
    Generate {
        /// Run config JSON (source of truth; flags override single fields)
        #[arg(long)]
        config: PathBuf,
        /// Master seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Frame-level parallelism (default: available cores)
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory override
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Refine object-library masks in place (writes *.mask_refined.png)
    RefineMasks {
        /// Run config naming the object library
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Render debug overlays: composite boxes (--run) or support surfaces (--config)
    Inspect {
        /// Run directory holding run_manifest.json
        #[arg(long)]
        run: Option<PathBuf>,
        /// Run config, for support-surface overlays of a scene frame
        #[arg(long)]
        config: Option<PathBuf>,
        /// Composite id (with --run) or frame id (with --config)
        #[arg(long)]
        id: String,
        /// Output PNG path (default: inside the run/config output directory)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Geometry seed (with --config)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score detections or proposals against a run's annotations
    Evaluate {
        /// Run directory (ground truth); repeatable for multi-set recall tables
        #[arg(long)]
        gt: Vec<PathBuf>,
        /// Detections JSONL
        #[arg(long)]
        dets: Option<PathBuf>,
        /// Proposals JSONL; repeatable, paired with --gt occurrences
        #[arg(long)]
        proposals: Vec<PathBuf>,
        /// IoU threshold(s), comma-separated
        #[arg(long, default_value = "0.5")]
        iou: String,
        /// Use 11-point interpolated AP instead of all-points
        #[arg(long)]
        eleven_point: bool,
        /// Write the machine-readable report JSON here
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print statistics of a completed run
    Stats {
        #[arg(long)]
        run: PathBuf,
    },
    /// Lint a run config: scene manifest and object library
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parse and execute `argv` (including the program name).
pub fn dispatch<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let status = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitStatus::SUCCESS,
                _ => ExitStatus::USAGE,
            };
            let _ = err.print();
            return status;
        }
    };
    match run(cli.command) {
        Ok(()) => ExitStatus::SUCCESS,
        Err(err) => {
            log_line("error", "cli", None, &err.message);
            err.status
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            config,
            seed,
            jobs,
            output,
        } => cmd_generate(&config, seed, jobs, output),
        Command::RefineMasks { config, jobs } => cmd_refine_masks(&config, jobs),
        Command::Inspect {
            run,
            config,
            id,
            output,
            seed,
        } => cmd_inspect(run, config, &id, output, seed),
        Command::Evaluate {
            gt,
            dets,
            proposals,
            iou,
            eleven_point,
            output,
        } => cmd_evaluate(gt, dets, proposals, &iou, eleven_point, output),
        Command::Stats { run } => cmd_stats(&run),
        Command::Validate { config } => cmd_validate(&config),
    }
}

fn cmd_generate(
    config_path: &Path,
    seed: Option<u64>,
    jobs: Option<usize>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut config = load_run_config(config_path).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(output) = output {
        config.output = output;
    }
    config.validate().map_err(|e| CliError::data(e.to_string()))?;
    log_line(
        "info",
        "generate",
        None,
        &format!(
            "mode {} seed {} -> {}",
            config.params.mode_code(),
            config.master_seed,
            config.output.display()
        ),
    );
    let report = generate_dataset(&config, jobs).map_err(|e| CliError::runtime(e.to_string()))?;
    for warning in &report.warnings {
        log_line("warn", "generate", None, warning);
    }
    for excluded in &report.manifest.excluded {
        log_line(
            "info",
            "generate",
            Some(&excluded.frame_id),
            &format!("excluded: {}", excluded.reason),
        );
    }
    log_line(
        "info",
        "generate",
        None,
        &format!(
            "{} composites from {} frames ({} excluded); manifest {}",
            report.stats.composites,
            report.stats.frames_used,
            report.stats.frames_excluded,
            report.manifest_path.display()
        ),
    );
    Ok(())
}

fn cmd_refine_masks(config_path: &Path, jobs: Option<usize>) -> Result<(), CliError> {
    let config = load_run_config(config_path).map_err(|e| CliError::data(e.to_string()))?;
    let params = RefineParams::default();
    let refine = || refine_library_masks(&config.objects, &params);
    let summary = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::runtime(e.to_string()))?
            .install(refine),
        None => refine(),
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    log_line(
        "info",
        "refine-masks",
        None,
        &format!(
            "refined {} masks ({} fallbacks) under {}",
            summary.refined,
            summary.fallbacks,
            config.objects.display()
        ),
    );
    Ok(())
}

fn cmd_inspect(
    run: Option<PathBuf>,
    config: Option<PathBuf>,
    id: &str,
    output: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    match (run, config) {
        (Some(run_dir), None) => {
            let manifest =
                load_run_manifest(&run_dir).map_err(|e| CliError::data(e.to_string()))?;
            let record = manifest
                .composites
                .iter()
                .find(|r| r.id == id)
                .ok_or_else(|| CliError::data(format!("composite '{id}' not in run manifest")))?;
            let image = image::open(run_dir.join(&record.image))
                .map_err(|e| CliError::data(e.to_string()))?
                .to_rgb8();
            let overlay = render_bbox_overlay(&image, &record.objects);
            let out_path = output.unwrap_or_else(|| {
                let dir = run_dir.join("inspect");
                let _ = std::fs::create_dir_all(&dir);
                dir.join(format!("{id}_boxes.png"))
            });
            overlay
                .save(&out_path)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            log_line("info", "inspect", None, &format!("wrote {}", out_path.display()));
            Ok(())
        }
        (None, Some(config_path)) => {
            let config =
                load_run_config(&config_path).map_err(|e| CliError::data(e.to_string()))?;
            let frames =
                load_scene_collection(&config.scenes).map_err(|e| CliError::data(e.to_string()))?;
            let frame = frames
                .iter()
                .find(|f| f.frame_id == id)
                .ok_or_else(|| CliError::data(format!("frame '{id}' not in scene manifest")))?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            use rand::SeedableRng;
            let surfaces =
                detect_support_surfaces(frame, &config.gravity, &config.geometry, &mut rng);
            let surfaces = if config.semantics.enabled && frame.labels.is_some() {
                validate_surfaces(surfaces, frame.labels.as_ref(), &config.semantics.config)
                    .map_err(|e| CliError::data(e.to_string()))?
            } else {
                surfaces
            };
            let overlay = render_surface_overlay(&frame.rgb, &surfaces);
            let out_path = output.unwrap_or_else(|| {
                let dir = config.output.join("inspect");
                let _ = std::fs::create_dir_all(&dir);
                dir.join(format!("{id}_surfaces.png"))
            });
            overlay
                .save(&out_path)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            log_line(
                "info",
                "inspect",
                Some(id),
                &format!("{} surfaces; wrote {}", surfaces.len(), out_path.display()),
            );
            Ok(())
        }
        _ => Err(CliError::usage(
            "inspect needs exactly one of --run or --config",
        )),
    }
}

/// Tint support-surface pixels: green for semantically valid surfaces,
/// orange for the rest.
fn render_surface_overlay(
    rgb: &image::RgbImage,
    surfaces: &[crate::geometry::SupportSurface],
) -> image::RgbImage {
    let mut out = rgb.clone();
    for surface in surfaces {
        let tint: [u8; 3] = if surface.semantic_valid {
            [40, 220, 60]
        } else {
            [240, 150, 40]
        };
        for (x, y) in surface.support_mask.set_pixels() {
            let px = out.get_pixel_mut(x, y);
            for c in 0..3 {
                px[c] = ((px[c] as u16 + tint[c] as u16 * 2) / 3) as u8;
            }
        }
    }
    out
}

fn parse_thresholds(spec: &str) -> Result<Vec<f64>, CliError> {
    let thresholds: Result<Vec<f64>, _> = spec.split(',').map(|s| s.trim().parse()).collect();
    let thresholds =
        thresholds.map_err(|_| CliError::usage(format!("bad --iou value '{spec}'")))?;
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(CliError::usage("--iou thresholds must lie in [0, 1]"));
    }
    Ok(thresholds)
}

fn cmd_evaluate(
    gt_dirs: Vec<PathBuf>,
    dets: Option<PathBuf>,
    proposals: Vec<PathBuf>,
    iou_spec: &str,
    eleven_point: bool,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let thresholds = parse_thresholds(iou_spec)?;
    if gt_dirs.is_empty() {
        return Err(CliError::usage("--gt <run dir> is required"));
    }
    let variant = if eleven_point {
        ApVariant::ElevenPoint
    } else {
        ApVariant::AllPoints
    };
    let mut report_json = serde_json::Map::new();

    if let Some(dets_path) = dets {
        let ground_truth =
            ground_truth_from_run(&gt_dirs[0]).map_err(|e| CliError::data(e.to_string()))?;
        let detections =
            read_detections_jsonl(&dets_path).map_err(|e| CliError::data(e.to_string()))?;
        let mut reports = Vec::new();
        for &thresh in &thresholds {
            let report = evaluate_detections(&detections, &ground_truth, thresh, variant);
            print!("{}", format_ap_table(&report));
            println!();
            reports.push(report);
        }
        report_json.insert(
            "detections".into(),
            serde_json::to_value(&reports).expect("report json"),
        );
    }

    if !proposals.is_empty() {
        if gt_dirs.len() != proposals.len() && gt_dirs.len() != 1 {
            return Err(CliError::usage(
                "--gt must be given once or once per --proposals",
            ));
        }
        let mut sets = Vec::new();
        for (i, props_path) in proposals.iter().enumerate() {
            let gt_dir = if gt_dirs.len() == 1 {
                &gt_dirs[0]
            } else {
                &gt_dirs[i]
            };
            let gts =
                ground_truth_from_run(gt_dir).map_err(|e| CliError::data(e.to_string()))?;
            let props =
                read_proposals_jsonl(props_path).map_err(|e| CliError::data(e.to_string()))?;
            let name = props_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("proposals")
                .to_string();
            sets.push((name, gts, props));
        }
        let table = recall_table(&sets, &thresholds);
        print!("{}", format_recall_table(&table));
        report_json.insert(
            "recall".into(),
            serde_json::to_value(&table).expect("table json"),
        );
    } else if report_json.is_empty() {
        return Err(CliError::usage(
            "evaluate needs --dets and/or --proposals",
        ));
    }

    if let Some(out_path) = output {
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(report_json))
            .expect("report json");
        std::fs::write(&out_path, text + "\n").map_err(|e| CliError::runtime(e.to_string()))?;
        log_line("info", "evaluate", None, &format!("wrote {}", out_path.display()));
    }
    Ok(())
}

fn cmd_stats(run_dir: &Path) -> Result<(), CliError> {
    let manifest = load_run_manifest(run_dir).map_err(|e| CliError::data(e.to_string()))?;
    let stats = run_stats(&manifest);
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("stats json")
    );
    Ok(())
}

fn cmd_validate(config_path: &Path) -> Result<(), CliError> {
    let config = load_run_config(config_path).map_err(|e| CliError::data(e.to_string()))?;
    let mut problems = Vec::new();

    match load_scene_collection(&config.scenes) {
        Ok(frames) => {
            log_line(
                "info",
                "validate",
                None,
                &format!("scene manifest: {} frames ok", frames.len()),
            );
            if config.params.positioning == crate::placement::Positioning::Selective
                && config.semantics.enabled
            {
                for frame in frames.iter().filter(|f| f.labels.is_none()) {
                    problems.push(format!(
                        "frame '{}' has no label map but SP mode requires semantic validation",
                        frame.frame_id
                    ));
                }
            }
        }
        Err(e) => problems.push(format!("scene manifest: {e}")),
    }

    match load_object_library(&config.objects) {
        Ok(library) => {
            log_line(
                "info",
                "validate",
                None,
                &format!("object library: {} instances ok", library.len()),
            );
            for id in library.instance_ids() {
                if library.views(id).unwrap().is_empty() {
                    problems.push(format!("instance '{id}' has no views"));
                }
            }
        }
        Err(e) => problems.push(format!("object library: {e}")),
    }

    if let Err(e) = config.params.validate() {
        problems.push(e.to_string());
    }

    if problems.is_empty() {
        log_line("info", "validate", None, "config is valid");
        Ok(())
    } else {
        for problem in &problems {
            log_line("error", "validate", None, problem);
        }
        Err(CliError::data(format!(
            "{} validation problem(s) found",
            problems.len()
        )))
    }
}
