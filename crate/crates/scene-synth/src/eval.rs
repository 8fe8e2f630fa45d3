//! Detection-metric evaluation: IoU matching, per-class average precision,
//! mAP, and proposal recall at fixed IoU thresholds, scored against the
//! annotations of a generated run.
//!
//! Detections are consumed as JSON lines `{"image", "label", "bbox",
//! "score"}`; class-agnostic proposals as `{"image", "bbox", "score"?}`.
//! Boxes follow the crate-wide `[x_min, y_min, x_max, y_max]` exclusive-max
//! convention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::generator::{load_run_manifest, GeneratorError, RunManifest};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad record on line {line} of {path}: {reason}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Manifest(#[from] GeneratorError),
}

/// One scored, labeled detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image: String,
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
}

/// One class-agnostic proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub image: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// One ground-truth box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image: String,
    pub label: String,
    pub bbox: BBox,
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// One detection's match outcome, ordered by descending score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetMatch {
    pub score: f64,
    pub tp: bool,
}

/// Greedy matching for one class: detections in descending score order
/// (ties keep input order) claim the unmatched ground truth with highest
/// IoU ≥ `iou_thresh` in their image; duplicates on a claimed ground truth
/// are false positives.
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_thresh: f64,
) -> Vec<DetMatch> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut gts_by_image: HashMap<&str, Vec<(usize, &GroundTruth)>> = HashMap::new();
    for (i, gt) in ground_truths.iter().enumerate() {
        gts_by_image.entry(gt.image.as_str()).or_default().push((i, gt));
    }
    let mut claimed = vec![false; ground_truths.len()];

    let mut matches = Vec::with_capacity(detections.len());
    for &det_idx in &order {
        let det = &detections[det_idx];
        let mut best: Option<(usize, f64)> = None;
        if let Some(candidates) = gts_by_image.get(det.image.as_str()) {
            for &(gt_idx, gt) in candidates {
                if claimed[gt_idx] {
                    continue;
                }
                let value = iou(&det.bbox, &gt.bbox);
                if value >= iou_thresh && best.map_or(true, |(_, b)| value > b) {
                    best = Some((gt_idx, value));
                }
            }
        }
        let tp = match best {
            Some((gt_idx, _)) => {
                claimed[gt_idx] = true;
                true
            }
            None => false,
        };
        matches.push(DetMatch {
            score: det.score,
            tp,
        });
    }
    matches
}

/// Average-precision variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApVariant {
    /// Area under the precision envelope at every recall step.
    AllPoints,
    /// Mean of the envelope at recalls 0.0, 0.1, …, 1.0.
    ElevenPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// False when the class had neither ground truth nor detections, in
    /// which case `ap` is 0 by convention.
    pub defined: bool,
}

/// Average precision from match flags (already in descending score order)
/// and the class ground-truth count.
pub fn average_precision(matches: &[DetMatch], n_gt: usize, variant: ApVariant) -> ApResult {
    if n_gt == 0 {
        return ApResult {
            ap: 0.0,
            defined: !matches.is_empty(),
        };
    }
    if matches.is_empty() {
        return ApResult {
            ap: 0.0,
            defined: true,
        };
    }
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(matches.len()); // (recall, precision)
    let mut tp = 0usize;
    let mut fp = 0usize;
    for m in matches {
        if m.tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((
            tp as f64 / n_gt as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }
    // precision envelope from the right
    let mut envelope = points.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let ap = match variant {
        ApVariant::AllPoints => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for &(recall, precision) in &envelope {
                area += (recall - prev_recall) * precision;
                prev_recall = recall;
            }
            area
        }
        ApVariant::ElevenPoint => {
            let mut sum = 0.0;
            for i in 0..=10 {
                let r = i as f64 / 10.0;
                let p = envelope
                    .iter()
                    .filter(|&&(recall, _)| recall >= r - 1e-12)
                    .map(|&(_, p)| p)
                    .fold(0.0f64, f64::max);
                sum += p;
            }
            sum / 11.0
        }
    };
    ApResult { ap, defined: true }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassAp {
    pub ap: f64,
    pub n_gt: usize,
    pub n_detections: usize,
}

/// Per-class AP table plus mAP (mean over classes with ground truth).
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub iou_thresh: f64,
    pub variant: ApVariant,
    pub per_class: BTreeMap<String, ClassAp>,
    pub map: f64,
}

/// Evaluate labeled detections against ground truth at one IoU threshold.
pub fn evaluate_detections(
    detections: &[Detection],
    ground_truths: &[GroundTruth],
    iou_thresh: f64,
    variant: ApVariant,
) -> EvalReport {
    let mut classes: BTreeSet<&str> = ground_truths.iter().map(|g| g.label.as_str()).collect();
    classes.extend(detections.iter().map(|d| d.label.as_str()));

    let mut per_class = BTreeMap::new();
    let mut map_sum = 0.0;
    let mut map_classes = 0usize;
    for class in classes {
        let class_dets: Vec<Detection> = detections
            .iter()
            .filter(|d| d.label == class)
            .cloned()
            .collect();
        let class_gts: Vec<GroundTruth> = ground_truths
            .iter()
            .filter(|g| g.label == class)
            .cloned()
            .collect();
        let matches = match_detections(&class_dets, &class_gts, iou_thresh);
        let result = average_precision(&matches, class_gts.len(), variant);
        if !class_gts.is_empty() {
            map_sum += result.ap;
            map_classes += 1;
        }
        per_class.insert(
            class.to_string(),
            ClassAp {
                ap: result.ap,
                n_gt: class_gts.len(),
                n_detections: class_dets.len(),
            },
        );
    }
    EvalReport {
        iou_thresh,
        variant,
        per_class,
        map: if map_classes > 0 {
            map_sum / map_classes as f64
        } else {
            0.0
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecallResult {
    pub covered: usize,
    pub total: usize,
    pub recall: f64,
}

/// Fraction of ground-truth boxes covered by at least one proposal with
/// IoU ≥ `iou_thresh` (class-agnostic, per image).
pub fn recall_at_iou(
    proposals: &[Proposal],
    ground_truths: &[GroundTruth],
    iou_thresh: f64,
) -> RecallResult {
    let mut props_by_image: HashMap<&str, Vec<&Proposal>> = HashMap::new();
    for p in proposals {
        props_by_image.entry(p.image.as_str()).or_default().push(p);
    }
    let mut covered = 0usize;
    for gt in ground_truths {
        let hit = props_by_image
            .get(gt.image.as_str())
            .is_some_and(|props| props.iter().any(|p| iou(&p.bbox, &gt.bbox) >= iou_thresh));
        if hit {
            covered += 1;
        }
    }
    let total = ground_truths.len();
    RecallResult {
        covered,
        total,
        recall: if total > 0 {
            covered as f64 / total as f64
        } else {
            0.0
        },
    }
}

/// Recall table over IoU thresholds (rows) and named proposal sets
/// (columns).
#[derive(Clone, Debug, Serialize)]
pub struct RecallTable {
    pub thresholds: Vec<f64>,
    pub columns: Vec<String>,
    /// `values[t][c]` = recall at `thresholds[t]` for `columns[c]`.
    pub values: Vec<Vec<RecallResult>>,
}

pub fn recall_table(
    sets: &[(String, Vec<GroundTruth>, Vec<Proposal>)],
    thresholds: &[f64],
) -> RecallTable {
    let values = thresholds
        .iter()
        .map(|&t| {
            sets.iter()
                .map(|(_, gts, props)| recall_at_iou(props, gts, t))
                .collect()
        })
        .collect();
    RecallTable {
        thresholds: thresholds.to_vec(),
        columns: sets.iter().map(|(name, _, _)| name.clone()).collect(),
        values,
    }
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| EvalError::BadRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_detections_jsonl(path: &Path) -> Result<Vec<Detection>, EvalError> {
    read_jsonl(path)
}

pub fn read_proposals_jsonl(path: &Path) -> Result<Vec<Proposal>, EvalError> {
    read_jsonl(path)
}

pub fn write_detections_jsonl(path: &Path, detections: &[Detection]) -> Result<(), EvalError> {
    let mut text = String::new();
    for d in detections {
        text.push_str(&serde_json::to_string(d).expect("detection serialization"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_proposals_jsonl(path: &Path, proposals: &[Proposal]) -> Result<(), EvalError> {
    let mut text = String::new();
    for p in proposals {
        text.push_str(&serde_json::to_string(p).expect("proposal serialization"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Ground truth from the annotations of a generated run.
pub fn ground_truth_from_run(run_dir: &Path) -> Result<Vec<GroundTruth>, EvalError> {
    Ok(ground_truth_from_manifest(&load_run_manifest(run_dir)?))
}

pub fn ground_truth_from_manifest(manifest: &RunManifest) -> Vec<GroundTruth> {
    manifest
        .composites
        .iter()
        .flat_map(|record| {
            record.objects.iter().map(|object| GroundTruth {
                image: record.id.clone(),
                label: object.label.clone(),
                bbox: object.bbox,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Text tables
// ---------------------------------------------------------------------------

pub fn format_ap_table(report: &EvalReport) -> String {
    let name_width = report
        .per_class
        .keys()
        .map(|k| k.len())
        .chain(["class".len()].into_iter())
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>7}  {:>6}  {:>6}\n",
        "class", "AP", "n_gt", "n_det"
    ));
    for (class, entry) in &report.per_class {
        out.push_str(&format!(
            "{:<name_width$}  {:>7.4}  {:>6}  {:>6}\n",
            class, entry.ap, entry.n_gt, entry.n_detections
        ));
    }
    out.push_str(&format!(
        "{:<name_width$}  {:>7.4}  (IoU {})\n",
        "mAP", report.map, report.iou_thresh
    ));
    out
}

pub fn format_recall_table(table: &RecallTable) -> String {
    let col_width = table
        .columns
        .iter()
        .map(|c| c.len())
        .max()
        .unwrap_or(8)
        .max(8);
    let mut out = String::new();
    out.push_str(&format!("{:<6}", "IoU"));
    for column in &table.columns {
        out.push_str(&format!("  {column:>col_width$}"));
    }
    out.push('\n');
    for (t, &thresh) in table.thresholds.iter().enumerate() {
        out.push_str(&format!("{thresh:<6}"));
        for c in 0..table.columns.len() {
            let recall_pct = table.values[t][c].recall * 100.0;
            out.push_str(&format!("  {recall_pct:>col_width$.1}"));
        }
        out.push('\n');
    }
    out
}
