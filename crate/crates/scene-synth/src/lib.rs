//! Synthetic training-set generation for object instance detection.
//!
//! Composites masked object views onto RGB-D background scenes and emits
//! annotated images suitable for detector training, together with the
//! evaluation metrics used to score detections against those annotations.
//!
//! The pipeline, per background frame:
//!
//! 1. [`geometry`] backprojects the depth map, oversegments it, fits planes
//!    with RANSAC, and keeps large gravity-aligned planes as candidate
//!    support surfaces.
//! 2. [`semantics`] validates candidates against a precomputed semantic
//!    label map (counters, tables, desks) and produces the placement mask.
//! 3. [`placement`] plans object/pose/position/scale choices under an
//!    overlap cap, with depth-driven scaling.
//! 4. [`blending`] pastes each scaled view either directly or via a
//!    seamless Poisson clone.
//! 5. [`generator`] orchestrates the run deterministically from a master
//!    seed and writes images, annotations, a run manifest, and statistics.
//!
//! [`mask_refine`] cleans jagged depth-derived object masks with a GraphCut
//! segmentation before compositing, and [`eval`] scores externally produced
//! detections or proposals against generated ground truth.
//!
//! See the `examples/` directory for one runnable example per capability;
//! the `scene-synth` binary exposes the same operations as subcommands.

pub mod bbox;
pub mod blending;
pub mod cli;
pub mod dataset_io;
pub mod eval;
pub mod generator;
pub mod geometry;
pub mod mask_refine;
pub mod placement;
pub mod raster;
pub mod semantics;
pub mod synthetic;

pub use bbox::BBox;
pub use dataset_io::{CameraIntrinsics, ObjectLibrary, ObjectView, RgbdFrame};
pub use geometry::{GravityModel, PlaneModel, SupportSurface};
pub use placement::{CompositePlan, GenerationParams, PlacementSpec};
pub use raster::{DepthMap, LabelMap, Mask};
