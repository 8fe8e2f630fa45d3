//! GraphCut refinement of depth-derived object masks.
//!
//! The input mask seeds a trimap (sure foreground by erosion, sure
//! background by dilation-complement). Color histograms built from the
//! seeds give per-pixel unary capacities, 4-neighbor contrast terms give
//! pairwise capacities, and an exact max-flow/min-cut solve yields the
//! refined foreground.
//!
//! Graph construction, for a crop with color `c_p` at pixel `p`:
//!
//! * source→p capacity `−ln P_bg(c_p)`, p→sink capacity `−ln P_fg(c_p)`,
//!   where the histograms use `hist_bins³` RGB bins with add-one smoothing:
//!   `P(bin) = (count + 1) / (N + hist_bins³)`.
//! * seed pixels get [`SEED_CAPACITY`] toward their own terminal and 0
//!   toward the other.
//! * neighbor pair `(p, q)` gets `λ·exp(−β·‖c_p − c_q‖²)` in both
//!   directions; with `β` unset it is `1 / (2·mean‖c_p − c_q‖²)` over the
//!   crop's neighbor pairs (0 when the crop is uniform).

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::DatasetError;
use crate::raster::Mask;

/// Capacity pinning seed pixels to their terminal.
pub const SEED_CAPACITY: f64 = 1e9;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("mask and crop dimensions differ")]
    DimensionMismatch,
    #[error("input mask is empty")]
    EmptyMask,
    #[error("erosion/dilation left no {0} seeds")]
    EmptySeedRegion(&'static str),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    /// Erosion radius producing sure-foreground seeds.
    pub r_fg: u32,
    /// Dilation radius whose complement is sure background.
    pub r_bg: u32,
    /// Pairwise term strength.
    pub lambda: f64,
    /// Contrast scale; `None` selects it from the crop (see module docs).
    pub beta: Option<f64>,
    /// Histogram bins per color channel.
    pub hist_bins: u32,
    /// Holes smaller than this many pixels are filled.
    pub hole_fill_px: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            r_fg: 5,
            r_bg: 9,
            lambda: 50.0,
            beta: None,
            hist_bins: 8,
            hole_fill_px: 64,
        }
    }
}

/// Sure-foreground / sure-background partition seeded from the input mask;
/// everything else is the unknown band the cut decides.
#[derive(Clone, Debug)]
pub struct TrimapSeeds {
    pub sure_fg: Mask,
    pub sure_bg: Mask,
}

/// Derive trimap seeds by eroding (foreground) and dilating (background)
/// the input mask. If either seed set comes out empty the radii are halved
/// once before giving up.
pub fn trimap_seeds(mask: &Mask, r_fg: u32, r_bg: u32) -> Result<TrimapSeeds, RefineError> {
    for (fg_r, bg_r) in [(r_fg, r_bg), (r_fg / 2, r_bg / 2)] {
        let sure_fg = mask.erode(fg_r);
        let sure_bg = mask.dilate(bg_r).complement();
        if !sure_fg.is_empty() && !sure_bg.is_empty() {
            return Ok(TrimapSeeds { sure_fg, sure_bg });
        }
    }
    let which = if mask.erode(r_fg / 2).is_empty() {
        "sure_fg"
    } else {
        "sure_bg"
    };
    Err(RefineError::EmptySeedRegion(which))
}

/// Pixel-terminal flow network for binary segmentation: one node per crop
/// pixel, unary capacities to the two terminals, symmetric pairwise
/// capacities on 4-neighbor pairs.
#[derive(Clone, Debug)]
pub struct SegGraph {
    num_nodes: usize,
    source_cap: Vec<f64>,
    sink_cap: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
}

impl SegGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            source_cap: vec![0.0; num_nodes],
            sink_cap: vec![0.0; num_nodes],
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn set_terminal_caps(&mut self, node: usize, source: f64, sink: f64) {
        debug_assert!(source >= 0.0 && sink >= 0.0);
        self.source_cap[node] = source;
        self.sink_cap[node] = sink;
    }

    pub fn terminal_caps(&self, node: usize) -> (f64, f64) {
        (self.source_cap[node], self.sink_cap[node])
    }

    /// Add a symmetric pairwise edge (capacity `cap` in each direction).
    pub fn add_edge(&mut self, a: usize, b: usize, cap: f64) {
        debug_assert!(cap >= 0.0 && a != b);
        self.edges.push((a as u32, b as u32, cap));
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }
}

/// Result of a max-flow solve: the flow value and, per node, whether it
/// lies on the source (foreground) side of the minimum cut.
#[derive(Clone, Debug)]
pub struct MaxFlowResult {
    pub flow: f64,
    pub source_side: Vec<bool>,
}

impl MaxFlowResult {
    /// Capacity of the returned cut, from the original graph. Equals the
    /// flow value by max-flow/min-cut duality.
    pub fn cut_capacity(&self, graph: &SegGraph) -> f64 {
        let mut cap = 0.0;
        for node in 0..graph.num_nodes() {
            let (s, t) = graph.terminal_caps(node);
            if self.source_side[node] {
                cap += t;
            } else {
                cap += s;
            }
        }
        for &(a, b, c) in graph.edges() {
            let (sa, sb) = (self.source_side[a as usize], self.source_side[b as usize]);
            if sa != sb {
                cap += c;
            }
        }
        cap
    }
}

/// Exact maximum flow from source to sink via shortest augmenting paths
/// (BFS level graph + blocking flow), returning the min-cut partition.
pub fn max_flow_min_cut(graph: &SegGraph) -> MaxFlowResult {
    let n = graph.num_nodes;
    let source = n;
    let sink = n + 1;
    let mut net = FlowNet::new(n + 2);
    for node in 0..n {
        if graph.source_cap[node] > 0.0 {
            net.add_edge(source, node, graph.source_cap[node], 0.0);
        }
        if graph.sink_cap[node] > 0.0 {
            net.add_edge(node, sink, graph.sink_cap[node], 0.0);
        }
    }
    for &(a, b, c) in &graph.edges {
        if c > 0.0 {
            net.add_edge(a as usize, b as usize, c, c);
        }
    }
    let flow = net.max_flow(source, sink);
    let reach = net.residual_reachable(source);
    MaxFlowResult {
        flow,
        source_side: reach[..n].to_vec(),
    }
}

/// Residuals below this are treated as saturated; exact for integer-valued
/// capacities.
const RESIDUAL_EPS: f64 = 1e-9;

struct FlowNet {
    // paired edges: edge i and i^1 are mutual reverses
    to: Vec<u32>,
    residual: Vec<f64>,
    adj: Vec<Vec<u32>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNet {
    fn new(n: usize) -> Self {
        Self {
            to: Vec::new(),
            residual: Vec::new(),
            adj: vec![Vec::new(); n],
            level: vec![-1; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap_fwd: f64, cap_rev: f64) {
        let e = self.to.len() as u32;
        self.to.push(v as u32);
        self.residual.push(cap_fwd);
        self.to.push(u as u32);
        self.residual.push(cap_rev);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.fill(-1);
        self.level[source] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if self.level[v] < 0 && self.residual[e as usize] > RESIDUAL_EPS {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, u: usize, sink: usize, pushed: f64) -> f64 {
        if u == sink {
            return pushed;
        }
        while self.iter[u] < self.adj[u].len() {
            let e = self.adj[u][self.iter[u]] as usize;
            let v = self.to[e] as usize;
            if self.level[v] == self.level[u] + 1 && self.residual[e] > RESIDUAL_EPS {
                let d = self.dfs(v, sink, pushed.min(self.residual[e]));
                if d > 0.0 {
                    self.residual[e] -= d;
                    self.residual[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(source, sink) {
            self.iter.fill(0);
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY);
                if pushed <= 0.0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    fn residual_reachable(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[source] = true;
        let mut stack = vec![source];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e as usize] as usize;
                if !seen[v] && self.residual[e as usize] > RESIDUAL_EPS {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Build the segmentation graph for a crop and its input mask.
pub fn build_seg_graph(
    rgb: &RgbImage,
    mask: &Mask,
    params: &RefineParams,
) -> Result<SegGraph, RefineError> {
    let seeds = check_inputs(rgb, mask, params)?;
    Ok(build_seg_graph_with_seeds(rgb, &seeds, params))
}

fn check_inputs(
    rgb: &RgbImage,
    mask: &Mask,
    params: &RefineParams,
) -> Result<TrimapSeeds, RefineError> {
    if rgb.width() != mask.width() || rgb.height() != mask.height() {
        return Err(RefineError::DimensionMismatch);
    }
    if mask.is_empty() {
        return Err(RefineError::EmptyMask);
    }
    trimap_seeds(mask, params.r_fg, params.r_bg)
}

/// Graph construction once seeds are known; see the module docs for the
/// capacity definitions.
pub fn build_seg_graph_with_seeds(
    rgb: &RgbImage,
    seeds: &TrimapSeeds,
    params: &RefineParams,
) -> SegGraph {
    let (w, h) = (rgb.width(), rgb.height());
    let n = (w * h) as usize;
    let bins = params.hist_bins;
    let total_bins = (bins * bins * bins) as usize;

    let bin_of = |px: &image::Rgb<u8>| -> usize {
        let b = |c: u8| ((c as u32 * bins) / 256).min(bins - 1) as usize;
        (b(px[0]) * bins as usize + b(px[1])) * bins as usize + b(px[2])
    };

    let mut fg_hist = vec![0u64; total_bins];
    let mut bg_hist = vec![0u64; total_bins];
    let mut fg_n = 0u64;
    let mut bg_n = 0u64;
    for y in 0..h {
        for x in 0..w {
            let bin = bin_of(rgb.get_pixel(x, y));
            if seeds.sure_fg.get(x, y) {
                fg_hist[bin] += 1;
                fg_n += 1;
            } else if seeds.sure_bg.get(x, y) {
                bg_hist[bin] += 1;
                bg_n += 1;
            }
        }
    }
    let log_prob = |hist: &[u64], n: u64, bin: usize| -> f64 {
        -(((hist[bin] + 1) as f64) / ((n + total_bins as u64) as f64)).ln()
    };

    // beta from the mean squared neighbor color difference
    let color_dist2 = |a: &image::Rgb<u8>, b: &image::Rgb<u8>| -> f64 {
        (0..3)
            .map(|c| {
                let d = a[c] as f64 - b[c] as f64;
                d * d
            })
            .sum()
    };
    let beta = params.beta.unwrap_or_else(|| {
        let mut sum = 0.0;
        let mut count = 0u64;
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    sum += color_dist2(rgb.get_pixel(x, y), rgb.get_pixel(x + 1, y));
                    count += 1;
                }
                if y + 1 < h {
                    sum += color_dist2(rgb.get_pixel(x, y), rgb.get_pixel(x, y + 1));
                    count += 1;
                }
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        if mean > 0.0 {
            1.0 / (2.0 * mean)
        } else {
            0.0
        }
    });

    let mut graph = SegGraph::new(n);
    for y in 0..h {
        for x in 0..w {
            let node = (y * w + x) as usize;
            let (src, snk) = if seeds.sure_fg.get(x, y) {
                (SEED_CAPACITY, 0.0)
            } else if seeds.sure_bg.get(x, y) {
                (0.0, SEED_CAPACITY)
            } else {
                let bin = bin_of(rgb.get_pixel(x, y));
                (log_prob(&bg_hist, bg_n, bin), log_prob(&fg_hist, fg_n, bin))
            };
            graph.set_terminal_caps(node, src, snk);
            // right and down neighbors; symmetry makes that every pair once
            if x + 1 < w {
                let cap = params.lambda
                    * (-beta * color_dist2(rgb.get_pixel(x, y), rgb.get_pixel(x + 1, y))).exp();
                graph.add_edge(node, node + 1, cap);
            }
            if y + 1 < h {
                let cap = params.lambda
                    * (-beta * color_dist2(rgb.get_pixel(x, y), rgb.get_pixel(x, y + 1))).exp();
                graph.add_edge(node, node + w as usize, cap);
            }
        }
    }
    graph
}

/// Refinement outcome; `fallback` is set when the solve degenerated and the
/// input mask was returned unchanged.
#[derive(Clone, Debug)]
pub struct RefinedMask {
    pub mask: Mask,
    pub fallback: bool,
}

/// Refine an object mask: min-cut foreground, keep the largest connected
/// component (plus any component holding sure-foreground seeds), and fill
/// small holes. Falls back to the input mask when seeding or the cut
/// degenerates.
pub fn refine_mask(
    rgb: &RgbImage,
    mask: &Mask,
    params: &RefineParams,
) -> Result<RefinedMask, RefineError> {
    if rgb.width() != mask.width() || rgb.height() != mask.height() {
        return Err(RefineError::DimensionMismatch);
    }
    if mask.is_empty() {
        return Err(RefineError::EmptyMask);
    }
    let seeds = match trimap_seeds(mask, params.r_fg, params.r_bg) {
        Ok(seeds) => seeds,
        Err(RefineError::EmptySeedRegion(_)) => {
            return Ok(RefinedMask {
                mask: mask.clone(),
                fallback: true,
            });
        }
        Err(e) => return Err(e),
    };
    let graph = build_seg_graph_with_seeds(rgb, &seeds, params);
    let cut = max_flow_min_cut(&graph);

    let (w, h) = (mask.width(), mask.height());
    let fg = Mask::from_fn(w, h, |x, y| cut.source_side[(y * w + x) as usize]);
    let cleaned = keep_main_components(&fg, &seeds.sure_fg);
    let filled = fill_small_holes(&cleaned, &seeds.sure_bg, params.hole_fill_px);
    if filled.is_empty() {
        return Ok(RefinedMask {
            mask: mask.clone(),
            fallback: true,
        });
    }
    Ok(RefinedMask {
        mask: filled,
        fallback: false,
    })
}

/// Keep the largest 4-connected component and any component that contains
/// sure-foreground seeds.
fn keep_main_components(fg: &Mask, sure_fg: &Mask) -> Mask {
    let (labels, count) = fg.connected_components();
    if count <= 1 {
        return fg.clone();
    }
    let (w, h) = (fg.width(), fg.height());
    let mut sizes = vec![0usize; count + 1];
    let mut holds_seed = vec![false; count + 1];
    for y in 0..h {
        for x in 0..w {
            let label = labels[(y * w + x) as usize] as usize;
            if label > 0 {
                sizes[label] += 1;
                if sure_fg.get(x, y) {
                    holds_seed[label] = true;
                }
            }
        }
    }
    let largest = (1..=count).max_by_key(|&l| (sizes[l], usize::MAX - l)).unwrap();
    Mask::from_fn(w, h, |x, y| {
        let label = labels[(y * w + x) as usize] as usize;
        label > 0 && (label == largest || holds_seed[label])
    })
}

/// Summary of an in-place library refinement.
#[derive(Clone, Copy, Debug, Default)]
pub struct RefineSummary {
    pub refined: usize,
    pub fallbacks: usize,
}

/// Refine every view mask of an on-disk object library, writing
/// `<view_id>.mask_refined.png` alongside the originals. Original masks are
/// never overwritten; existing refined masks are replaced.
pub fn refine_library_masks(
    library_root: &std::path::Path,
    params: &RefineParams,
) -> Result<RefineSummary, RefineError> {
    let library = crate::dataset_io::load_object_library(library_root)?;
    let views: Vec<&crate::dataset_io::ObjectView> = library
        .instance_ids()
        .iter()
        .flat_map(|id| library.views(id).unwrap())
        .collect();
    let results: Vec<Result<bool, RefineError>> = views
        .par_iter()
        .map(|view| {
            let refined = refine_mask(&view.rgb, &view.mask, params)?;
            let path = library_root
                .join(&view.instance_id)
                .join(format!("{}.mask_refined.png", view.view_id()));
            crate::dataset_io::save_png(&path, refined.mask.to_gray())?;
            Ok(refined.fallback)
        })
        .collect();
    let mut summary = RefineSummary::default();
    for result in results {
        summary.refined += 1;
        if result? {
            summary.fallbacks += 1;
        }
    }
    Ok(summary)
}

/// Fill background components that do not touch the crop border and are
/// smaller than `max_px`, skipping any that contain sure-background seeds.
fn fill_small_holes(fg: &Mask, sure_bg: &Mask, max_px: usize) -> Mask {
    let (w, h) = (fg.width(), fg.height());
    let bg = fg.complement();
    let (labels, count) = bg.connected_components();
    if count == 0 {
        return fg.clone();
    }
    let mut sizes = vec![0usize; count + 1];
    let mut touches_border = vec![false; count + 1];
    let mut has_bg_seed = vec![false; count + 1];
    for y in 0..h {
        for x in 0..w {
            let label = labels[(y * w + x) as usize] as usize;
            if label > 0 {
                sizes[label] += 1;
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    touches_border[label] = true;
                }
                if sure_bg.get(x, y) {
                    has_bg_seed[label] = true;
                }
            }
        }
    }
    Mask::from_fn(w, h, |x, y| {
        if fg.get(x, y) {
            return true;
        }
        let label = labels[(y * w + x) as usize] as usize;
        label > 0 && !touches_border[label] && !has_bg_seed[label] && sizes[label] < max_px
    })
}
