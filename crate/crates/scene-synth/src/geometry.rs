//! Support-surface extraction from RGB-D frames: depth backprojection into
//! an organized point cloud, local surface normals, region-growing
//! oversegmentation, per-region RANSAC plane fits, and selection of large
//! gravity-aligned planes.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{CameraIntrinsics, RgbdFrame};
use crate::raster::{neighbors4, Mask};

/// Plane `n·X + d = 0` with unit normal, oriented camera-facing
/// (`n·c < 0` for the inlier centroid `c`).
#[derive(Clone, Copy, Debug)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl PlaneModel {
    pub fn distance(&self, point: &Vector3<f64>) -> f64 {
        (self.normal.dot(point) + self.offset).abs()
    }
}

/// Gravity direction in camera coordinates plus the alignment tolerance for
/// accepting a plane as a support surface.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GravityModel {
    pub up: [f64; 3],
    pub angle_tol_deg: f64,
}

impl Default for GravityModel {
    fn default() -> Self {
        // level-camera assumption: camera y points down
        Self {
            up: [0.0, -1.0, 0.0],
            angle_tol_deg: 15.0,
        }
    }
}

impl GravityModel {
    pub fn up_vector(&self) -> Vector3<f64> {
        Vector3::new(self.up[0], self.up[1], self.up[2]).normalize()
    }

    pub fn with_up(up: [f64; 3]) -> Self {
        Self {
            up,
            ..Self::default()
        }
    }
}

/// A fitted, gravity-aligned planar region.
#[derive(Clone, Debug)]
pub struct SupportSurface {
    pub plane: PlaneModel,
    pub support_mask: Mask,
    pub extent_px: usize,
    pub semantic_valid: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryParams {
    pub ransac_iterations: usize,
    pub inlier_dist_m: f64,
    pub min_inlier_frac: f64,
    /// Minimum surface extent as a fraction of the image area.
    pub min_extent_frac: f64,
    pub seg_angle_tol_deg: f64,
    pub seg_dist_tol_m: f64,
    pub merge_angle_tol_deg: f64,
    pub merge_dist_tol_m: f64,
    /// Side of the square window used for the local normal fit.
    pub normal_window: u32,
    pub min_region_px: usize,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            ransac_iterations: 200,
            inlier_dist_m: 0.02,
            min_inlier_frac: 0.5,
            min_extent_frac: 0.005,
            seg_angle_tol_deg: 10.0,
            seg_dist_tol_m: 0.02,
            merge_angle_tol_deg: 5.0,
            merge_dist_tol_m: 0.03,
            normal_window: 5,
            min_region_px: 100,
        }
    }
}

/// Organized point cloud; one entry per pixel, `None` where depth is missing.
#[derive(Clone, Debug)]
pub struct PointCloud {
    width: u32,
    height: u32,
    points: Vec<Option<Vector3<f64>>>,
}

impl PointCloud {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<Vector3<f64>> {
        self.points[(y * self.width + x) as usize]
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

/// Per-pixel unit surface normals, camera-facing; `None` where undefined.
#[derive(Clone, Debug)]
pub struct NormalMap {
    width: u32,
    height: u32,
    normals: Vec<Option<Vector3<f64>>>,
}

impl NormalMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<Vector3<f64>> {
        self.normals[(y * self.width + x) as usize]
    }
}

/// Backproject a frame's depth map: valid pixel `(u, v)` with depth `z`
/// maps to `((u−cx)·z/fx, (v−cy)·z/fy, z)`.
pub fn backproject(frame: &RgbdFrame) -> PointCloud {
    let intr = &frame.intrinsics;
    let (w, h) = (intr.width, intr.height);
    let mut points = Vec::with_capacity((w * h) as usize);
    for v in 0..h {
        for u in 0..w {
            let z = frame.depth.get(u, v) as f64;
            if z > 0.0 {
                let x = (u as f64 - intr.cx) * z / intr.fx;
                let y = (v as f64 - intr.cy) * z / intr.fy;
                points.push(Some(Vector3::new(x, y, z)));
            } else {
                points.push(None);
            }
        }
    }
    PointCloud {
        width: w,
        height: h,
        points,
    }
}

/// Project a camera-frame point back to pixel coordinates.
pub fn project(intrinsics: &CameraIntrinsics, point: &Vector3<f64>) -> Option<(f64, f64)> {
    if point.z <= 0.0 {
        return None;
    }
    Some((
        intrinsics.fx * point.x / point.z + intrinsics.cx,
        intrinsics.fy * point.y / point.z + intrinsics.cy,
    ))
}

/// Per-pixel normals from a total-least-squares plane fit over the valid
/// cloud points in a `k×k` window. Pixels with fewer than 3 valid points in
/// the window (or no depth of their own) are marked invalid. Normals are
/// oriented to face the camera (`n·X < 0`).
pub fn compute_normals(cloud: &PointCloud, window: u32) -> NormalMap {
    let half = (window / 2) as i64;
    let (w, h) = (cloud.width, cloud.height);
    let mut normals = vec![None; (w * h) as usize];
    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity((window * window) as usize);
    for y in 0..h {
        for x in 0..w {
            let Some(center) = cloud.get(x, y) else {
                continue;
            };
            pts.clear();
            for dy in -half..=half {
                for dx in -half..=half {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if let Some(p) = cloud.get(nx as u32, ny as u32) {
                        pts.push(p);
                    }
                }
            }
            if pts.len() < 3 {
                continue;
            }
            if let Some(mut n) = fit_normal(&pts) {
                if n.dot(&center) > 0.0 {
                    n = -n;
                }
                normals[(y * w + x) as usize] = Some(n);
            }
        }
    }
    NormalMap {
        width: w,
        height: h,
        normals,
    }
}

/// Smallest-eigenvector direction of the scatter matrix of `pts`.
fn fit_normal(pts: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let v = eig.eigenvectors.column(min_idx).into_owned();
    let norm = v.norm();
    if norm < 1e-12 {
        return None;
    }
    Some(v / norm)
}

/// Total-least-squares plane through `pts`, oriented camera-facing.
fn fit_plane_tls(pts: &[Vector3<f64>]) -> Option<PlaneModel> {
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let mut normal = fit_normal(pts)?;
    if normal.dot(&centroid) > 0.0 {
        normal = -normal;
    }
    Some(PlaneModel {
        normal,
        offset: -normal.dot(&centroid),
    })
}

/// Region-grown oversegmentation over 4-connected neighbors with compatible
/// normals. Neighbors join a region when their normal angle difference is
/// within `seg_angle_tol_deg` and the point-to-plane offset difference is
/// within `seg_dist_tol_m`. Regions smaller than `min_region_px` are
/// discarded. Returned regions are pairwise disjoint, each 4-connected,
/// listed in raster order of their seed pixel.
pub fn oversegment(
    cloud: &PointCloud,
    normals: &NormalMap,
    params: &GeometryParams,
) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (cloud.width, cloud.height);
    let cos_tol = params.seg_angle_tol_deg.to_radians().cos();
    let mut visited = vec![false; (w * h) as usize];
    let mut regions = Vec::new();
    let mut frontier = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let idx = (sy * w + sx) as usize;
            if visited[idx] || cloud.get(sx, sy).is_none() || normals.get(sx, sy).is_none() {
                continue;
            }
            visited[idx] = true;
            let mut region = vec![(sx, sy)];
            frontier.clear();
            frontier.push((sx, sy));
            while let Some((cx, cy)) = frontier.pop() {
                let cp = cloud.get(cx, cy).unwrap();
                let cn = normals.get(cx, cy).unwrap();
                for (nx, ny) in neighbors4(cx, cy, w, h) {
                    let nidx = (ny * w + nx) as usize;
                    if visited[nidx] {
                        continue;
                    }
                    let (Some(np), Some(nn)) = (cloud.get(nx, ny), normals.get(nx, ny)) else {
                        continue;
                    };
                    if cn.dot(&nn) < cos_tol {
                        continue;
                    }
                    if cn.dot(&(np - cp)).abs() > params.seg_dist_tol_m {
                        continue;
                    }
                    visited[nidx] = true;
                    region.push((nx, ny));
                    frontier.push((nx, ny));
                }
            }
            if region.len() >= params.min_region_px {
                regions.push(region);
            }
        }
    }
    regions
}

/// A RANSAC plane fit together with its inlier support.
#[derive(Clone, Debug)]
pub struct PlaneFit {
    pub plane: PlaneModel,
    pub inliers: Mask,
    pub inlier_frac: f64,
}

/// Best-of-N 3-point RANSAC over the region's cloud points, refit by total
/// least squares on the winning consensus set. Returns `None` when the
/// inlier fraction stays below `min_inlier_frac`. Deterministic for a fixed
/// rng state; collinear sample triples are rejected and redrawn.
pub fn fit_plane_ransac<R: Rng>(
    region: &[(u32, u32)],
    cloud: &PointCloud,
    params: &GeometryParams,
    rng: &mut R,
) -> Option<PlaneFit> {
    let pts: Vec<(u32, u32, Vector3<f64>)> = region
        .iter()
        .filter_map(|&(x, y)| cloud.get(x, y).map(|p| (x, y, p)))
        .collect();
    if pts.len() < 3 {
        return None;
    }

    let mut best_count = 0usize;
    let mut best_plane: Option<PlaneModel> = None;
    for _ in 0..params.ransac_iterations {
        let Some((a, b, c)) = sample_triple(&pts, rng) else {
            continue;
        };
        let mut normal = (b - a).cross(&(c - a));
        let norm = normal.norm();
        if norm < 1e-12 {
            continue;
        }
        normal /= norm;
        let offset = -normal.dot(&a);
        let count = pts
            .iter()
            .filter(|(_, _, p)| (normal.dot(p) + offset).abs() <= params.inlier_dist_m)
            .count();
        if count > best_count {
            best_count = count;
            best_plane = Some(PlaneModel { normal, offset });
        }
    }

    let plane = best_plane?;
    if (best_count as f64) < params.min_inlier_frac * pts.len() as f64 {
        return None;
    }

    // refit on the consensus set, then recompute inliers against the refit
    let consensus: Vec<Vector3<f64>> = pts
        .iter()
        .filter(|(_, _, p)| plane.distance(p) <= params.inlier_dist_m)
        .map(|(_, _, p)| *p)
        .collect();
    let refit = fit_plane_tls(&consensus)?;
    let mut inliers = Mask::new(cloud.width, cloud.height);
    let mut count = 0usize;
    for (x, y, p) in &pts {
        if refit.distance(p) <= params.inlier_dist_m {
            inliers.set(*x, *y, true);
            count += 1;
        }
    }
    let inlier_frac = count as f64 / pts.len() as f64;
    if inlier_frac < params.min_inlier_frac {
        return None;
    }
    Some(PlaneFit {
        plane: refit,
        inliers,
        inlier_frac,
    })
}

/// Draw three distinct, non-degenerate sample points. Collinear triples are
/// redrawn a bounded number of times.
fn sample_triple<R: Rng>(
    pts: &[(u32, u32, Vector3<f64>)],
    rng: &mut R,
) -> Option<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    let n = pts.len();
    for _ in 0..10 {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        while j == i {
            j = rng.gen_range(0..n);
        }
        let mut k = rng.gen_range(0..n);
        while k == i || k == j {
            k = rng.gen_range(0..n);
        }
        let (a, b, c) = (pts[i].2, pts[j].2, pts[k].2);
        if (b - a).cross(&(c - a)).norm() >= 1e-12 {
            return Some((a, b, c));
        }
    }
    None
}

/// Keep plane fits aligned with gravity and of sufficient extent, then merge
/// near-coplanar survivors into single surfaces with unioned masks. Merged
/// surfaces are refit on the union and their masks re-filtered to points
/// within `inlier_dist_m` of the refit plane. `semantic_valid` starts false.
pub fn select_support_surfaces(
    fits: &[PlaneFit],
    cloud: &PointCloud,
    gravity: &GravityModel,
    min_extent_px: usize,
    params: &GeometryParams,
) -> Vec<SupportSurface> {
    let up = gravity.up_vector();
    let cos_gravity = gravity.angle_tol_deg.to_radians().cos();
    let kept: Vec<&PlaneFit> = fits
        .iter()
        .filter(|fit| {
            fit.inliers.count() >= min_extent_px && fit.plane.normal.dot(&up) >= cos_gravity
        })
        .collect();

    // transitive merge of near-coplanar planes
    let cos_merge = params.merge_angle_tol_deg.to_radians().cos();
    let mut group_of: Vec<usize> = (0..kept.len()).collect();
    for i in 0..kept.len() {
        for j in (i + 1)..kept.len() {
            let a = &kept[i].plane;
            let b = &kept[j].plane;
            if a.normal.dot(&b.normal) >= cos_merge
                && (a.offset - b.offset).abs() <= params.merge_dist_tol_m
            {
                let (gi, gj) = (find_group(&group_of, i), find_group(&group_of, j));
                let target = gi.min(gj);
                group_of[gi] = target;
                group_of[gj] = target;
            }
        }
    }

    let mut surfaces = Vec::new();
    for root in 0..kept.len() {
        if find_group(&group_of, root) != root {
            continue;
        }
        let members: Vec<&PlaneFit> = (0..kept.len())
            .filter(|&i| find_group(&group_of, i) == root)
            .map(|i| kept[i])
            .collect();
        let surface = if members.len() == 1 {
            SupportSurface {
                plane: members[0].plane,
                support_mask: members[0].inliers.clone(),
                extent_px: members[0].inliers.count(),
                semantic_valid: false,
            }
        } else {
            let mut union = members[0].inliers.clone();
            for m in &members[1..] {
                union = union.union(&m.inliers);
            }
            let pts: Vec<Vector3<f64>> = union
                .set_pixels()
                .iter()
                .filter_map(|&(x, y)| cloud.get(x, y))
                .collect();
            let Some(plane) = fit_plane_tls(&pts) else {
                continue;
            };
            let mut mask = Mask::new(union.width(), union.height());
            for (x, y) in union.set_pixels() {
                if let Some(p) = cloud.get(x, y) {
                    if plane.distance(&p) <= params.inlier_dist_m {
                        mask.set(x, y, true);
                    }
                }
            }
            let extent = mask.count();
            SupportSurface {
                plane,
                support_mask: mask,
                extent_px: extent,
                semantic_valid: false,
            }
        };
        if surface.extent_px >= min_extent_px {
            surfaces.push(surface);
        }
    }
    surfaces
}

fn find_group(group_of: &[usize], mut i: usize) -> usize {
    while group_of[i] != i {
        i = group_of[i];
    }
    i
}

/// Full per-frame pipeline: backproject, estimate normals, oversegment,
/// fit planes per region, and select gravity-aligned support surfaces.
pub fn detect_support_surfaces<R: Rng>(
    frame: &RgbdFrame,
    gravity: &GravityModel,
    params: &GeometryParams,
    rng: &mut R,
) -> Vec<SupportSurface> {
    let gravity = match frame.up {
        Some(up) => GravityModel {
            up,
            angle_tol_deg: gravity.angle_tol_deg,
        },
        None => *gravity,
    };
    let cloud = backproject(frame);
    let normals = compute_normals(&cloud, params.normal_window);
    let regions = oversegment(&cloud, &normals, params);
    let fits: Vec<PlaneFit> = regions
        .iter()
        .filter_map(|region| fit_plane_ransac(region, &cloud, params, rng))
        .collect();
    let min_extent =
        (params.min_extent_frac * (frame.intrinsics.width * frame.intrinsics.height) as f64) as usize;
    select_support_surfaces(&fits, &cloud, &gravity, min_extent.max(3), params)
}
