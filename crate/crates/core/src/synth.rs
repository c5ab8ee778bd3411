//! Forward simulator and dataset factory: toy scenes, displaced 185° fisheye
//! captures, stitching into imperfect panoramas, and ground-truth calibration
//! labels.
//!
//! The stitcher intentionally maps rays through the assumed-ideal camera
//! poses while the fisheye renders use the true displaced centers and the
//! true angular-distortion field; that modeling mismatch — not noise — is the
//! artifact source in the generated panoramas.

use crate::calib::{transform_scene, CameraRig, DistortionGrid, DualFisheyeCalib, Side};
use crate::geom::{erp_unproject, Pose, Rotation, Vec3};
use crate::raster::{ErpImage, ALPHA_CULL, ALPHA_MAX, COV2D_LAMBDA, NEAR_CLIP, T_STOP};
use crate::scene::{init_from_points, GaussianScene};
use nalgebra::{Matrix2, Matrix2x3, Vector2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one splat")]
    EmptySceneRequest,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// Square equidistant fisheye image: r = f·ψ with f = side/(fov in radians).
/// Pixels outside the image circle (radius side/2) are zero.
#[derive(Debug, Clone)]
pub struct FisheyeImage {
    pub side: usize,
    pub fov_deg: f64,
    pub pixels: Vec<f64>,
}

impl FisheyeImage {
    pub fn zeros(side: usize, fov_deg: f64) -> Self {
        assert!(fov_deg > 180.0 && fov_deg <= 200.0, "fov must be in (180, 200]");
        FisheyeImage {
            side,
            fov_deg,
            pixels: vec![0.0; side * side * 3],
        }
    }

    pub fn focal(&self) -> f64 {
        self.side as f64 / self.fov_deg.to_radians()
    }

    pub fn pix(&self, col: usize, row: usize) -> Vec3 {
        let o = (row * self.side + col) * 3;
        Vec3::new(self.pixels[o], self.pixels[o + 1], self.pixels[o + 2])
    }

    fn set_pix(&mut self, col: usize, row: usize, v: Vec3) {
        let o = (row * self.side + col) * 3;
        self.pixels[o] = v.x;
        self.pixels[o + 1] = v.y;
        self.pixels[o + 2] = v.z;
    }

    fn inside_circle(&self, col: usize, row: usize) -> bool {
        let c = self.side as f64 / 2.0;
        let du = col as f64 + 0.5 - c;
        let dv = row as f64 + 0.5 - c;
        (du * du + dv * dv).sqrt() <= c
    }

    /// Bilinear sample at continuous pixel coordinates.
    fn sample(&self, u: f64, v: f64) -> Vec3 {
        let fu = u - 0.5;
        let fv = v - 0.5;
        let i0 = fu.floor();
        let j0 = fv.floor();
        let wu = fu - i0;
        let wv = fv - j0;
        let clamp = |x: f64| (x.max(0.0) as usize).min(self.side - 1);
        let (i0c, i1c) = (clamp(i0), clamp(i0 + 1.0));
        let (j0c, j1c) = (clamp(j0), clamp(j0 + 1.0));
        self.pix(i0c, j0c) * ((1.0 - wu) * (1.0 - wv))
            + self.pix(i1c, j0c) * (wu * (1.0 - wv))
            + self.pix(i0c, j1c) * ((1.0 - wu) * wv)
            + self.pix(i1c, j1c) * (wu * wv)
    }
}

/// Equidistant projection of a camera-local point: pixel position and the
/// 2×3 Jacobian of the map, for the splat footprint.
///
/// Optical axis is +x; image u grows rightward (−y), v downward (−z).
fn fisheye_project(p: &Vec3, side: usize, focal: f64) -> Option<((f64, f64), Matrix2x3<f64>)> {
    let (x, y, z) = (p.x, p.y, p.z);
    let r2 = p.norm_squared();
    let rho2 = y * y + z * z;
    let c = side as f64 / 2.0;
    if rho2 < 1e-18 * r2.max(f64::MIN_POSITIVE) {
        // On-axis: pinhole-like limit (behind-axis points are culled upstream).
        if x <= 0.0 {
            return None;
        }
        let u = c - focal * y / x;
        let v = c - focal * z / x;
        let j = Matrix2x3::new(
            focal * y / (x * x),
            -focal / x,
            0.0,
            focal * z / (x * x),
            0.0,
            -focal / x,
        );
        return Some(((u, v), j));
    }
    let rho = rho2.sqrt();
    let psi = rho.atan2(x);
    let u = c - focal * psi * y / rho;
    let v = c - focal * psi * z / rho;
    let rho3 = rho2 * rho;
    let j = Matrix2x3::new(
        focal * y / r2,
        -focal * (x * y * y / (rho2 * r2) + psi * z * z / rho3),
        -focal * (x * y * z / (rho2 * r2) - psi * y * z / rho3),
        focal * z / r2,
        -focal * (x * z * y / (rho2 * r2) - psi * z * y / rho3),
        -focal * (x * z * z / (rho2 * r2) + psi * y * y / rho3),
    );
    Some(((u, v), j))
}

/// Pixel to unit ray, or `None` outside the field of view.
pub fn fisheye_unproject(u: f64, v: f64, side: usize, fov_deg: f64, focal: f64) -> Option<Vec3> {
    let c = side as f64 / 2.0;
    let du = u - c;
    let dv = v - c;
    let r = (du * du + dv * dv).sqrt();
    let psi = r / focal;
    if psi > fov_deg.to_radians() / 2.0 {
        return None;
    }
    if r == 0.0 {
        return Some(Vec3::new(1.0, 0.0, 0.0));
    }
    let (s, cpsi) = psi.sin_cos();
    Some(Vec3::new(cpsi, -s * du / r, -s * dv / r))
}

/// Render a scene into an equidistant fisheye image with the same
/// front-to-back α/transmittance compositing rule as the ERP rasterizer.
pub fn render_fisheye(scene: &GaussianScene, pose: &Pose, side: usize, fov_deg: f64) -> FisheyeImage {
    render_fisheye_ext(scene, pose, side, fov_deg, COV2D_LAMBDA, None)
}

/// [`render_fisheye`] with an explicit footprint regularizer (px²) and an
/// optional per-splat world-space covariance to add before projection. The
/// capture simulator uses the extra term to reproduce the ERP renderer's
/// pixel-disk blur in angle space, so stitched captures carry the same blur
/// a direct ERP render would.
pub fn render_fisheye_ext(
    scene: &GaussianScene,
    pose: &Pose,
    side: usize,
    fov_deg: f64,
    footprint_lambda: f64,
    extra_world_cov: Option<&[crate::geom::Mat3]>,
) -> FisheyeImage {
    if let Some(extra) = extra_world_cov {
        assert_eq!(extra.len(), scene.len());
    }
    let mut img = FisheyeImage::zeros(side, fov_deg);
    let focal = img.focal();

    struct Proj {
        u0: f64,
        v0: f64,
        inv_cov: Matrix2<f64>,
        ru: f64,
        rv: f64,
        depth: f64,
        alpha_peak: f64,
        color: Vec3,
        source: usize,
    }
    let r_cam = pose.rotation.to_matrix();
    let mut projections: Vec<Proj> = scene
        .splats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let p = pose.rotation.inverse_rotate(&(s.mean - pose.translation));
            let depth = p.norm();
            if depth < NEAR_CLIP {
                return None;
            }
            let alpha_peak = s.opacity();
            if alpha_peak < ALPHA_CULL {
                return None;
            }
            let ((u0, v0), j) = fisheye_project(&p, side, focal)?;
            let mut sigma_w = s.covariance();
            if let Some(extra) = extra_world_cov {
                sigma_w += extra[i];
            }
            let sigma_cam = r_cam.transpose() * sigma_w * r_cam;
            let cov = j * sigma_cam * j.transpose() + Matrix2::identity() * footprint_lambda;
            let ru = 3.0 * cov[(0, 0)].sqrt();
            let rv = 3.0 * cov[(1, 1)].sqrt();
            // Skip splats whose footprint cannot reach the image circle.
            let c = side as f64 / 2.0;
            let dist = ((u0 - c).powi(2) + (v0 - c).powi(2)).sqrt();
            if dist - ru.max(rv) > c {
                return None;
            }
            let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
            let inv_cov =
                Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
            Some(Proj {
                u0,
                v0,
                inv_cov,
                ru,
                rv,
                depth,
                alpha_peak,
                color: s.rgb(),
                source: i,
            })
        })
        .collect();
    projections.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source.cmp(&b.source)));

    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); side * side];
    for (k, p) in projections.iter().enumerate() {
        let col_min = ((p.u0 - p.ru - 0.5).ceil().max(0.0)) as usize;
        let col_max = ((p.u0 + p.ru - 0.5).floor().min(side as f64 - 1.0)).max(0.0) as usize;
        let row_min = ((p.v0 - p.rv - 0.5).ceil().max(0.0)) as usize;
        let row_max = ((p.v0 + p.rv - 0.5).floor().min(side as f64 - 1.0)).max(0.0) as usize;
        if p.u0 + p.ru < 0.5 || p.v0 + p.rv < 0.5 {
            continue;
        }
        for row in row_min..=row_max {
            for col in col_min..=col_max {
                lists[row * side + col].push(k as u32);
            }
        }
    }

    let rows: Vec<usize> = (0..side).collect();
    let shaded: Vec<Vec<Vec3>> = rows
        .par_iter()
        .map(|&row| {
            let mut out = vec![Vec3::zeros(); side];
            for col in 0..side {
                if !img.inside_circle(col, row) {
                    continue;
                }
                let px = col as f64 + 0.5;
                let py = row as f64 + 0.5;
                let mut rgb = Vec3::zeros();
                let mut t = 1.0;
                for &k in &lists[row * side + col] {
                    let p = &projections[k as usize];
                    let d = Vector2::new(px - p.u0, py - p.v0);
                    let q = (d.transpose() * p.inv_cov * d)[(0, 0)];
                    let alpha = (p.alpha_peak * (-0.5 * q).exp()).min(ALPHA_MAX);
                    rgb += p.color * (alpha * t);
                    t *= 1.0 - alpha;
                    if t < T_STOP {
                        break;
                    }
                }
                out[col] = rgb;
            }
            out
        })
        .collect();
    for (row, vals) in shaded.iter().enumerate() {
        for (col, v) in vals.iter().enumerate() {
            img.set_pix(col, row, *v);
        }
    }
    img
}

/// Stitch a fisheye pair into an ERP panorama, assuming the cameras sit at
/// the ideal center: the hard seam is at azimuth ±π/2 and each ray maps
/// through the side's fixed rig rotation only. Returns the panorama plus a
/// count of rays that fell outside the source field of view.
pub fn stitch_pair(
    front: &FisheyeImage,
    back: &FisheyeImage,
    r_front: &Rotation,
    r_back: &Rotation,
    width: usize,
    height: usize,
) -> (ErpImage, usize) {
    let mut out = ErpImage::zeros(width, height);
    let mut misses = 0usize;
    for row in 0..height {
        for col in 0..width {
            let ray = erp_unproject(col as f64 + 0.5, row as f64 + 0.5, width, height);
            let theta = ray.y.atan2(ray.x);
            let (img, rot) = if theta.abs() <= std::f64::consts::FRAC_PI_2 {
                (front, r_front)
            } else {
                (back, r_back)
            };
            let local = rot.inverse_rotate(&ray);
            let (x, y, z) = (local.x, local.y, local.z);
            let rho = (y * y + z * z).sqrt();
            let focal = img.focal();
            let c = img.side as f64 / 2.0;
            let psi = rho.atan2(x);
            if psi > img.fov_deg.to_radians() / 2.0 {
                misses += 1;
                continue;
            }
            let (u, v) = if rho < 1e-12 {
                (c, c)
            } else {
                (c - focal * psi * y / rho, c - focal * psi * z / rho)
            };
            out.set_pix(col, row, img.sample(u, v));
        }
    }
    (out, misses)
}

/// Toy scene layouts for the synthetic protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Splats on the walls, floor and ceiling of a 4×4×3 m box.
    Room,
    /// A jittered ring of radius ~1.5 m around the origin.
    Ring,
    /// Uniform shell between 0.8 and 2.5 m.
    Random,
}

/// Seeded toy scene with high-frequency per-splat color texture.
pub fn make_toy_scene(kind: SceneKind, n_splats: usize, seed: u64) -> Result<GaussianScene, SynthError> {
    if n_splats == 0 {
        return Err(SynthError::EmptySceneRequest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n_splats);
    let base_scale;
    match kind {
        SceneKind::Room => {
            // Walls x = ±2, y = ±2 (4 m × 3 m each), floor/ceiling z = ±1.5.
            let areas = [12.0, 12.0, 12.0, 12.0, 16.0, 16.0];
            let total: f64 = areas.iter().sum();
            for _ in 0..n_splats {
                let mut pick = rng.gen_range(0.0..total);
                let mut face = 0;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let a = rng.gen_range(-2.0..2.0);
                let b = rng.gen_range(-1.5..1.5);
                let p = match face {
                    0 => Vec3::new(2.0, a, b),
                    1 => Vec3::new(-2.0, a, b),
                    2 => Vec3::new(a, 2.0, b),
                    3 => Vec3::new(a, -2.0, b),
                    4 => Vec3::new(a, rng.gen_range(-2.0..2.0), 1.5),
                    _ => Vec3::new(a, rng.gen_range(-2.0..2.0), -1.5),
                };
                points.push(p);
            }
            base_scale = (total / n_splats as f64).sqrt() * 0.4;
        }
        SceneKind::Ring => {
            for _ in 0..n_splats {
                let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = 1.5 + rng.gen_range(-0.2..0.2);
                points.push(Vec3::new(
                    r * ang.cos(),
                    r * ang.sin(),
                    rng.gen_range(-0.3..0.3),
                ));
            }
            base_scale = (2.0 * std::f64::consts::PI * 1.5 / n_splats as f64).sqrt() * 0.5;
        }
        SceneKind::Random => {
            while points.len() < n_splats {
                let p = Vec3::new(
                    rng.gen_range(-2.5..2.5),
                    rng.gen_range(-2.5..2.5),
                    rng.gen_range(-2.5..2.5),
                );
                let r = p.norm();
                if (0.8..=2.5).contains(&r) {
                    points.push(p);
                }
            }
            base_scale = 0.18;
        }
    }
    let colors: Vec<Vec3> = (0..n_splats)
        .map(|_| {
            Vec3::new(
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
            )
        })
        .collect();
    let mut scene = init_from_points(&points, &colors, base_scale)
        .expect("n_splats > 0 and lengths match");
    scene.meta.seed = seed;
    Ok(scene)
}

fn draw_gap(rng: &mut impl Rng, amplitude: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-amplitude..=amplitude),
        rng.gen_range(-amplitude..=amplitude),
        rng.gen_range(-amplitude..=amplitude),
    )
}

/// Sample the ground-truth inter-camera gaps: each component uniform in
/// ±2 cm.
pub fn sample_gap(seed: u64) -> (Vec3, Vec3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (draw_gap(&mut rng, 0.02), draw_gap(&mut rng, 0.02))
}

/// Band-limited ground-truth angular distortion: each axis-angle component is
/// a seeded combination of degree-1 spherical harmonics, scaled so the
/// largest cell magnitude equals `amplitude_rad`. Smooth enough for the
/// learnable grid to represent exactly (it is sampled onto the same grid).
pub fn band_limited_grid(
    rows: usize,
    cols: usize,
    amplitude_rad: f64,
    rng: &mut impl Rng,
) -> DistortionGrid {
    let mut grid = DistortionGrid::zeros(rows, cols);
    let coef: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let mut max_norm: f64 = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let s = grid.cell_center(r, c);
            let basis = [
                s.phi.sin(),
                s.phi.cos() * s.theta.sin(),
                s.phi.cos() * s.theta.cos(),
            ];
            let mut v = Vec3::zeros();
            for axis in 0..3 {
                for (k, b) in basis.iter().enumerate() {
                    v[axis] += coef[axis][k] * b;
                }
            }
            *grid.cell_mut(r, c) = v;
            max_norm = max_norm.max(v.norm());
        }
    }
    if max_norm > 0.0 && amplitude_rad > 0.0 {
        let scale = amplitude_rad / max_norm;
        for cell in grid.cells.iter_mut() {
            *cell *= scale;
        }
    } else {
        for cell in grid.cells.iter_mut() {
            *cell = Vec3::zeros();
        }
    }
    grid
}

/// One posed capture.
#[derive(Debug, Clone)]
pub struct DatasetView {
    pub pose: Pose,
    pub image: ErpImage,
}

/// Posed imperfect panoramas plus ground-truth calibration.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub views: Vec<DatasetView>,
    pub gt_calib: Option<DualFisheyeCalib>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
    pub fov_deg: f64,
}

impl Dataset {
    pub fn train_views(&self) -> Vec<&DatasetView> {
        self.train_idx.iter().map(|&i| &self.views[i]).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_views: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// 0 selects the default of 2·height.
    pub fisheye_side: usize,
    pub fov_deg: f64,
    /// Uniform sampling bound for each gap component, meters.
    pub gap_amplitude: f64,
    /// Ground-truth lens distortion amplitude in degrees; 0 disables it.
    pub lens_amplitude_deg: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_views: 50,
            seed: 0,
            width: 256,
            height: 128,
            fisheye_side: 0,
            fov_deg: 185.0,
            gap_amplitude: 0.02,
            lens_amplitude_deg: 0.0,
            grid_rows: 32,
            grid_cols: 64,
        }
    }
}

impl GeneratorConfig {
    pub fn effective_fisheye_side(&self) -> usize {
        if self.fisheye_side == 0 {
            2 * self.height
        } else {
            self.fisheye_side
        }
    }
}

/// Seeded random-walk poses inside the scene's free space (≥ 0.3 m from any
/// splat); all rotations are identity so the stitch planes stay world-fixed.
fn walk_poses(scene: &GaussianScene, n: usize, rng: &mut impl Rng) -> Vec<Pose> {
    // Free-space box: scene bounding box shrunk by half a meter.
    let mut lo = Vec3::from_element(f64::INFINITY);
    let mut hi = Vec3::from_element(f64::NEG_INFINITY);
    for s in &scene.splats {
        lo = lo.inf(&s.mean);
        hi = hi.sup(&s.mean);
    }
    let margin = 0.5;
    let lo = lo + Vec3::from_element(margin);
    let hi = hi - Vec3::from_element(margin);
    let clamp_box = |p: Vec3| {
        Vec3::new(
            p.x.clamp(lo.x.min(0.0), hi.x.max(0.0)),
            p.y.clamp(lo.y.min(0.0), hi.y.max(0.0)),
            p.z.clamp(lo.z.min(0.0), hi.z.max(0.0)),
        )
    };
    let clear = |p: &Vec3| {
        scene
            .splats
            .iter()
            .all(|s| (s.mean - p).norm() >= 0.3)
    };
    let mut poses = Vec::with_capacity(n);
    let mut here = Vec3::zeros();
    for _ in 0..n {
        let mut attempts = 0;
        loop {
            let step = Vec3::new(
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.15..0.15),
            );
            let cand = clamp_box(here + step);
            if clear(&cand) {
                here = cand;
                break;
            }
            attempts += 1;
            if attempts > 50 {
                // Collapse toward the origin, which toy scenes keep clear.
                here *= 0.5;
                break;
            }
        }
        poses.push(Pose::new(Rotation::identity(), here));
    }
    poses
}

/// Simulate one imperfect capture: per side, transform the scene by the
/// ground-truth calibration, render the fisheye from the true displaced
/// center, then stitch both halves assuming an ideal rig.
pub fn simulate_capture(
    scene: &GaussianScene,
    pose: &Pose,
    gt_calib: &DualFisheyeCalib,
    width: usize,
    height: usize,
    fisheye_side: usize,
    fov_deg: f64,
) -> (ErpImage, usize) {
    let rig = CameraRig::new(*pose, gt_calib.clone());
    // Reproduce the ERP rasterizer's 0.3 px² pixel-disk regularizer: express
    // it as an angular covariance at each splat's panorama direction and add
    // it to the world covariance before the fisheye projection. A small
    // pixel-space floor keeps the 2×2 inverse conditioned.
    let erp_px_per_rad = width as f64 / std::f64::consts::TAU;
    let blur_var = COV2D_LAMBDA / (erp_px_per_rad * erp_px_per_rad);
    let ideal_rot = rig.ideal_pose.rotation;
    let ideal_center = rig.ideal_pose.translation;
    let mut fisheyes = Vec::with_capacity(2);
    for side in Side::BOTH {
        let tscene = transform_scene(scene, &rig, side);
        let extra: Vec<crate::geom::Mat3> = tscene
            .splats
            .iter()
            .map(|s| {
                let dir = ideal_rot.inverse_rotate(&(s.mean - ideal_center));
                let depth2 = dir.norm_squared();
                let (x, y, z) = (dir.x, dir.y, dir.z);
                let rho = (x * x + y * y).sqrt().max(1e-12);
                let n = dir.norm().max(1e-12);
                let (sin_phi, cos_phi) = (z / n, rho / n);
                let (cos_t, sin_t) = (x / rho, y / rho);
                // Azimuth-arc and elevation tangent directions in ideal coords.
                let s1 = Vec3::new(-sin_t, cos_t, 0.0);
                let s2 = Vec3::new(-sin_phi * cos_t, -sin_phi * sin_t, cos_phi);
                let var_az = blur_var * cos_phi * cos_phi;
                let var_el = blur_var;
                // Angular covariance scales with squared distance to act like
                // a world-space covariance under projection.
                let ang = s1 * s1.transpose() * var_az + s2 * s2.transpose() * var_el;
                let world = ideal_rot.to_matrix() * ang * ideal_rot.to_matrix().transpose();
                world * depth2
            })
            .collect();
        let cam_pose = Pose::new(rig.world_rotation(side), rig.camera_center(side));
        fisheyes.push(render_fisheye_ext(
            &tscene,
            &cam_pose,
            fisheye_side,
            fov_deg,
            0.05,
            Some(&extra),
        ));
    }
    stitch_pair(&fisheyes[0], &fisheyes[1], &rig.r_front, &rig.r_back, width, height)
}

/// Generate the synthetic dataset: `n_views` poses on a seeded walk, one
/// rig-fixed ground-truth gap (and optional lens field) per dataset, views
/// split alternately into train/test halves.
pub fn generate_dataset(scene: &GaussianScene, cfg: &GeneratorConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt_front = draw_gap(&mut rng, cfg.gap_amplitude);
    let dt_back = draw_gap(&mut rng, cfg.gap_amplitude);
    let amplitude = cfg.lens_amplitude_deg.to_radians();
    let (grid_front, grid_back) = if amplitude > 0.0 {
        (
            band_limited_grid(cfg.grid_rows, cfg.grid_cols, amplitude, &mut rng),
            band_limited_grid(cfg.grid_rows, cfg.grid_cols, amplitude, &mut rng),
        )
    } else {
        (
            DistortionGrid::zeros(cfg.grid_rows, cfg.grid_cols),
            DistortionGrid::zeros(cfg.grid_rows, cfg.grid_cols),
        )
    };
    let gt_calib = DualFisheyeCalib {
        dt_front,
        dt_back,
        grid_front,
        grid_back,
    };
    let poses = walk_poses(scene, cfg.n_views, &mut rng);
    let fisheye_side = cfg.effective_fisheye_side();
    let views: Vec<DatasetView> = poses
        .par_iter()
        .map(|pose| {
            let (image, _misses) = simulate_capture(
                scene,
                pose,
                &gt_calib,
                cfg.width,
                cfg.height,
                fisheye_side,
                cfg.fov_deg,
            );
            DatasetView { pose: *pose, image }
        })
        .collect();
    let train_idx: Vec<usize> = (0..cfg.n_views).filter(|i| i % 2 == 0).collect();
    let test_idx: Vec<usize> = (0..cfg.n_views).filter(|i| i % 2 == 1).collect();
    Dataset {
        views,
        gt_calib: Some(gt_calib),
        train_idx,
        test_idx,
        seed: cfg.seed,
        fov_deg: cfg.fov_deg,
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    rotation_wxyz: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    train: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    seed: u64,
    width: usize,
    height: usize,
    fov_deg: f64,
    n_views: usize,
}

/// Write a dataset directory: `views/NNN.pfm` (+ PNG previews), `poses.json`,
/// `gt_calib.json`, `split.json`, `meta.json`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), SynthError> {
    let views_dir = dir.join("views");
    std::fs::create_dir_all(&views_dir)?;
    for (i, v) in ds.views.iter().enumerate() {
        v.image.write_pfm(&views_dir.join(format!("{i:03}.pfm")))?;
        v.image.write_png(&views_dir.join(format!("{i:03}.png")))?;
    }
    let poses: Vec<PoseRecord> = ds
        .views
        .iter()
        .map(|v| PoseRecord {
            rotation_wxyz: v.pose.rotation.wxyz(),
            translation: v.pose.translation.into(),
        })
        .collect();
    let write_json = |name: &str, data: String| -> Result<(), SynthError> {
        std::fs::write(dir.join(name), data)?;
        Ok(())
    };
    write_json("poses.json", serde_json::to_string_pretty(&poses).unwrap())?;
    if let Some(gt) = &ds.gt_calib {
        let ck = crate::calib::CalibCheckpoint::from(gt);
        write_json("gt_calib.json", serde_json::to_string_pretty(&ck).unwrap())?;
    }
    write_json(
        "split.json",
        serde_json::to_string_pretty(&SplitRecord {
            train: ds.train_idx.clone(),
            test: ds.test_idx.clone(),
        })
        .unwrap(),
    )?;
    let (width, height) = ds
        .views
        .first()
        .map(|v| (v.image.width(), v.image.height()))
        .unwrap_or((0, 0));
    write_json(
        "meta.json",
        serde_json::to_string_pretty(&MetaRecord {
            seed: ds.seed,
            width,
            height,
            fov_deg: ds.fov_deg,
            n_views: ds.views.len(),
        })
        .unwrap(),
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let read = |name: &str| -> Result<String, SynthError> {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| SynthError::Format(format!("{name}: {e}")))
    };
    let meta: MetaRecord = serde_json::from_str(&read("meta.json")?)
        .map_err(|e| SynthError::Format(format!("meta.json: {e}")))?;
    let poses: Vec<PoseRecord> = serde_json::from_str(&read("poses.json")?)
        .map_err(|e| SynthError::Format(format!("poses.json: {e}")))?;
    let split: SplitRecord = serde_json::from_str(&read("split.json")?)
        .map_err(|e| SynthError::Format(format!("split.json: {e}")))?;
    if poses.len() != meta.n_views {
        return Err(SynthError::Format(
            "poses.json length disagrees with meta.json".into(),
        ));
    }
    let mut seen = vec![false; meta.n_views];
    for &i in split.train.iter().chain(&split.test) {
        if i >= meta.n_views || seen[i] {
            return Err(SynthError::Format("split is not a partition".into()));
        }
        seen[i] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(SynthError::Format("split is not a partition".into()));
    }
    let gt_calib = match std::fs::read_to_string(dir.join("gt_calib.json")) {
        Ok(text) => {
            let ck: crate::calib::CalibCheckpoint = serde_json::from_str(&text)
                .map_err(|e| SynthError::Format(format!("gt_calib.json: {e}")))?;
            Some(
                DualFisheyeCalib::try_from(&ck)
                    .map_err(|e| SynthError::Format(format!("gt_calib.json: {e}")))?,
            )
        }
        Err(_) => None,
    };
    let mut views = Vec::with_capacity(meta.n_views);
    for (i, p) in poses.iter().enumerate() {
        let image = ErpImage::read_pfm(&dir.join("views").join(format!("{i:03}.pfm")))?;
        if image.width() != meta.width || image.height() != meta.height {
            return Err(SynthError::Format(format!("view {i} has wrong dimensions")));
        }
        let [w, x, y, z] = p.rotation_wxyz;
        views.push(DatasetView {
            pose: Pose::new(Rotation::from_wxyz(w, x, y, z), p.translation.into()),
            image,
        });
    }
    Ok(Dataset {
        views,
        gt_calib,
        train_idx: split.train,
        test_idx: split.test,
        seed: meta.seed,
        fov_deg: meta.fov_deg,
    })
}
