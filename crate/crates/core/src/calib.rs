//! Dual-fisheye distortion model: learnable inter-camera gap translations and
//! spherical angular-distortion grids, plus the splat transforms that carry a
//! scene into each fisheye camera's distorted frame and the chain-rule
//! machinery that routes image gradients back to every calibration parameter.

use crate::geom::{
    dir_to_spherical, skew, so3_exp, so3_right_jacobian, Mat3, Pose, Rotation, Spherical, Vec3,
};
use crate::scene::{GaussianScene, GaussianSplat};
use serde::{Deserialize, Serialize};

/// Which half of the rig a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Front,
    Back,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Front, Side::Back];
}

/// M×N grid of axis-angle rotation offsets over spherical coordinates.
///
/// Rows bin elevation φ (clamped at the poles), columns bin azimuth θ
/// (periodic). Cell centers sit at
/// φ_i = −π/2 + (i+0.5)·π/M and θ_j = −π + (j+0.5)·2π/N.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionGrid {
    rows: usize,
    cols: usize,
    pub cells: Vec<Vec3>,
}

impl DistortionGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 2, "grid needs at least 2 φ rows");
        assert!(cols >= 4, "grid needs at least 4 θ columns");
        DistortionGrid {
            rows,
            cols,
            cells: vec![Vec3::zeros(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Vec3 {
        self.cells[row * self.cols + col]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut Vec3 {
        &mut self.cells[row * self.cols + col]
    }

    /// Center coordinates of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> Spherical {
        let phi = -std::f64::consts::FRAC_PI_2
            + (row as f64 + 0.5) * std::f64::consts::PI / self.rows as f64;
        let theta =
            -std::f64::consts::PI + (col as f64 + 0.5) * std::f64::consts::TAU / self.cols as f64;
        Spherical::new(theta, phi)
    }

    pub fn rms(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.cells.iter().map(|c| c.norm_squared()).sum();
        (ss / self.cells.len() as f64).sqrt()
    }

    /// Bilinear footprint of a query: four (linear cell index, weight) pairs.
    /// θ wraps across the column seam, φ clamps at the pole rows.
    pub fn sample_weights(&self, s: &Spherical) -> [(usize, f64); 4] {
        let m = self.rows as f64;
        let n = self.cols as f64;
        // Continuous cell coordinates relative to cell centers.
        let fr = ((s.phi + std::f64::consts::FRAC_PI_2) / std::f64::consts::PI * m - 0.5)
            .clamp(0.0, m - 1.0);
        let fc = ((s.theta + std::f64::consts::PI) / std::f64::consts::TAU * n - 0.5)
            .rem_euclid(n);
        let r0 = (fr.floor() as usize).min(self.rows - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let wr = fr - fr.floor();
        let c0 = (fc.floor() as usize).min(self.cols - 1);
        let c1 = (c0 + 1) % self.cols;
        let wc = fc - fc.floor();
        [
            (r0 * self.cols + c0, (1.0 - wr) * (1.0 - wc)),
            (r0 * self.cols + c1, (1.0 - wr) * wc),
            (r1 * self.cols + c0, wr * (1.0 - wc)),
            (r1 * self.cols + c1, wr * wc),
        ]
    }

    /// Interpolated axis-angle vector at a query point.
    pub fn sample_omega(&self, s: &Spherical) -> Vec3 {
        self.sample_weights(s)
            .iter()
            .map(|(idx, w)| self.cells[*idx] * *w)
            .sum()
    }
}

/// Bilinearly interpolate the grid in axis-angle space, then exponentiate.
pub fn sample_rotation(grid: &DistortionGrid, s: &Spherical) -> Rotation {
    so3_exp(&grid.sample_omega(s))
}

/// Mean squared difference between θ-adjacent (periodic) and φ-adjacent
/// (non-periodic) cell vectors. Zero iff the grid is constant.
pub fn tv_loss(grid: &DistortionGrid) -> f64 {
    let (m, n) = (grid.rows, grid.cols);
    let pairs = (m * n + (m - 1) * n) as f64;
    let mut acc = 0.0;
    for r in 0..m {
        for c in 0..n {
            let here = grid.cell(r, c);
            acc += (here - grid.cell(r, (c + 1) % n)).norm_squared();
            if r + 1 < m {
                acc += (here - grid.cell(r + 1, c)).norm_squared();
            }
        }
    }
    acc / pairs
}

/// Gradient of [`tv_loss`] scaled by `weight`, accumulated into `out`.
pub fn tv_loss_backward(grid: &DistortionGrid, weight: f64, out: &mut [Vec3]) {
    assert_eq!(out.len(), grid.cells.len());
    let (m, n) = (grid.rows, grid.cols);
    let scale = 2.0 * weight / (m * n + (m - 1) * n) as f64;
    for r in 0..m {
        for c in 0..n {
            let here = grid.cell(r, c);
            let right = grid.cell(r, (c + 1) % n);
            let d = (here - right) * scale;
            out[r * n + c] += d;
            out[r * n + (c + 1) % n] -= d;
            if r + 1 < m {
                let down = grid.cell(r + 1, c);
                let d = (here - down) * scale;
                out[r * n + c] += d;
                out[(r + 1) * n + c] -= d;
            }
        }
    }
}

/// Learnable calibration state: gap translations plus one distortion grid per
/// camera. Grids share dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFisheyeCalib {
    pub dt_front: Vec3,
    pub dt_back: Vec3,
    pub grid_front: DistortionGrid,
    pub grid_back: DistortionGrid,
}

impl DualFisheyeCalib {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DualFisheyeCalib {
            dt_front: Vec3::zeros(),
            dt_back: Vec3::zeros(),
            grid_front: DistortionGrid::zeros(rows, cols),
            grid_back: DistortionGrid::zeros(rows, cols),
        }
    }

    pub fn dt(&self, side: Side) -> Vec3 {
        match side {
            Side::Front => self.dt_front,
            Side::Back => self.dt_back,
        }
    }

    pub fn grid(&self, side: Side) -> &DistortionGrid {
        match side {
            Side::Front => &self.grid_front,
            Side::Back => &self.grid_back,
        }
    }

    /// Sanity warnings: gap magnitudes beyond 0.1 m or cells at/over π.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, dt) in [("dt_front", self.dt_front), ("dt_back", self.dt_back)] {
            if dt.norm() >= 0.1 {
                out.push(format!("{name} magnitude {:.4} m exceeds 0.1 m", dt.norm()));
            }
        }
        for (name, grid) in [("grid_front", &self.grid_front), ("grid_back", &self.grid_back)] {
            if grid.cells.iter().any(|c| c.norm() >= std::f64::consts::PI) {
                out.push(format!("{name} contains cells with rotation ≥ π"));
            }
        }
        out
    }
}

/// Serialized form of a calibration checkpoint (also the ground-truth label
/// schema in dataset directories). Cells are row-major, 3 floats per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibCheckpoint {
    pub dt_front: [f64; 3],
    pub dt_back: [f64; 3],
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub grid_front: Vec<f64>,
    pub grid_back: Vec<f64>,
}

impl From<&DualFisheyeCalib> for CalibCheckpoint {
    fn from(c: &DualFisheyeCalib) -> Self {
        let flat = |g: &DistortionGrid| g.cells.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        CalibCheckpoint {
            dt_front: c.dt_front.into(),
            dt_back: c.dt_back.into(),
            grid_rows: c.grid_front.rows,
            grid_cols: c.grid_front.cols,
            grid_front: flat(&c.grid_front),
            grid_back: flat(&c.grid_back),
        }
    }
}

impl TryFrom<&CalibCheckpoint> for DualFisheyeCalib {
    type Error = String;

    fn try_from(ck: &CalibCheckpoint) -> Result<Self, String> {
        let n = ck.grid_rows * ck.grid_cols * 3;
        if ck.grid_front.len() != n || ck.grid_back.len() != n {
            return Err(format!(
                "grid arrays must hold {}×{}×3 = {} values",
                ck.grid_rows, ck.grid_cols, n
            ));
        }
        let unflat = |v: &[f64]| DistortionGrid {
            rows: ck.grid_rows,
            cols: ck.grid_cols,
            cells: v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        };
        Ok(DualFisheyeCalib {
            dt_front: ck.dt_front.into(),
            dt_back: ck.dt_back.into(),
            grid_front: unflat(&ck.grid_front),
            grid_back: unflat(&ck.grid_back),
        })
    }
}

/// The dual-fisheye rig at one capture pose.
///
/// `r_front`/`r_back` are the fixed camera rotations relative to the ideal
/// panorama frame; the back camera faces −x of the front. World camera
/// rotations compose the ideal pose with these.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub ideal_pose: Pose,
    pub r_front: Rotation,
    pub r_back: Rotation,
    pub calib: DualFisheyeCalib,
}

impl CameraRig {
    pub fn new(ideal_pose: Pose, calib: DualFisheyeCalib) -> Self {
        CameraRig {
            ideal_pose,
            r_front: Rotation::identity(),
            r_back: Rotation::yaw(std::f64::consts::PI),
            calib,
        }
    }

    /// World rotation of one camera: R_side = R_ideal ∘ r_side.
    pub fn world_rotation(&self, side: Side) -> Rotation {
        let local = match side {
            Side::Front => self.r_front,
            Side::Back => self.r_back,
        };
        self.ideal_pose.rotation.compose(&local)
    }

    /// Camera center O_side = O_ideal + R_side·ΔT_side.
    pub fn camera_center(&self, side: Side) -> Vec3 {
        self.ideal_pose.translation + self.world_rotation(side).rotate(&self.calib.dt(side))
    }
}

/// Map a world point into one camera's local frame: g = R_side⁻¹·(p − O_side).
pub fn to_local(point: &Vec3, rig: &CameraRig, side: Side) -> Vec3 {
    rig.world_rotation(side)
        .inverse_rotate(&(point - rig.camera_center(side)))
}

/// Forward-pass record for one splat on one side, kept for backpropagation.
#[derive(Debug, Clone, Copy)]
pub struct SplatRecord {
    /// False when the splat sits exactly at the camera center; such splats
    /// pass through untransformed and are culled by the rasterizer near clip.
    pub kept: bool,
    /// Local pre-distortion position g.
    pub g: Vec3,
    /// Interpolated axis-angle at the splat's local direction.
    pub omega: Vec3,
    pub cells: [usize; 4],
    pub weights: [f64; 4],
    pub delta: Rotation,
}

impl SplatRecord {
    fn degenerate() -> Self {
        SplatRecord {
            kept: false,
            g: Vec3::zeros(),
            omega: Vec3::zeros(),
            cells: [0; 4],
            weights: [0.0; 4],
            delta: Rotation::identity(),
        }
    }
}

fn transform_with_record(
    splat: &GaussianSplat,
    rig: &CameraRig,
    side: Side,
) -> (GaussianSplat, SplatRecord) {
    let r_side = rig.world_rotation(side);
    let o_side = rig.camera_center(side);
    let g = r_side.inverse_rotate(&(splat.mean - o_side));
    let sph = match dir_to_spherical(&g) {
        Ok(s) => s,
        Err(_) => return (*splat, SplatRecord::degenerate()),
    };
    let weights = rig.calib.grid(side).sample_weights(&sph);
    let omega: Vec3 = weights
        .iter()
        .map(|(idx, w)| rig.calib.grid(side).cells[*idx] * *w)
        .sum();
    let delta = so3_exp(&omega);
    let new_mean = r_side.rotate(&delta.rotate(&g)) + o_side;
    // World-frame distortion rotation A = R_side·Δ·R_side⁻¹; the splat
    // transforms rigidly, so its orientation picks up A as well.
    let a = r_side.compose(&delta).compose(&r_side.inverse());
    let new_orient = a.compose(&splat.orient);
    let out = GaussianSplat {
        mean: new_mean,
        orient: new_orient,
        ..*splat
    };
    let record = SplatRecord {
        kept: true,
        g,
        omega,
        cells: [weights[0].0, weights[1].0, weights[2].0, weights[3].0],
        weights: [weights[0].1, weights[1].1, weights[2].1, weights[3].1],
        delta,
    };
    (out, record)
}

/// Apply the side's gap and angular distortion to one splat (Eqs. of the
/// rigid chain: into the local frame, rotate by the sampled offset, back
/// out). Returns `None` for a splat exactly at the camera center.
pub fn transform_splat(
    splat: &GaussianSplat,
    rig: &CameraRig,
    side: Side,
) -> Option<GaussianSplat> {
    let (out, rec) = transform_with_record(splat, rig, side);
    rec.kept.then_some(out)
}

/// Elementwise [`transform_splat`] with order preserved. Degenerate splats
/// (exactly at the camera center) pass through unchanged; the rasterizer's
/// near clip excludes them from that side's render.
pub fn transform_scene(scene: &GaussianScene, rig: &CameraRig, side: Side) -> GaussianScene {
    GaussianScene {
        splats: scene
            .splats
            .iter()
            .map(|s| transform_with_record(s, rig, side).0)
            .collect(),
        meta: scene.meta,
    }
}

/// [`transform_scene`] that also returns per-splat records for backprop.
pub fn transform_scene_recorded(
    scene: &GaussianScene,
    rig: &CameraRig,
    side: Side,
) -> (GaussianScene, Vec<SplatRecord>) {
    let mut splats = Vec::with_capacity(scene.len());
    let mut records = Vec::with_capacity(scene.len());
    for s in &scene.splats {
        let (out, rec) = transform_with_record(s, rig, side);
        splats.push(out);
        records.push(rec);
    }
    (
        GaussianScene {
            splats,
            meta: scene.meta,
        },
        records,
    )
}

/// Gradients with respect to every splat parameter, in the same order as the
/// scene's splat list. Orientation gradients live in the left tangent space:
/// a step δ updates orient ← exp(δ)·orient.
#[derive(Debug, Clone)]
pub struct SceneGrads {
    pub mean: Vec<Vec3>,
    pub log_scale: Vec<Vec3>,
    pub orient: Vec<Vec3>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<Vec3>,
}

impl SceneGrads {
    pub fn zeros(n: usize) -> Self {
        SceneGrads {
            mean: vec![Vec3::zeros(); n],
            log_scale: vec![Vec3::zeros(); n],
            orient: vec![Vec3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn add(&mut self, other: &SceneGrads) {
        for i in 0..self.len() {
            self.mean[i] += other.mean[i];
            self.log_scale[i] += other.log_scale[i];
            self.orient[i] += other.orient[i];
            self.opacity_logit[i] += other.opacity_logit[i];
            self.color[i] += other.color[i];
        }
    }
}

/// Gradients with respect to the calibration parameters.
#[derive(Debug, Clone)]
pub struct CalibGrads {
    pub dt_front: Vec3,
    pub dt_back: Vec3,
    pub grid_front: Vec<Vec3>,
    pub grid_back: Vec<Vec3>,
}

impl CalibGrads {
    pub fn zeros(calib: &DualFisheyeCalib) -> Self {
        CalibGrads {
            dt_front: Vec3::zeros(),
            dt_back: Vec3::zeros(),
            grid_front: vec![Vec3::zeros(); calib.grid_front.cells.len()],
            grid_back: vec![Vec3::zeros(); calib.grid_back.cells.len()],
        }
    }
}

/// Chain transformed-splat gradients back to original splats and calibration.
///
/// `t_grads` holds the rasterizer output for the transformed scene of `side`:
/// world-space mean gradients (camera held fixed), tangent-space orientation
/// gradients, and pass-through scale/opacity/color gradients. The camera
/// center of that render must be the side's `camera_center`, which is why the
/// ΔT gradient folds the camera path (−Σ gᵢ) together with the transform path.
/// The sampling location (θ, φ) is treated as a stop-gradient.
pub fn backprop_transform(
    rig: &CameraRig,
    side: Side,
    records: &[SplatRecord],
    t_grads: &SceneGrads,
    scene_grads: &mut SceneGrads,
    calib_grads: &mut CalibGrads,
) {
    let r_side = rig.world_rotation(side);
    let r_mat = r_side.to_matrix();
    let mut d_center = Vec3::zeros();
    let grid_out = match side {
        Side::Front => &mut calib_grads.grid_front,
        Side::Back => &mut calib_grads.grid_back,
    };
    for (i, rec) in records.iter().enumerate() {
        let gw = t_grads.mean[i];
        let grho = t_grads.orient[i];
        // Pass-through parameters.
        scene_grads.log_scale[i] += t_grads.log_scale[i];
        scene_grads.opacity_logit[i] += t_grads.opacity_logit[i];
        scene_grads.color[i] += t_grads.color[i];
        if !rec.kept {
            // Degenerate splats were culled; their image gradients are zero,
            // but pass-through still keeps the accounting uniform.
            scene_grads.mean[i] += gw;
            scene_grads.orient[i] += grho;
            continue;
        }
        let delta_mat = rec.delta.to_matrix();
        let a = r_mat * delta_mat * r_mat.transpose();
        // μ' = A(μ − O) + O  ⇒  dμ = Aᵀ·gw, transform path of O is (I − A)ᵀ·gw;
        // the render camera contributes −gw, so dO collapses to −Aᵀ·gw.
        scene_grads.mean[i] += a.transpose() * gw;
        d_center -= a.transpose() * gw;
        // q' = A·q  ⇒  left-tangent pullback is Aᵀ.
        scene_grads.orient[i] += a.transpose() * grho;
        // ω path: mean term −(R Δ [g]× Jr)ᵀ·gw plus orientation term (A R Jr)ᵀ·gρ'.
        let jr = so3_right_jacobian(&rec.omega);
        let mean_term = skew(&rec.g) * (delta_mat.transpose() * (r_mat.transpose() * gw));
        let orient_term = r_mat.transpose() * (a.transpose() * grho);
        let d_omega = jr.transpose() * (mean_term + orient_term);
        for k in 0..4 {
            grid_out[rec.cells[k]] += d_omega * rec.weights[k];
        }
    }
    let d_dt = r_mat.transpose() * d_center;
    match side {
        Side::Front => calib_grads.dt_front += d_dt,
        Side::Back => calib_grads.dt_back += d_dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::so3_log;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_splat(mean: Vec3) -> GaussianSplat {
        GaussianSplat {
            mean,
            log_scale: Vec3::new(-2.0, -2.0, -2.0),
            orient: Rotation::identity(),
            opacity_logit: 0.5,
            color: Vec3::new(0.1, 0.2, 0.3),
        }
    }

    fn random_calib(rng: &mut impl Rng, rows: usize, cols: usize, amp: f64) -> DualFisheyeCalib {
        let mut calib = DualFisheyeCalib::zeros(rows, cols);
        calib.dt_front = Vec3::new(
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
        );
        calib.dt_back = Vec3::new(
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
        );
        for g in [&mut calib.grid_front, &mut calib.grid_back] {
            for c in g.cells.iter_mut() {
                *c = Vec3::new(
                    rng.gen_range(-amp..amp),
                    rng.gen_range(-amp..amp),
                    rng.gen_range(-amp..amp),
                );
            }
        }
        calib
    }

    #[test]
    fn camera_center_identity_and_offsets() {
        let rig = CameraRig::new(Pose::identity(), DualFisheyeCalib::zeros(2, 4));
        assert_eq!(rig.camera_center(Side::Front), Vec3::zeros());
        assert_eq!(rig.camera_center(Side::Back), Vec3::zeros());

        let mut calib = DualFisheyeCalib::zeros(2, 4);
        calib.dt_front = Vec3::new(0.015, 0.0, 0.0);
        let rig = CameraRig::new(Pose::identity(), calib);
        assert_abs_diff_eq!(
            rig.camera_center(Side::Front),
            Vec3::new(0.015, 0.0, 0.0),
            epsilon = 1e-15
        );

        // Back camera: R_B is a 180° yaw, so a +x offset in camera coordinates
        // points along −x in the world.
        let mut calib = DualFisheyeCalib::zeros(2, 4);
        calib.dt_back = Vec3::new(0.01, 0.0, 0.0);
        let o_ideal = Vec3::new(0.3, -0.2, 0.1);
        let rig = CameraRig::new(
            Pose::new(Rotation::identity(), o_ideal),
            calib,
        );
        let expect = o_ideal + Rotation::yaw(std::f64::consts::PI).to_matrix() * Vec3::new(0.01, 0.0, 0.0);
        assert_abs_diff_eq!(rig.camera_center(Side::Back), expect, epsilon = 1e-15);
    }

    #[test]
    fn to_local_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let calib = random_calib(&mut rng, 4, 8, 0.02);
        let pose = Pose::new(
            so3_exp(&Vec3::new(0.2, -0.4, 0.9)),
            Vec3::new(1.0, 2.0, -0.5),
        );
        let rig = CameraRig::new(pose, calib);
        for side in Side::BOTH {
            // Identity-ish checks.
            let center = rig.camera_center(side);
            assert_abs_diff_eq!(to_local(&center, &rig, side), Vec3::zeros(), epsilon = 1e-12);
            for _ in 0..20 {
                let p = Vec3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                let g = to_local(&p, &rig, side);
                let back = rig.world_rotation(side).rotate(&g) + rig.camera_center(side);
                assert!((back - p).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn to_local_identity_rig() {
        let rig = CameraRig::new(Pose::identity(), DualFisheyeCalib::zeros(2, 4));
        let p = Vec3::new(0.7, -0.3, 1.1);
        assert_abs_diff_eq!(to_local(&p, &rig, Side::Front), p, epsilon = 1e-15);
    }

    #[test]
    fn sample_rotation_zero_center_constant() {
        let grid = DistortionGrid::zeros(4, 8);
        let r = sample_rotation(&grid, &Spherical::new(0.3, -0.7));
        assert_eq!(r.wxyz(), [1.0, 0.0, 0.0, 0.0]);

        // Query exactly at a cell center collapses the weights.
        let mut grid = DistortionGrid::zeros(4, 8);
        *grid.cell_mut(2, 5) = Vec3::new(0.1, -0.2, 0.3);
        let center = grid.cell_center(2, 5);
        let r = sample_rotation(&grid, &center);
        let want = so3_exp(&Vec3::new(0.1, -0.2, 0.3));
        assert_abs_diff_eq!(so3_log(&r), so3_log(&want), epsilon = 1e-12);

        // Constant grid: bilinear interpolation of a constant is the constant.
        let omega = Vec3::new(0.05, 0.02, -0.04);
        let mut grid = DistortionGrid::zeros(3, 6);
        for c in grid.cells.iter_mut() {
            *c = omega;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let s = Spherical::new(
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.gen_range(-1.5..1.5),
            );
            assert_abs_diff_eq!(grid.sample_omega(&s), omega, epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_rotation_continuous_across_seam() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut grid = DistortionGrid::zeros(4, 8);
        for c in grid.cells.iter_mut() {
            *c = Vec3::new(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
            );
        }
        let eps = 1e-7;
        for phi in [-1.2, -0.3, 0.4, 1.3] {
            let a = grid.sample_omega(&Spherical::new(std::f64::consts::PI - eps, phi));
            let b = grid.sample_omega(&Spherical::new(-std::f64::consts::PI + eps, phi));
            assert!((a - b).norm() < 1e-5, "seam jump {}", (a - b).norm());
        }
    }

    #[test]
    fn tv_loss_cases() {
        // Constant grid → 0.
        let mut grid = DistortionGrid::zeros(3, 5);
        for c in grid.cells.iter_mut() {
            *c = Vec3::new(0.3, -0.1, 0.2);
        }
        assert_eq!(tv_loss(&grid), 0.0);

        // 2×4 grid with a single nonzero cell: that cell has two θ neighbors
        // and one φ neighbor, so the loss is 3ε² over 12 pairs.
        let eps = 0.25;
        let mut grid = DistortionGrid::zeros(2, 4);
        *grid.cell_mut(0, 1) = Vec3::new(eps, 0.0, 0.0);
        assert_abs_diff_eq!(tv_loss(&grid), 3.0 * eps * eps / 12.0, epsilon = 1e-15);

        // Degree-2 homogeneity.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut grid = DistortionGrid::zeros(4, 6);
        for c in grid.cells.iter_mut() {
            *c = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        }
        let mut doubled = grid.clone();
        for c in doubled.cells.iter_mut() {
            *c *= 2.0;
        }
        assert_abs_diff_eq!(tv_loss(&doubled), 4.0 * tv_loss(&grid), epsilon = 1e-12);
    }

    #[test]
    fn tv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut grid = DistortionGrid::zeros(3, 5);
        for c in grid.cells.iter_mut() {
            *c = Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
            );
        }
        let mut grads = vec![Vec3::zeros(); grid.cells.len()];
        tv_loss_backward(&grid, 1.0, &mut grads);
        let h = 1e-6;
        for i in 0..grid.cells.len() {
            for k in 0..3 {
                let mut gp = grid.clone();
                let mut gm = grid.clone();
                gp.cells[i][k] += h;
                gm.cells[i][k] -= h;
                let fd = (tv_loss(&gp) - tv_loss(&gm)) / (2.0 * h);
                assert!(
                    (fd - grads[i][k]).abs() < 1e-8,
                    "cell {i} comp {k}: fd {fd} vs analytic {}",
                    grads[i][k]
                );
            }
        }
    }

    #[test]
    fn transform_identity_calibration() {
        let rig = CameraRig::new(
            Pose::new(so3_exp(&Vec3::new(0.1, 0.2, -0.3)), Vec3::new(0.5, -1.0, 0.25)),
            DualFisheyeCalib::zeros(4, 8),
        );
        let splat = unit_splat(Vec3::new(1.0, 0.5, -0.7));
        for side in Side::BOTH {
            let out = transform_splat(&splat, &rig, side).unwrap();
            assert!((out.mean - splat.mean).norm() < 1e-12);
            let dq = so3_log(&out.orient.compose(&splat.orient.inverse()));
            assert!(dq.norm() < 1e-12);
            assert_eq!(out.log_scale, splat.log_scale);
            assert_eq!(out.opacity_logit, splat.opacity_logit);
            assert_eq!(out.color, splat.color);
        }
    }

    #[test]
    fn translation_cancels_with_zero_grids() {
        // G = R(R⁻¹(m − O)) + O = m: the gap moves the camera, not the splats.
        let mut calib = DualFisheyeCalib::zeros(4, 8);
        calib.dt_front = Vec3::new(0.02, -0.013, 0.007);
        calib.dt_back = Vec3::new(-0.011, 0.004, 0.019);
        let rig = CameraRig::new(
            Pose::new(so3_exp(&Vec3::new(-0.2, 0.4, 0.1)), Vec3::new(0.3, 0.0, -0.6)),
            calib,
        );
        let splat = unit_splat(Vec3::new(-0.8, 1.3, 0.2));
        for side in Side::BOTH {
            let out = transform_splat(&splat, &rig, side).unwrap();
            assert!(
                (out.mean - splat.mean).norm() < 1e-12,
                "side {side:?}: {:?}",
                out.mean
            );
        }
    }

    #[test]
    fn constant_quarter_yaw_grid_rotates_mean() {
        let mut calib = DualFisheyeCalib::zeros(4, 8);
        for c in calib.grid_front.cells.iter_mut() {
            *c = Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        }
        let rig = CameraRig::new(Pose::identity(), calib);
        let splat = unit_splat(Vec3::new(1.0, 0.0, 0.0));
        let out = transform_splat(&splat, &rig, Side::Front).unwrap();
        assert_abs_diff_eq!(out.mean, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_splat_excluded() {
        let rig = CameraRig::new(Pose::identity(), DualFisheyeCalib::zeros(2, 4));
        let splat = unit_splat(Vec3::zeros());
        assert!(transform_splat(&splat, &rig, Side::Front).is_none());
        // transform_scene passes it through unchanged.
        let scene = GaussianScene {
            splats: vec![splat],
            meta: Default::default(),
        };
        let out = transform_scene(&scene, &rig, Side::Front);
        assert_eq!(out.splats[0].mean, splat.mean);
    }

    #[test]
    fn transform_scene_matches_per_splat_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let calib = random_calib(&mut rng, 4, 8, 0.05);
        let rig = CameraRig::new(
            Pose::new(so3_exp(&Vec3::new(0.3, -0.1, 0.2)), Vec3::new(0.1, 0.2, 0.3)),
            calib,
        );
        let scene = GaussianScene {
            splats: (0..500)
                .map(|_| {
                    unit_splat(Vec3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ))
                })
                .collect(),
            meta: Default::default(),
        };
        let out = transform_scene(&scene, &rig, Side::Back);
        assert_eq!(out.len(), scene.len());
        for (i, s) in scene.splats.iter().enumerate() {
            let want = transform_splat(s, &rig, Side::Back).unwrap();
            assert_eq!(out.splats[i].mean, want.mean);
            assert_eq!(out.splats[i].orient.wxyz(), want.orient.wxyz());
        }

        // Empty scene stays empty.
        let empty = GaussianScene {
            splats: vec![],
            meta: Default::default(),
        };
        assert!(transform_scene(&empty, &rig, Side::Front).is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let calib = random_calib(&mut rng, 3, 6, 0.1);
        let ck = CalibCheckpoint::from(&calib);
        let json = serde_json::to_string(&ck).unwrap();
        let back: CalibCheckpoint = serde_json::from_str(&json).unwrap();
        let restored = DualFisheyeCalib::try_from(&back).unwrap();
        assert_eq!(calib, restored);
    }

    #[test]
    fn warnings_flag_large_gaps() {
        let mut calib = DualFisheyeCalib::zeros(2, 4);
        assert!(calib.warnings().is_empty());
        calib.dt_front = Vec3::new(0.2, 0.0, 0.0);
        assert_eq!(calib.warnings().len(), 1);
    }
}
