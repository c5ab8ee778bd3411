//! Differentiable equirectangular splatting.
//!
//! Splats are projected to ERP pixel space with an analytic Jacobian of the
//! spherical map, composited front-to-back with transmittance, and rendered
//! either from the ideal center (full azimuth) or as two hemisphere passes
//! from the displaced fisheye centers stitched at θ = ±π/2. The backward pass
//! produces analytic gradients for every splat parameter; calibration
//! gradients chain through `calib::backprop_transform`.

use crate::calib::{transform_scene_recorded, CameraRig, SceneGrads, Side};
use crate::geom::{erp_project, Mat3, Pose, Rotation, Vec3};
use crate::scene::{GaussianScene, GaussianSplat};
use nalgebra::{Matrix2, Matrix2x3, Vector2};
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Splats closer than this to the camera center are culled.
pub const NEAR_CLIP: f64 = 0.05;
/// Isotropic regularizer added to the projected 2×2 covariance (px²).
pub const COV2D_LAMBDA: f64 = 0.3;
/// Per-sample opacity clamp.
pub const ALPHA_MAX: f64 = 0.99;
/// Transmittance early-out threshold.
pub const T_STOP: f64 = 1e-4;
/// Splats with peak opacity below this are culled.
pub const ALPHA_CULL: f64 = 1.0 / 255.0;
/// Rows per parallel work unit; fixed so accumulation order is independent of
/// the worker count.
const ROW_CHUNK: usize = 8;

/// Row-major RGB panorama, linear radiance, width = 2·height.
///
/// Pixels are held in f64 so that gradient checks are not limited by storage
/// precision; the PFM interchange format is 32-bit float per the usual
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    width: usize,
    height: usize,
    pub pixels: Vec<f64>,
}

impl ErpImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert_eq!(width, 2 * height, "ERP images are 2:1");
        ErpImage {
            width,
            height,
            pixels: vec![0.0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pix(&self, col: usize, row: usize) -> Vec3 {
        let o = (row * self.width + col) * 3;
        Vec3::new(self.pixels[o], self.pixels[o + 1], self.pixels[o + 2])
    }

    pub fn set_pix(&mut self, col: usize, row: usize, v: Vec3) {
        let o = (row * self.width + col) * 3;
        self.pixels[o] = v.x;
        self.pixels[o + 1] = v.y;
        self.pixels[o + 2] = v.z;
    }

    pub fn add(&mut self, other: &ErpImage) {
        assert_eq!(self.pixels.len(), other.pixels.len());
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += b;
        }
    }

    pub fn mean_abs_diff(&self, other: &ErpImage) -> f64 {
        assert_eq!(self.pixels.len(), other.pixels.len());
        let s: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum();
        s / self.pixels.len() as f64
    }

    /// Mean absolute difference between the first and last columns, i.e. the
    /// horizontal wrap seam of the panorama.
    pub fn wrap_discontinuity(&self) -> f64 {
        let mut acc = 0.0;
        for row in 0..self.height {
            acc += (self.pix(0, row) - self.pix(self.width - 1, row))
                .abs()
                .sum();
        }
        acc / (self.height * 3) as f64
    }

    /// 8-bit sRGB-encoded PNG for viewing.
    pub fn write_png(&self, path: &Path) -> Result<(), image::ImageError> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for row in 0..self.height {
            for col in 0..self.width {
                let p = self.pix(col, row);
                let enc = |v: f64| {
                    let v = v.clamp(0.0, 1.0);
                    let s = if v <= 0.003_130_8 {
                        12.92 * v
                    } else {
                        1.055 * v.powf(1.0 / 2.4) - 0.055
                    };
                    (s * 255.0).round() as u8
                };
                img.put_pixel(col as u32, row as u32, image::Rgb([enc(p.x), enc(p.y), enc(p.z)]));
            }
        }
        img.save(path)
    }

    /// 32-bit float PFM ("PF", little-endian, bottom-up scanlines), bit-exact
    /// for metric computation.
    pub fn write_pfm(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() * 4 + 32);
        buf.extend_from_slice(format!("PF\n{} {}\n-1.0\n", self.width, self.height).as_bytes());
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                let o = (row * self.width + col) * 3;
                for k in 0..3 {
                    buf.extend_from_slice(&(self.pixels[o + k] as f32).to_le_bytes());
                }
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)
    }

    pub fn read_pfm(path: &Path) -> std::io::Result<ErpImage> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if line.trim() != "PF" {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "expected color PFM",
            ));
        }
        line.clear();
        reader.read_line(&mut line)?;
        let mut dims = line.split_whitespace().map(|t| t.parse::<usize>());
        let width = dims.next().and_then(Result::ok).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, "bad PFM dims")
        })?;
        let height = dims.next().and_then(Result::ok).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, "bad PFM dims")
        })?;
        line.clear();
        reader.read_line(&mut line)?;
        let scale: f64 = line.trim().parse().map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, "bad PFM scale")
        })?;
        let little_endian = scale < 0.0;
        let mut raw = Vec::new();
        reader.read_to_end(&mut raw)?;
        if raw.len() < width * height * 12 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "truncated PFM payload",
            ));
        }
        let mut img = ErpImage::zeros(width, height);
        let mut off = 0;
        for row in (0..height).rev() {
            for col in 0..width {
                let o = (row * width + col) * 3;
                for k in 0..3 {
                    let b: [u8; 4] = raw[off..off + 4].try_into().unwrap();
                    let v = if little_endian {
                        f32::from_le_bytes(b)
                    } else {
                        f32::from_be_bytes(b)
                    };
                    img.pixels[o + k] = v as f64;
                    off += 4;
                }
            }
        }
        Ok(img)
    }
}

/// Camera for a single rasterization pass. `rot` maps camera-local to world;
/// points are viewed as p = rot⁻¹(x − center).
#[derive(Debug, Clone, Copy)]
pub struct RenderCamera {
    pub center: Vec3,
    pub rot: Rotation,
}

/// Column selector in the camera frame's azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AzimuthWindow {
    Full,
    /// Covers θ with wrap(θ − lo) ∈ [0, hi − lo). `hi` may exceed π.
    Range { lo: f64, hi: f64 },
}

impl AzimuthWindow {
    pub fn front_hemisphere() -> Self {
        AzimuthWindow::Range {
            lo: -std::f64::consts::FRAC_PI_2,
            hi: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn back_hemisphere() -> Self {
        AzimuthWindow::Range {
            lo: std::f64::consts::FRAC_PI_2,
            hi: 3.0 * std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        match self {
            AzimuthWindow::Full => true,
            AzimuthWindow::Range { lo, hi } => {
                (theta - lo).rem_euclid(std::f64::consts::TAU) < (hi - lo)
            }
        }
    }
}

/// A splat's 2D footprint after ERP projection.
#[derive(Debug, Clone)]
pub struct SplatProjection {
    pub center_px: (f64, f64),
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub alpha_peak: f64,
    /// Rendered (sigmoid) RGB.
    pub color: Vec3,
    pub source_index: usize,
}

/// Analytic Jacobian of the ERP map (u, v) w.r.t. camera-local position.
pub fn erp_jacobian(p: &Vec3, width: usize, height: usize) -> Matrix2x3<f64> {
    let (x, y, z) = (p.x, p.y, p.z);
    let r2 = p.norm_squared();
    let rho2 = (x * x + y * y).max(1e-18 * r2.max(f64::MIN_POSITIVE));
    let rho = rho2.sqrt();
    let ku = width as f64 / std::f64::consts::TAU;
    let kv = -(height as f64) / std::f64::consts::PI;
    Matrix2x3::new(
        ku * (-y / rho2),
        ku * (x / rho2),
        0.0,
        kv * (-x * z / (r2 * rho)),
        kv * (-y * z / (r2 * rho)),
        kv * (rho / r2),
    )
}

/// Hessians of (θ, φ) w.r.t. camera-local position; together with the pixel
/// scale factors these give ∂J/∂p for the covariance backward.
fn erp_hessians(p: &Vec3) -> (Mat3, Mat3) {
    let (x, y, z) = (p.x, p.y, p.z);
    let r2 = p.norm_squared();
    let rho2 = (x * x + y * y).max(1e-18 * r2.max(f64::MIN_POSITIVE));
    let rho = rho2.sqrt();
    let rho3 = rho2 * rho;
    let r4 = r2 * r2;

    let t_xx = 2.0 * x * y / (rho2 * rho2);
    let t_xy = (y * y - x * x) / (rho2 * rho2);
    let t_yy = -2.0 * x * y / (rho2 * rho2);
    let theta_h = Mat3::new(t_xx, t_xy, 0.0, t_xy, t_yy, 0.0, 0.0, 0.0, 0.0);

    let p_xx = -z / (r2 * rho) + 2.0 * x * x * z / (r4 * rho) + x * x * z / (r2 * rho3);
    let p_xy = 2.0 * x * y * z / (r4 * rho) + x * y * z / (r2 * rho3);
    let p_xz = -x / (r2 * rho) + 2.0 * x * z * z / (r4 * rho);
    let p_yy = -z / (r2 * rho) + 2.0 * y * y * z / (r4 * rho) + y * y * z / (r2 * rho3);
    let p_yz = -y / (r2 * rho) + 2.0 * y * z * z / (r4 * rho);
    let p_zz = -2.0 * z * rho / r4;
    let phi_h = Mat3::new(p_xx, p_xy, p_xz, p_xy, p_yy, p_yz, p_xz, p_yz, p_zz);

    (theta_h, phi_h)
}

/// Project one splat; `None` when culled (too close or too transparent).
pub fn project_splat(
    splat: &GaussianSplat,
    cam: &RenderCamera,
    width: usize,
    height: usize,
    source_index: usize,
) -> Option<SplatProjection> {
    let p = cam.rot.inverse_rotate(&(splat.mean - cam.center));
    let depth = p.norm();
    if depth < NEAR_CLIP {
        return None;
    }
    let alpha_peak = splat.opacity();
    if alpha_peak < ALPHA_CULL {
        return None;
    }
    let (u, v) = erp_project(&p, width, height).ok()?;
    let j = erp_jacobian(&p, width, height);
    let r_cam = cam.rot.to_matrix();
    let sigma_cam = r_cam.transpose() * splat.covariance() * r_cam;
    let cov2d = j * sigma_cam * j.transpose() + Matrix2::identity() * COV2D_LAMBDA;
    Some(SplatProjection {
        center_px: (u, v),
        cov2d,
        depth,
        alpha_peak,
        color: splat.rgb(),
        source_index,
    })
}

/// Wrap a pixel-space horizontal offset to [−W/2, W/2).
fn wrap_du(du: f64, width: usize) -> f64 {
    let w = width as f64;
    (du + 0.5 * w).rem_euclid(w) - 0.5 * w
}

struct Footprint {
    inv_cov: Matrix2<f64>,
    u0: f64,
    v0: f64,
}

/// Shared context for the forward and backward pixel loops.
struct RasterContext {
    width: usize,
    projections: Vec<SplatProjection>,
    footprints: Vec<Footprint>,
    /// Per-pixel indices into `projections`, each list depth-sorted.
    pixel_lists: Vec<Vec<u32>>,
    col_active: Vec<bool>,
}

fn build_context(
    scene: &GaussianScene,
    cam: &RenderCamera,
    width: usize,
    height: usize,
    window: AzimuthWindow,
) -> RasterContext {
    let mut projections: Vec<SplatProjection> = scene
        .splats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| project_splat(s, cam, width, height, i))
        .collect();
    projections.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.source_index.cmp(&b.source_index))
    });

    let col_active: Vec<bool> = (0..width)
        .map(|i| {
            let theta = ((i as f64 + 0.5) / width as f64 - 0.5) * std::f64::consts::TAU;
            window.contains(theta)
        })
        .collect();

    let mut pixel_lists: Vec<Vec<u32>> = vec![Vec::new(); width * height];
    let mut footprints = Vec::with_capacity(projections.len());
    for (k, proj) in projections.iter().enumerate() {
        let det = proj.cov2d[(0, 0)] * proj.cov2d[(1, 1)] - proj.cov2d[(0, 1)] * proj.cov2d[(1, 0)];
        let inv_cov = Matrix2::new(
            proj.cov2d[(1, 1)],
            -proj.cov2d[(0, 1)],
            -proj.cov2d[(1, 0)],
            proj.cov2d[(0, 0)],
        ) / det;
        let (u0, v0) = proj.center_px;
        footprints.push(Footprint { inv_cov, u0, v0 });

        let ru = 3.0 * proj.cov2d[(0, 0)].sqrt();
        let rv = 3.0 * proj.cov2d[(1, 1)].sqrt();
        let row_min = ((v0 - rv - 0.5).ceil().max(0.0)) as usize;
        let row_max = (v0 + rv - 0.5).floor().min(height as f64 - 1.0);
        if row_max < 0.0 {
            continue;
        }
        let row_max = row_max as usize;
        if row_min > row_max {
            continue;
        }
        // Wrap-aware column span; collapse to the full width for huge splats.
        let cols: Vec<usize> = if 2.0 * ru >= width as f64 {
            (0..width).collect()
        } else {
            let i_min = (u0 - ru - 0.5).ceil() as i64;
            let i_max = (u0 + ru - 0.5).floor() as i64;
            (i_min..=i_max)
                .map(|i| i.rem_euclid(width as i64) as usize)
                .collect()
        };
        for &col in &cols {
            if !col_active[col] {
                continue;
            }
            for row in row_min..=row_max {
                pixel_lists[row * width + col].push(k as u32);
            }
        }
    }
    RasterContext {
        width,
        projections,
        footprints,
        pixel_lists,
        col_active,
    }
}

fn composite_pixel(ctx: &RasterContext, col: usize, row: usize) -> Vec3 {
    let mut rgb = Vec3::zeros();
    let mut t = 1.0;
    let px = col as f64 + 0.5;
    let py = row as f64 + 0.5;
    for &k in &ctx.pixel_lists[row * ctx.width + col] {
        let proj = &ctx.projections[k as usize];
        let fp = &ctx.footprints[k as usize];
        let d = Vector2::new(wrap_du(px - fp.u0, ctx.width), py - fp.v0);
        let q = (d.transpose() * fp.inv_cov * d)[(0, 0)];
        let alpha = (proj.alpha_peak * (-0.5 * q).exp()).min(ALPHA_MAX);
        rgb += proj.color * (alpha * t);
        t *= 1.0 - alpha;
        if t < T_STOP {
            break;
        }
    }
    rgb
}

/// Forward rasterization: depth-sorted front-to-back alpha compositing over
/// the pixels whose column azimuth falls inside `window`.
pub fn rasterize(
    scene: &GaussianScene,
    cam: &RenderCamera,
    width: usize,
    height: usize,
    window: AzimuthWindow,
) -> ErpImage {
    let ctx = build_context(scene, cam, width, height, window);
    let mut img = ErpImage::zeros(width, height);
    img.pixels
        .par_chunks_mut(width * 3 * ROW_CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, out)| {
            let row0 = chunk_idx * ROW_CHUNK;
            for (r, row_out) in out.chunks_mut(width * 3).enumerate() {
                let row = row0 + r;
                for col in 0..width {
                    if !ctx.col_active[col] {
                        continue;
                    }
                    let rgb = composite_pixel(&ctx, col, row);
                    row_out[col * 3] = rgb.x;
                    row_out[col * 3 + 1] = rgb.y;
                    row_out[col * 3 + 2] = rgb.z;
                }
            }
        });
    img
}

/// Per-splat accumulators gathered during the pixel-space backward pass.
#[derive(Clone)]
struct PixelGrads {
    d_uv: Vec<Vector2<f64>>,
    d_cov: Vec<Matrix2<f64>>,
    d_alpha_peak: Vec<f64>,
    d_rgb: Vec<Vec3>,
}

impl PixelGrads {
    fn zeros(n: usize) -> Self {
        PixelGrads {
            d_uv: vec![Vector2::zeros(); n],
            d_cov: vec![Matrix2::zeros(); n],
            d_alpha_peak: vec![0.0; n],
            d_rgb: vec![Vec3::zeros(); n],
        }
    }

    fn add(&mut self, other: &PixelGrads) {
        for i in 0..self.d_uv.len() {
            self.d_uv[i] += other.d_uv[i];
            self.d_cov[i] += other.d_cov[i];
            self.d_alpha_peak[i] += other.d_alpha_peak[i];
            self.d_rgb[i] += other.d_rgb[i];
        }
    }
}

fn backward_pixel(
    ctx: &RasterContext,
    col: usize,
    row: usize,
    upstream: Vec3,
    acc: &mut PixelGrads,
    stack: &mut Vec<(u32, f64, f64, f64, f64, Vector2<f64>)>,
) {
    // Replay the forward composite, recording (idx, alpha, T_before, g, q, δ).
    stack.clear();
    let px = col as f64 + 0.5;
    let py = row as f64 + 0.5;
    let mut t = 1.0;
    for &k in &ctx.pixel_lists[row * ctx.width + col] {
        let proj = &ctx.projections[k as usize];
        let fp = &ctx.footprints[k as usize];
        let d = Vector2::new(wrap_du(px - fp.u0, ctx.width), py - fp.v0);
        let q = (d.transpose() * fp.inv_cov * d)[(0, 0)];
        let g = (-0.5 * q).exp();
        let alpha = (proj.alpha_peak * g).min(ALPHA_MAX);
        stack.push((k, alpha, t, g, q, d));
        t *= 1.0 - alpha;
        if t < T_STOP {
            break;
        }
    }
    // Reverse sweep with running post-splat contribution S.
    let mut s = Vec3::zeros();
    for &(k, alpha, t_before, g, _q, d) in stack.iter().rev() {
        let proj = &ctx.projections[k as usize];
        let fp = &ctx.footprints[k as usize];
        let ki = k as usize;
        acc.d_rgb[ki] += upstream * (alpha * t_before);
        let d_alpha = upstream.dot(&(proj.color * t_before - s / (1.0 - alpha)));
        let raw = proj.alpha_peak * g;
        if raw < ALPHA_MAX {
            acc.d_alpha_peak[ki] += d_alpha * g;
            let d_q = d_alpha * proj.alpha_peak * g * -0.5;
            let md = fp.inv_cov * d;
            acc.d_uv[ki] -= md * (2.0 * d_q);
            // dL/dM = d_q·δδᵀ, dL/dcov = −M·(dL/dM)·M.
            acc.d_cov[ki] -= (md * md.transpose()) * d_q;
        }
        s += proj.color * (alpha * t_before);
    }
}

/// Analytic gradients of a scalar loss w.r.t. every splat parameter, given
/// the per-pixel upstream gradient image dL/dI.
///
/// Mean gradients are world-frame with the camera held fixed; the camera
/// center gradient is implied by −Σᵢ ∂L/∂μᵢ and exploited by the calibration
/// backward. Orientation gradients are left-tangent vectors. Accumulation is
/// chunked over fixed-size row blocks so results do not depend on the worker
/// count.
pub fn rasterize_backward(
    scene: &GaussianScene,
    cam: &RenderCamera,
    width: usize,
    height: usize,
    window: AzimuthWindow,
    upstream: &ErpImage,
) -> SceneGrads {
    assert_eq!(upstream.width(), width);
    assert_eq!(upstream.height(), height);
    let ctx = build_context(scene, cam, width, height, window);
    let n_proj = ctx.projections.len();

    let rows: Vec<usize> = (0..height).collect();
    let partials: Vec<PixelGrads> = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let mut acc = PixelGrads::zeros(n_proj);
            let mut stack = Vec::with_capacity(64);
            for &row in chunk {
                for col in 0..width {
                    if !ctx.col_active[col] {
                        continue;
                    }
                    let up = upstream.pix(col, row);
                    if up == Vec3::zeros() {
                        continue;
                    }
                    backward_pixel(&ctx, col, row, up, &mut acc, &mut stack);
                }
            }
            acc
        })
        .collect();
    let mut acc = PixelGrads::zeros(n_proj);
    for p in &partials {
        acc.add(p);
    }

    // Chain pixel-space gradients to 3D splat parameters.
    let mut grads = SceneGrads::zeros(scene.len());
    let r_cam = cam.rot.to_matrix();
    for (k, proj) in ctx.projections.iter().enumerate() {
        let i = proj.source_index;
        let splat = &scene.splats[i];
        let p = cam.rot.inverse_rotate(&(splat.mean - cam.center));
        let j = erp_jacobian(&p, width, height);
        let sigma_w = splat.covariance();
        let sigma_cam = r_cam.transpose() * sigma_w * r_cam;

        let d_cov = (acc.d_cov[k] + acc.d_cov[k].transpose()) * 0.5;
        // Position path: center pixel plus the Jacobian's own dependence on p.
        let mut d_p = j.transpose() * acc.d_uv[k];
        let d_j = (d_cov * j * sigma_cam) * 2.0;
        let (theta_h, phi_h) = erp_hessians(&p);
        let ku = width as f64 / std::f64::consts::TAU;
        let kv = -(height as f64) / std::f64::consts::PI;
        for axis in 0..3 {
            // ∂J/∂p_axis rows are the Hessian columns scaled to pixels.
            let dj_axis = Matrix2x3::new(
                ku * theta_h[(0, axis)],
                ku * theta_h[(1, axis)],
                ku * theta_h[(2, axis)],
                kv * phi_h[(0, axis)],
                kv * phi_h[(1, axis)],
                kv * phi_h[(2, axis)],
            );
            d_p[axis] += d_j.component_mul(&dj_axis).sum();
        }
        grads.mean[i] += r_cam * d_p;

        // Covariance path.
        let d_sigma_cam = j.transpose() * d_cov * j;
        let d_sigma_w = r_cam * d_sigma_cam * r_cam.transpose();
        let r_q = splat.orient.to_matrix();
        let local = r_q.transpose() * d_sigma_w * r_q;
        for axis in 0..3 {
            grads.log_scale[i][axis] +=
                2.0 * (2.0 * splat.log_scale[axis]).exp() * local[(axis, axis)];
        }
        let m2 = sigma_w * d_sigma_w;
        grads.orient[i] += 2.0
            * Vec3::new(
                m2[(1, 2)] - m2[(2, 1)],
                m2[(2, 0)] - m2[(0, 2)],
                m2[(0, 1)] - m2[(1, 0)],
            );

        // Opacity and color activations.
        let ap = proj.alpha_peak;
        grads.opacity_logit[i] += acc.d_alpha_peak[k] * ap * (1.0 - ap);
        for ch in 0..3 {
            let c = proj.color[ch];
            grads.color[i][ch] += acc.d_rgb[k][ch] * c * (1.0 - c);
        }
    }
    grads
}

/// Render the imperfect training-time panorama: each hemisphere is rasterized
/// from its own (gap-displaced) camera center over the distortion-transformed
/// scene, in the ideal frame's orientation, and the two half-images are
/// concatenated at θ = ±π/2. Every hemisphere pass renders all splats; the
/// azimuth window crops the output columns.
pub fn render_stitched(
    scene: &GaussianScene,
    rig: &CameraRig,
    width: usize,
    height: usize,
) -> ErpImage {
    let mut out = ErpImage::zeros(width, height);
    for side in Side::BOTH {
        let (tscene, _) = transform_scene_recorded(scene, rig, side);
        let cam = RenderCamera {
            center: rig.camera_center(side),
            rot: rig.ideal_pose.rotation,
        };
        let window = match side {
            Side::Front => AzimuthWindow::front_hemisphere(),
            Side::Back => AzimuthWindow::back_hemisphere(),
        };
        let img = rasterize(&tscene, &cam, width, height, window);
        out.add(&img);
    }
    out
}

/// Distortion-free inference render from the ideal center.
pub fn render_ideal(scene: &GaussianScene, pose: &Pose, width: usize, height: usize) -> ErpImage {
    let cam = RenderCamera {
        center: pose.translation,
        rot: pose.rotation,
    };
    rasterize(scene, &cam, width, height, AzimuthWindow::Full)
}
