//! Quantitative evaluation: PSNR, single-scale SSIM (with a crate-internal
//! gradient used by the photometric loss), inter-camera gap MAE in
//! centimeters, and test-split evaluation reports.

use crate::calib::{CameraRig, DualFisheyeCalib};
use crate::raster::{render_ideal, render_stitched, ErpImage};
use crate::scene::GaussianScene;
use crate::synth::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: {0}×{1} vs {2}×{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("test split is empty")]
    EmptyTestSplit,
}

/// Peak signal-to-noise ratio in dB over [0, 1] radiance, capped at 99 dB.
pub fn psnr(a: &ErpImage, b: &ErpImage) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let mse: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn check_dims(a: &ErpImage, b: &ErpImage) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable "valid" filtering: output is (h−10)×(w−10).
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a (h−10)×(w−10) gradient back to h×w.
fn filter_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let gv = g[y * ow + x];
            if gv == 0.0 {
                continue;
            }
            for (i, kv) in k.iter().enumerate() {
                tmp[(y + i) * ow + x] += kv * gv;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..ow {
            let gv = tmp[y * ow + x];
            if gv == 0.0 {
                continue;
            }
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * gv;
            }
        }
    }
    out
}

fn channel(img: &ErpImage, ch: usize) -> Vec<f64> {
    img.pixels.iter().skip(ch).step_by(3).copied().collect()
}

/// Standard single-scale SSIM: 11×11 Gaussian window (σ = 1.5),
/// C1 = 0.01², C2 = 0.03², mean over valid pixels, channels averaged.
pub fn ssim(a: &ErpImage, b: &ErpImage) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM value plus its gradient w.r.t. the first image.
pub(crate) fn ssim_with_pred_grad(pred: &ErpImage, gt: &ErpImage) -> (f64, Vec<f64>) {
    let (v, g) = ssim_impl(pred, gt, true);
    (v, g.unwrap())
}

fn ssim_impl(pred: &ErpImage, gt: &ErpImage, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (w, h) = (pred.width(), pred.height());
    assert!(
        w >= SSIM_WINDOW && h >= SSIM_WINDOW,
        "image smaller than the SSIM window"
    );
    let k = gaussian_kernel();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let n_valid = ow * oh;
    let wt = 1.0 / (3.0 * n_valid as f64);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; w * h * 3]);
    for ch in 0..3 {
        let x = channel(pred, ch);
        let y = channel(gt, ch);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let ux = filter_valid(&x, w, h, &k);
        let uy = filter_valid(&y, w, h, &k);
        let vxx = filter_valid(&xx, w, h, &k);
        let vyy = filter_valid(&yy, w, h, &k);
        let vxy = filter_valid(&xy, w, h, &k);

        let mut g_ux = want_grad.then(|| vec![0.0; n_valid]);
        let mut g_vxx = want_grad.then(|| vec![0.0; n_valid]);
        let mut g_vxy = want_grad.then(|| vec![0.0; n_valid]);
        for p in 0..n_valid {
            let (mx, my) = (ux[p], uy[p]);
            let sxx = vxx[p] - mx * mx;
            let syy = vyy[p] - my * my;
            let sxy = vxy[p] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * sxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = sxx + syy + SSIM_C2;
            let s = (a1 * a2) / (b1 * b2);
            total += s * wt;
            if let (Some(gux), Some(gvxx), Some(gvxy)) =
                (g_ux.as_mut(), g_vxx.as_mut(), g_vxy.as_mut())
            {
                let ds_da1 = a2 / (b1 * b2);
                let ds_da2 = a1 / (b1 * b2);
                let ds_db1 = -s / b1;
                let ds_db2 = -s / b2;
                gux[p] = wt
                    * (ds_da1 * 2.0 * my + ds_da2 * (-2.0 * my)
                        + ds_db1 * 2.0 * mx
                        + ds_db2 * (-2.0 * mx));
                gvxx[p] = wt * ds_db2;
                gvxy[p] = wt * ds_da2 * 2.0;
            }
        }
        if let (Some(grad), Some(gux), Some(gvxx), Some(gvxy)) =
            (grad.as_mut(), g_ux, g_vxx, g_vxy)
        {
            let from_ux = filter_valid_adjoint(&gux, w, h, &k);
            let from_vxx = filter_valid_adjoint(&gvxx, w, h, &k);
            let from_vxy = filter_valid_adjoint(&gvxy, w, h, &k);
            for p in 0..w * h {
                grad[p * 3 + ch] = from_ux[p] + 2.0 * x[p] * from_vxx[p] + y[p] * from_vxy[p];
            }
        }
    }
    (total, grad)
}

/// Mean absolute error between predicted and ground-truth gap translations,
/// pooled over both cameras' six components, in centimeters.
pub fn gap_mae(pred: &DualFisheyeCalib, gt: &DualFisheyeCalib) -> f64 {
    // Average in meters before converting so a uniform offset of d meters
    // reports exactly 100·d.
    let mut sum_m = 0.0;
    for k in 0..3 {
        sum_m += (pred.dt_front[k] - gt.dt_front[k]).abs();
    }
    for k in 0..3 {
        sum_m += (pred.dt_back[k] - gt.dt_back[k]).abs();
    }
    (sum_m / 6.0) * 100.0
}

/// Per-component absolute gap errors in centimeters:
/// front x/y/z then back x/y/z.
pub fn gap_errors(pred: &DualFisheyeCalib, gt: &DualFisheyeCalib) -> [f64; 6] {
    let mut out = [0.0; 6];
    for k in 0..3 {
        out[k] = (pred.dt_front[k] - gt.dt_front[k]).abs() * 100.0;
        out[3 + k] = (pred.dt_back[k] - gt.dt_back[k]).abs() * 100.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Render through the calibration model (training-time imperfect view).
    Stitched,
    /// Render from the ideal center with the distortion module disabled.
    Ideal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewScore {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: RenderMode,
    pub per_view: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub gap_mae_cm: Option<f64>,
    pub per_axis_gap_err_cm: Option<[f64; 6]>,
}

impl EvalReport {
    /// Fixed-width summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>6} {:>10} {:>8}\n", "view", "psnr", "ssim"));
        for v in &self.per_view {
            out.push_str(&format!("{:>6} {:>10.3} {:>8.4}\n", v.view, v.psnr, v.ssim));
        }
        out.push_str(&format!(
            "{:>6} {:>10.3} {:>8.4}\n",
            "mean", self.mean_psnr, self.mean_ssim
        ));
        if let Some(mae) = self.gap_mae_cm {
            out.push_str(&format!("gap MAE: {mae:.4} cm\n"));
        }
        out
    }
}

/// Render every test view in the requested mode and aggregate metrics against
/// the dataset's captured images. Includes gap MAE when the dataset carries
/// ground-truth calibration.
pub fn evaluate(
    scene: &GaussianScene,
    calib: &DualFisheyeCalib,
    dataset: &Dataset,
    mode: RenderMode,
) -> Result<EvalReport, MetricsError> {
    if dataset.test_idx.is_empty() {
        return Err(MetricsError::EmptyTestSplit);
    }
    let per_view: Vec<ViewScore> = dataset
        .test_idx
        .par_iter()
        .map(|&idx| {
            let view = &dataset.views[idx];
            let (w, h) = (view.image.width(), view.image.height());
            let rendered = match mode {
                RenderMode::Stitched => {
                    let rig = CameraRig::new(view.pose, calib.clone());
                    render_stitched(scene, &rig, w, h)
                }
                RenderMode::Ideal => render_ideal(scene, &view.pose, w, h),
            };
            ViewScore {
                view: idx,
                psnr: psnr(&rendered, &view.image).expect("dims checked by dataset invariant"),
                ssim: ssim(&rendered, &view.image).expect("dims checked by dataset invariant"),
            }
        })
        .collect();
    let n = per_view.len() as f64;
    let mean_psnr = per_view.iter().map(|v| v.psnr).sum::<f64>() / n;
    let mean_ssim = per_view.iter().map(|v| v.ssim).sum::<f64>() / n;
    let (gap_mae_cm, per_axis) = match &dataset.gt_calib {
        Some(gt) => (Some(gap_mae(calib, gt)), Some(gap_errors(calib, gt))),
        None => (None, None),
    };
    Ok(EvalReport {
        mode,
        per_view,
        mean_psnr,
        mean_ssim,
        gap_mae_cm,
        per_axis_gap_err_cm: per_axis,
    })
}
