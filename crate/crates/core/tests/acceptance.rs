//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Tolerances and thresholds are pinned in code next to each check.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use seamgs_core::calib::{
    transform_scene, transform_scene_recorded, CameraRig, DualFisheyeCalib, Side,
};
use seamgs_core::geom::{
    erp_project, erp_unproject, so3_exp, so3_log, Pose, Rotation, Vec3,
};
use seamgs_core::metrics::{evaluate, gap_mae, psnr, ssim, RenderMode};
use seamgs_core::optim::{photometric_loss, total_loss, train, TrainConfig};
use seamgs_core::raster::{render_ideal, render_stitched, ErpImage};
use seamgs_core::scene::{logit, GaussianScene, GaussianSplat, SceneMeta};
use seamgs_core::synth::{
    band_limited_grid, generate_dataset, make_toy_scene, Dataset, GeneratorConfig, SceneKind,
};
use std::time::Instant;

fn pass(line: &str) {
    println!("ACCEPTANCE {line}: PASS");
}

/// Criterion 1: ERP round-trip < 1e-6 px over a full 256×128 sweep and
/// SO(3) exp/log round-trip < 1e-9 over 1000 random axis-angles, in < 5 s.
#[test]
fn criterion_1_geometry_suite() {
    let start = Instant::now();

    let (w, h) = (256usize, 128usize);
    let mut max_px = 0.0f64;
    for j in 0..h {
        for i in 0..w {
            let (u, v) = (i as f64 + 0.5, j as f64 + 0.5);
            let d = erp_unproject(u, v, w, h);
            let (u2, v2) = erp_project(&d, w, h).unwrap();
            max_px = max_px.max((u - u2).abs()).max((v - v2).abs());
        }
    }
    assert!(max_px < 1e-6, "ERP round-trip error {max_px} px");

    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut max_so3 = 0.0f64;
    for _ in 0..1000 {
        let axis = loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                break v / v.norm();
            }
        };
        let omega = axis * rng.gen_range(0.0..std::f64::consts::PI - 0.01);
        let back = so3_log(&so3_exp(&omega));
        max_so3 = max_so3.max((back - omega).norm());
    }
    assert!(max_so3 < 1e-9, "so3 round-trip error {max_so3}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "geometry suite took {secs:.2} s");
    pass(&format!(
        "criterion 1 (geometry: erp {max_px:.2e} px, so3 {max_so3:.2e}, {secs:.2} s)"
    ));
}

fn gradcheck_scene(seed: u64, n: usize) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splats = (0..n)
        .map(|_| {
            let dir = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.6..0.6),
            )
            .normalize();
            let mean = dir * rng.gen_range(1.0..2.5);
            GaussianSplat {
                mean,
                log_scale: Vec3::new(
                    rng.gen_range(-2.6..-2.0),
                    rng.gen_range(-2.6..-2.0),
                    rng.gen_range(-2.6..-2.0),
                ),
                orient: so3_exp(&Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )),
                opacity_logit: logit(rng.gen_range(0.55..0.9)),
                color: Vec3::new(
                    logit(rng.gen_range(0.2..0.8)),
                    logit(rng.gen_range(0.2..0.8)),
                    logit(rng.gen_range(0.2..0.8)),
                ),
            }
        })
        .collect();
    GaussianScene {
        splats,
        meta: SceneMeta::default(),
    }
}

/// Loss value only, for finite differencing.
fn loss_value(
    scene: &GaussianScene,
    calib: &DualFisheyeCalib,
    pose: &Pose,
    gt: &ErpImage,
    cfg: &TrainConfig,
) -> f64 {
    let rig = CameraRig::new(*pose, calib.clone());
    let stitched = render_stitched(scene, &rig, gt.width(), gt.height());
    photometric_loss(&stitched, gt, cfg.lambda_dssim)
        + cfg.lambda_tv
            * (seamgs_core::calib::tv_loss(&rig.calib.grid_front)
                + seamgs_core::calib::tv_loss(&rig.calib.grid_back))
}

fn check_grad(name: &str, analytic: f64, numeric: f64, worst: &mut (f64, String)) {
    let denom = analytic.abs().max(numeric.abs());
    let abs_err = (analytic - numeric).abs();
    let rel = if denom > 0.0 { abs_err / denom } else { 0.0 };
    if rel > worst.0 && abs_err >= 1e-7 {
        *worst = (rel, format!("{name}: analytic {analytic:.6e} fd {numeric:.6e}"));
    }
    assert!(
        rel < 1e-3 || abs_err < 1e-7,
        "{name}: analytic {analytic:.8e} vs fd {numeric:.8e} (rel {rel:.2e}, abs {abs_err:.2e})"
    );
}

/// Criterion 2: on a seeded 10-splat scene at 64×32, every analytic gradient
/// matches central finite differences (h = 1e-5) within 1e-3 relative or
/// 1e-7 absolute, in < 2 min.
#[test]
fn criterion_2_gradient_gate() {
    let start = Instant::now();
    let (w, h) = (64usize, 32usize);
    let scene = gradcheck_scene(2025, 10);

    // Calibration state: millimeter gaps plus a smooth ~0.1° grid. The
    // sampling location is a stop-gradient by design, so its contribution to
    // the finite differences scales with the grid's cell-to-cell variation;
    // a smooth low-amplitude field keeps that term well under the tolerance
    // while still exercising every term of the chain rule.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (rows, cols) = (6usize, 12usize);
    let mut calib = DualFisheyeCalib {
        dt_front: Vec3::new(0.005, -0.004, 0.003),
        dt_back: Vec3::new(-0.003, 0.006, -0.005),
        grid_front: band_limited_grid(rows, cols, 0.1f64.to_radians(), &mut rng),
        grid_back: band_limited_grid(rows, cols, 0.1f64.to_radians(), &mut rng),
    };
    // Perturb cells slightly so no cell is exactly representable by the
    // band-limited basis (exercises independent cell gradients).
    for c in calib
        .grid_front
        .cells
        .iter_mut()
        .chain(calib.grid_back.cells.iter_mut())
    {
        *c += Vec3::new(
            rng.gen_range(-1e-4..1e-4),
            rng.gen_range(-1e-4..1e-4),
            rng.gen_range(-1e-4..1e-4),
        );
    }

    let pose = Pose::identity();
    let cfg = TrainConfig {
        width: w,
        height: h,
        grid_rows: rows,
        grid_cols: cols,
        ..Default::default()
    };

    // Fixed target: a different scene, so pred − gt stays well away from the
    // L1 kink at zero on covered pixels.
    let gt_scene = gradcheck_scene(404, 10);
    let gt = render_ideal(&gt_scene, &pose, w, h);

    let rig = CameraRig::new(pose, calib.clone());
    let (_, sg, cg) = total_loss(&scene, &rig, &gt, &cfg);

    let fd_h = 1e-5;
    let mut worst = (0.0f64, String::new());
    let mut fd = |calib_mod: &DualFisheyeCalib, scene_mod: &GaussianScene| -> f64 {
        loss_value(scene_mod, calib_mod, &pose, &gt, &cfg)
    };

    // Splat parameters.
    for i in 0..scene.len() {
        for k in 0..3 {
            let mut sp = scene.clone();
            let mut sm = scene.clone();
            sp.splats[i].mean[k] += fd_h;
            sm.splats[i].mean[k] -= fd_h;
            let num = (fd(&calib, &sp) - fd(&calib, &sm)) / (2.0 * fd_h);
            check_grad(&format!("splat {i} mean[{k}]"), sg.mean[i][k], num, &mut worst);

            let mut sp = scene.clone();
            let mut sm = scene.clone();
            sp.splats[i].log_scale[k] += fd_h;
            sm.splats[i].log_scale[k] -= fd_h;
            let num = (fd(&calib, &sp) - fd(&calib, &sm)) / (2.0 * fd_h);
            check_grad(
                &format!("splat {i} log_scale[{k}]"),
                sg.log_scale[i][k],
                num,
                &mut worst,
            );

            let mut axis = Vec3::zeros();
            axis[k] = fd_h;
            let mut sp = scene.clone();
            let mut sm = scene.clone();
            sp.splats[i].orient = so3_exp(&axis).compose(&scene.splats[i].orient);
            sm.splats[i].orient = so3_exp(&(-axis)).compose(&scene.splats[i].orient);
            let num = (fd(&calib, &sp) - fd(&calib, &sm)) / (2.0 * fd_h);
            check_grad(&format!("splat {i} orient[{k}]"), sg.orient[i][k], num, &mut worst);

            let mut sp = scene.clone();
            let mut sm = scene.clone();
            sp.splats[i].color[k] += fd_h;
            sm.splats[i].color[k] -= fd_h;
            let num = (fd(&calib, &sp) - fd(&calib, &sm)) / (2.0 * fd_h);
            check_grad(&format!("splat {i} color[{k}]"), sg.color[i][k], num, &mut worst);
        }
        let mut sp = scene.clone();
        let mut sm = scene.clone();
        sp.splats[i].opacity_logit += fd_h;
        sm.splats[i].opacity_logit -= fd_h;
        let num = (fd(&calib, &sp) - fd(&calib, &sm)) / (2.0 * fd_h);
        check_grad(&format!("splat {i} opacity"), sg.opacity_logit[i], num, &mut worst);
    }

    // Gap translations.
    for k in 0..3 {
        let mut cp = calib.clone();
        let mut cm = calib.clone();
        cp.dt_front[k] += fd_h;
        cm.dt_front[k] -= fd_h;
        let num = (fd(&cp, &scene) - fd(&cm, &scene)) / (2.0 * fd_h);
        check_grad(&format!("dt_front[{k}]"), cg.dt_front[k], num, &mut worst);

        let mut cp = calib.clone();
        let mut cm = calib.clone();
        cp.dt_back[k] += fd_h;
        cm.dt_back[k] -= fd_h;
        let num = (fd(&cp, &scene) - fd(&cm, &scene)) / (2.0 * fd_h);
        check_grad(&format!("dt_back[{k}]"), cg.dt_back[k], num, &mut worst);
    }

    // Every grid cell (the TV term gives unsupported cells a gradient too).
    for (side_name, grid_grads) in [("front", &cg.grid_front), ("back", &cg.grid_back)] {
        for idx in 0..grid_grads.len() {
            for k in 0..3 {
                let mut cp = calib.clone();
                let mut cm = calib.clone();
                {
                    let g = if side_name == "front" {
                        &mut cp.grid_front
                    } else {
                        &mut cp.grid_back
                    };
                    g.cells[idx][k] += fd_h;
                }
                {
                    let g = if side_name == "front" {
                        &mut cm.grid_front
                    } else {
                        &mut cm.grid_back
                    };
                    g.cells[idx][k] -= fd_h;
                }
                let num = (fd(&cp, &scene) - fd(&cm, &scene)) / (2.0 * fd_h);
                check_grad(
                    &format!("grid_{side_name}[{idx}][{k}]"),
                    grid_grads[idx][k],
                    num,
                    &mut worst,
                );
            }
        }
    }

    // Support oracle: without TV, cells outside every splat's bilinear
    // footprint receive exactly zero gradient.
    let cfg_no_tv = TrainConfig {
        lambda_tv: 0.0,
        ..cfg.clone()
    };
    let (_, _, cg0) = total_loss(&scene, &rig, &gt, &cfg_no_tv);
    for side in Side::BOTH {
        let (_, records) = transform_scene_recorded(&scene, &rig, side);
        let mut support = vec![false; rows * cols];
        for rec in &records {
            for c in rec.cells {
                support[c] = true;
            }
        }
        let grads = match side {
            Side::Front => &cg0.grid_front,
            Side::Back => &cg0.grid_back,
        };
        for (idx, has) in support.iter().enumerate() {
            if !has {
                assert_eq!(
                    grads[idx],
                    Vec3::zeros(),
                    "unsupported cell {idx} on {side:?} has nonzero gradient"
                );
            }
        }
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "gradient gate took {secs:.1} s");
    pass(&format!(
        "criterion 2 (gradient gate: worst rel {:.2e} [{}], {secs:.1} s)",
        worst.0, worst.1
    ));
}

/// Criterion 3: zero calibration makes render_stitched equal render_ideal
/// within 1e-5 per channel (excluding the two seam columns) and
/// transform_scene the identity within 1e-12, in < 10 s.
#[test]
fn criterion_3_identity_gate() {
    let start = Instant::now();
    let scene = make_toy_scene(SceneKind::Room, 300, 33).unwrap();
    let pose = Pose::new(so3_exp(&Vec3::new(0.05, -0.1, 0.2)), Vec3::new(0.3, -0.2, 0.1));
    let rig = CameraRig::new(pose, DualFisheyeCalib::zeros(8, 16));

    for side in Side::BOTH {
        let out = transform_scene(&scene, &rig, side);
        for (a, b) in scene.splats.iter().zip(&out.splats) {
            assert!(
                (a.mean - b.mean).abs().max() < 1e-12,
                "transform_scene moved a splat by {:?}",
                (a.mean - b.mean)
            );
            let dq = so3_log(&b.orient.compose(&a.orient.inverse()));
            assert!(dq.norm() < 1e-12, "orientation drifted by {dq:?}");
            assert_eq!(a.log_scale, b.log_scale);
            assert_eq!(a.opacity_logit, b.opacity_logit);
            assert_eq!(a.color, b.color);
        }
    }

    let (w, h) = (256usize, 128usize);
    let stitched = render_stitched(&scene, &rig, w, h);
    let ideal = render_ideal(&scene, &pose, w, h);
    let seam_cols = [w / 4, 3 * w / 4];
    let mut max_err = 0.0f64;
    for row in 0..h {
        for col in 0..w {
            if seam_cols.contains(&col) {
                continue;
            }
            max_err = max_err.max((stitched.pix(col, row) - ideal.pix(col, row)).abs().max());
        }
    }
    assert!(max_err < 1e-5, "stitched vs ideal max err {max_err}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "identity gate took {secs:.2} s");
    pass(&format!(
        "criterion 3 (identity gate: max pixel err {max_err:.2e}, {secs:.2} s)"
    ));
}

/// Criterion 7: PSNR(0, 0.5) = 6.021 dB ± 1e-3, SSIM(a,a) = 1,
/// uniform-offset gap MAE = 0.1 cm exactly.
#[test]
fn criterion_7_metrics_self_tests() {
    let black = ErpImage::zeros(64, 32);
    let mut gray = ErpImage::zeros(64, 32);
    for p in gray.pixels.iter_mut() {
        *p = 0.5;
    }
    let v = psnr(&black, &gray).unwrap();
    assert!((v - 6.021).abs() < 1e-3, "PSNR {v}");

    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    let mut img = ErpImage::zeros(64, 32);
    for p in img.pixels.iter_mut() {
        *p = rng.gen_range(0.0..1.0);
    }
    let s = ssim(&img, &img).unwrap();
    assert!((s - 1.0).abs() < 1e-12, "SSIM(a,a) = {s}");

    let gt = DualFisheyeCalib::zeros(2, 4);
    let mut pred = DualFisheyeCalib::zeros(2, 4);
    pred.dt_front = Vec3::new(0.001, 0.001, 0.001);
    pred.dt_back = Vec3::new(0.001, 0.001, 0.001);
    assert_eq!(gap_mae(&pred, &gt), 0.1);

    pass("criterion 7 (metrics self-tests)");
}
