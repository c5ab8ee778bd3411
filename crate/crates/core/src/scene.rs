//! Gaussian scene representation: anisotropic splats with covariance
//! construction, initialization from points, and binary persistence.

use crate::geom::{Mat3, Rotation, Vec3};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Magic bytes for the scene file format.
const SCENE_MAGIC: &[u8; 4] = b"SGS1";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot build a scene from empty inputs")]
    EmptyInput,
    #[error("points/colors length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes (expected SGS1)")]
    BadMagic,
    #[error("truncated scene file")]
    Truncated,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One anisotropic Gaussian primitive.
///
/// Scales are stored as logs and opacity as a logit so every field is an
/// unconstrained optimization variable. `color` is likewise raw; the rendered
/// RGB is `sigmoid(color)` per channel (degree-0 color, no view dependence).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSplat {
    /// Center in meters.
    pub mean: Vec3,
    /// Per-axis log standard deviation (log-meters).
    pub log_scale: Vec3,
    /// Orientation of the principal axes.
    pub orient: Rotation,
    pub opacity_logit: f64,
    /// Raw color parameters; rendered RGB is sigmoid of these.
    pub color: Vec3,
}

impl GaussianSplat {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn rgb(&self) -> Vec3 {
        self.color.map(sigmoid)
    }

    /// World-space covariance Σ = R·diag(exp(log_scale))²·Rᵀ.
    pub fn covariance(&self) -> Mat3 {
        let r = self.orient.to_matrix();
        let d = Mat3::from_diagonal(&self.log_scale.map(|s| (2.0 * s).exp()));
        r * d * r.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneMeta {
    pub seed: u64,
    /// Units are meters unless a scene says otherwise.
    pub unit_scale: f64,
}

impl Default for SceneMeta {
    fn default() -> Self {
        SceneMeta {
            seed: 0,
            unit_scale: 1.0,
        }
    }
}

/// Ordered collection of splats. Order is stable across persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub splats: Vec<GaussianSplat>,
    pub meta: SceneMeta,
}

impl GaussianScene {
    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    /// Largest splat distance from the centroid; used to scale learning rates.
    pub fn extent(&self) -> f64 {
        if self.splats.is_empty() {
            return 0.0;
        }
        let centroid: Vec3 =
            self.splats.iter().map(|s| s.mean).sum::<Vec3>() / self.splats.len() as f64;
        self.splats
            .iter()
            .map(|s| (s.mean - centroid).norm())
            .fold(0.0, f64::max)
    }
}

/// Build a scene with one isotropic splat per input point.
///
/// Colors are expected in [0, 1] and are stored through the logit so the
/// rendered sigmoid color reproduces them; inputs are clamped away from the
/// saturated endpoints.
pub fn init_from_points(
    points: &[Vec3],
    colors: &[Vec3],
    base_scale: f64,
) -> Result<GaussianScene, SceneError> {
    if points.is_empty() {
        return Err(SceneError::EmptyInput);
    }
    if points.len() != colors.len() {
        return Err(SceneError::LengthMismatch(points.len(), colors.len()));
    }
    assert!(base_scale > 0.0, "base_scale must be positive");
    let ls = base_scale.ln();
    let splats = points
        .iter()
        .zip(colors)
        .map(|(p, c)| GaussianSplat {
            mean: *p,
            log_scale: Vec3::new(ls, ls, ls),
            orient: Rotation::identity(),
            opacity_logit: logit(0.8),
            color: c.map(|v| logit(v.clamp(1e-4, 1.0 - 1e-4))),
        })
        .collect();
    Ok(GaussianScene {
        splats,
        meta: SceneMeta::default(),
    })
}

/// Write the binary scene file: magic, u64 splat count, then 14 f32 LE values
/// per splat (mean 3, log_scale 3, orient wxyz 4, opacity_logit 1, color 3).
pub fn save_scene(scene: &GaussianScene, path: &Path) -> Result<(), SceneError> {
    let mut buf = Vec::with_capacity(4 + 8 + scene.len() * 14 * 4);
    buf.extend_from_slice(SCENE_MAGIC);
    buf.extend_from_slice(&(scene.len() as u64).to_le_bytes());
    for s in &scene.splats {
        let [w, x, y, z] = s.orient.wxyz();
        let fields: [f64; 14] = [
            s.mean.x,
            s.mean.y,
            s.mean.z,
            s.log_scale.x,
            s.log_scale.y,
            s.log_scale.z,
            w,
            x,
            y,
            z,
            s.opacity_logit,
            s.color.x,
            s.color.y,
            s.color.z,
        ];
        for f in fields {
            buf.extend_from_slice(&(f as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<GaussianScene, SceneError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(SceneError::Truncated);
    }
    if &bytes[0..4] != SCENE_MAGIC {
        return Err(SceneError::BadMagic);
    }
    let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let expected = 12 + count * 14 * 4;
    if bytes.len() < expected {
        return Err(SceneError::Truncated);
    }
    let mut splats = Vec::with_capacity(count);
    let mut off = 12;
    let mut next = || {
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        off += 4;
        v
    };
    for _ in 0..count {
        let mean = Vec3::new(next(), next(), next());
        let log_scale = Vec3::new(next(), next(), next());
        let orient = Rotation::from_wxyz(next(), next(), next(), next());
        let opacity_logit = next();
        let color = Vec3::new(next(), next(), next());
        splats.push(GaussianSplat {
            mean,
            log_scale,
            orient,
            opacity_logit,
            color,
        });
    }
    Ok(GaussianScene {
        splats,
        meta: SceneMeta::default(),
    })
}
