//! Spherical coordinates, equirectangular pixel mapping, SO(3) maps and rigid poses.
//!
//! Axis convention used throughout the crate: +x forward (panorama center),
//! +y left, +z up. Azimuth θ is measured counter-clockwise from +x and lives
//! in [−π, π); elevation φ is positive upward and lives in [−π/2, π/2].
//! ERP images use pixel-center sampling: pixel (i, j) corresponds to the
//! continuous coordinate (i + 0.5, j + 0.5).

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Angle below which `so3_exp`/`so3_log` switch to their series expansion.
pub const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("direction vector has zero length")]
    ZeroVector,
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    /// Azimuth in [−π, π), counter-clockwise from +x.
    pub theta: f64,
    /// Elevation in [−π/2, π/2], positive toward +z.
    pub phi: f64,
}

impl Spherical {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }
}

/// Wrap an angle to [−π, π).
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Unit-quaternion rotation. Kept normalized by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Build from raw (w, x, y, z) components; normalizes.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    /// Rotation of `angle` radians about +z.
    pub fn yaw(angle: f64) -> Self {
        so3_exp(&Vec3::new(0.0, 0.0, angle))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.inverse_transform_vector(v)
    }

    /// Composition: `self` applied after `other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn to_matrix(&self) -> Mat3 {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }
}

/// Rigid pose: rotation (local → world) plus translation (world position).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }
}

/// Direction to (θ, φ). Errors on the zero vector.
pub fn dir_to_spherical(v: &Vec3) -> Result<Spherical, GeomError> {
    let n = v.norm();
    if n == 0.0 {
        return Err(GeomError::ZeroVector);
    }
    let theta = wrap_angle(v.y.atan2(v.x));
    let phi = (v.z / n).clamp(-1.0, 1.0).asin();
    Ok(Spherical { theta, phi })
}

/// (θ, φ) to unit direction. Inverse of [`dir_to_spherical`].
pub fn spherical_to_dir(s: &Spherical) -> Vec3 {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    Vec3::new(cp * ct, cp * st, sp)
}

/// Project a direction to continuous ERP pixel coordinates.
///
/// u = (θ/2π + 0.5)·W, v = (0.5 − φ/π)·H. Requires W = 2H.
pub fn erp_project(v: &Vec3, width: usize, height: usize) -> Result<(f64, f64), GeomError> {
    debug_assert_eq!(width, 2 * height, "ERP images are 2:1");
    let s = dir_to_spherical(v)?;
    let u = (s.theta / std::f64::consts::TAU + 0.5) * width as f64;
    let vv = (0.5 - s.phi / std::f64::consts::PI) * height as f64;
    Ok((u, vv))
}

/// Continuous ERP pixel coordinates to unit direction.
pub fn erp_unproject(u: f64, v: f64, width: usize, height: usize) -> Vec3 {
    let theta = (u / width as f64 - 0.5) * std::f64::consts::TAU;
    let phi = (0.5 - v / height as f64) * std::f64::consts::PI;
    spherical_to_dir(&Spherical { theta, phi })
}

/// SO(3) exponential: axis-angle 3-vector to rotation.
///
/// Uses the sin(θ/2)/θ series below [`SMALL_ANGLE`] so the zero vector maps
/// exactly to the identity.
pub fn so3_exp(omega: &Vec3) -> Rotation {
    let angle = omega.norm();
    let half = 0.5 * angle;
    // k = sin(θ/2)/θ; series: 1/2 − θ²/48 + θ⁴/3840
    let k = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        0.5 - a2 / 48.0 + a2 * a2 / 3840.0
    } else {
        half.sin() / angle
    };
    let w = half.cos();
    let q = Quaternion::new(w, k * omega.x, k * omega.y, k * omega.z);
    Rotation(UnitQuaternion::from_quaternion(q))
}

/// SO(3) logarithm: rotation to axis-angle with ‖result‖ ∈ [0, π].
pub fn so3_log(r: &Rotation) -> Vec3 {
    let q = r.0.quaternion();
    // Force w ≥ 0 so the returned angle is the short one.
    let (w, v) = if q.w < 0.0 {
        (-q.w, -Vec3::new(q.i, q.j, q.k))
    } else {
        (q.w, Vec3::new(q.i, q.j, q.k))
    };
    let vn = v.norm();
    if vn < SMALL_ANGLE {
        // angle/vn = 2/w · (1 + vn²/(3w²) + …); first term suffices here.
        return v * (2.0 / w.max(f64::MIN_POSITIVE));
    }
    let angle = 2.0 * vn.atan2(w);
    v * (angle / vn)
}

/// Skew-symmetric (cross-product) matrix of `v`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of SO(3):
/// Jr(ω) = I − (1−cosθ)/θ² [ω]× + (θ−sinθ)/θ³ [ω]×².
///
/// Satisfies exp(ω + δ) ≈ exp(ω)·exp(Jr(ω)·δ), which makes it the chain-rule
/// factor for derivatives through `so3_exp`:
/// ∂(exp(ω)·v)/∂ω = −exp(ω)·[v]×·Jr(ω).
pub fn so3_right_jacobian(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let wx = skew(omega);
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Mat3::identity() - wx * a + wx * wx * b
}
