//! Rotation algebra and fixed-step integration.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and represent the rotation
//! from the body frame to the world frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `|q| - 1` accepted by conversions that require a unit quaternion.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate attitude: quaternion has zero norm")]
    DegenerateQuaternion,
    #[error("quaternion is not unit (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("matrix is not a proper rotation")]
    NotOrthonormal,
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("derivative evaluation produced a non-finite value")]
    NonFiniteDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Z-Y-X (yaw, pitch, roll) Euler angles.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let qz = Self::from_axis_angle(Vec3::z(), yaw);
        let qy = Self::from_axis_angle(Vec3::y(), pitch);
        let qx = Self::from_axis_angle(Vec3::x(), roll);
        qz.mul(&qy).mul(&qx)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Rotates `v` with the sandwich product `q ⊗ (0, v) ⊗ q*`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let p = Quaternion::new(0.0, v.x, v.y, v.z);
        let r = self.mul(&p).mul(&self.conjugate());
        Vec3::new(r.x, r.y, r.z)
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|c| c.is_finite())
    }
}

pub fn quat_normalize(q: &Quaternion) -> Result<Quaternion, GeomError> {
    let n = q.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(GeomError::DegenerateQuaternion);
    }
    Ok(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

/// Orthonormal 3×3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMat(Matrix3<f64>);

impl RotMat {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` after checking `mᵀm = I` and `det m = 1` to within `tol`.
    pub fn try_from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self, GeomError> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > tol || (m.determinant() - 1.0).abs() > tol {
            return Err(GeomError::NotOrthonormal);
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn transform(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic angle between this rotation and the identity.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    /// Angle between the body z-axis and the world z-axis.
    pub fn tilt(&self) -> f64 {
        self.0[(2, 2)].clamp(-1.0, 1.0).acos()
    }
}

/// Rotation from body frame to world frame for a unit quaternion.
pub fn quat_to_rotmat(q: &Quaternion) -> Result<RotMat, GeomError> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(GeomError::NonUnitQuaternion(n));
    }
    Ok(quat_to_rotmat_unchecked(q))
}

pub(crate) fn quat_to_rotmat_unchecked(q: &Quaternion) -> RotMat {
    let Quaternion { w, x, y, z } = *q;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    RotMat(Matrix3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    ))
}

/// Inverse of [`quat_to_rotmat`] (Shepperd's method). Returns `w >= 0`.
pub fn rotmat_to_quat(r: &RotMat) -> Quaternion {
    let m = r.matrix();
    let tr = m.trace();
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        Quaternion::new(
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        )
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        Quaternion::new(
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        )
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        Quaternion::new(
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        Quaternion::new(
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let q = quat_normalize(&q).unwrap_or(Quaternion::IDENTITY);
    if q.w < 0.0 {
        Quaternion::new(-q.w, -q.x, -q.y, -q.z)
    } else {
        q
    }
}

/// First two columns of a rotation matrix, stacked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

pub fn rotmat_to_6d(r: &RotMat) -> Rot6D {
    let m = r.matrix();
    Rot6D([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ])
}

/// Gram–Schmidt reconstruction of the full rotation from its 6-D form.
pub fn rot6d_to_rotmat(r: &Rot6D) -> Result<RotMat, GeomError> {
    let a1 = Vec3::new(r.0[0], r.0[1], r.0[2]);
    let a2 = Vec3::new(r.0[3], r.0[4], r.0[5]);
    let b1 = a1
        .try_normalize(1e-12)
        .ok_or(GeomError::NotOrthonormal)?;
    let b2 = (a2 - b1 * b1.dot(&a2))
        .try_normalize(1e-12)
        .ok_or(GeomError::NotOrthonormal)?;
    let b3 = b1.cross(&b2);
    Ok(RotMat(Matrix3::from_columns(&[b1, b2, b3])))
}

/// `½ Λ(ω) q`: attitude rate for a body-frame angular velocity, i.e. `½ q ⊗ (0, ω)`.
pub fn quat_derivative(q: &Quaternion, omega_body: &Vec3) -> [f64; 4] {
    let d = q.mul(&Quaternion::new(0.0, omega_body.x, omega_body.y, omega_body.z));
    [0.5 * d.w, 0.5 * d.x, 0.5 * d.y, 0.5 * d.z]
}

/// Classic fourth-order Runge–Kutta step for `ẋ = f(x)`.
pub fn rk4_step<const N: usize, F>(f: F, state: &[f64; N], dt: f64) -> Result<[f64; N], GeomError>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    if !(dt > 0.0) {
        return Err(GeomError::InvalidStep(dt));
    }
    let eval = |x: &[f64; N]| {
        let d = f(x);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(GeomError::NonFiniteDerivative)
        }
    };
    let offset = |k: &[f64; N], h: f64| {
        let mut out = *state;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    };
    let k1 = eval(state)?;
    let k2 = eval(&offset(&k1, 0.5 * dt))?;
    let k3 = eval(&offset(&k2, 0.5 * dt))?;
    let k4 = eval(&offset(&k3, dt))?;
    let mut out = *state;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}
