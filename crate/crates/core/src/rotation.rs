//! Attitude algebra: quaternions, Modified Rodrigues Parameters and
//! direction-cosine matrices.
//!
//! Convention: an attitude quaternion describes the inertial-to-body frame
//! transformation. [`quat_rotate`] and [`Dcm::from_quaternion`] both map
//! inertial-frame components of a vector into body-frame components, so a
//! 90 deg rotation about +Z takes `(1, 0, 0)` to `(0, -1, 0)`.
//!
//! Angles at the public boundary are degrees.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    /// Frame rotation by `angle_rad` about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle_rad: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle_rad == 0.0 {
            return Self::IDENTITY;
        }
        let e = axis / n;
        let (s, c) = (0.5 * angle_rad).sin_cos();
        Self::new(e.x * s, e.y * s, e.z * s, c)
    }

    /// Rotation vector (axis times angle, radians).
    pub fn from_rotation_vector(rv: &Vec3) -> Self {
        Self::from_axis_angle(rv, rv.norm())
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|c| c.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid(format!("cannot normalize quaternion with norm {n}")));
        }
        Ok(Self::new(self.x / n, self.y / n, self.z / n, self.w / n))
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z, -self.w)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z, self.w)
    }

    /// Representative with non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    /// Hamilton product `self * rhs`.
    pub fn hamilton(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    /// Attitude obtained by applying `self` first and `next` second, so that
    /// `Dcm(self.then(next)) = Dcm(next) * Dcm(self)`.
    pub fn then(&self, next: &Quaternion) -> Self {
        self.hamilton(next)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }
}

/// Modified Rodrigues Parameters, `sigma = e * tan(theta / 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mrp {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl Mrp {
    pub const ZERO: Mrp = Mrp { s1: 0.0, s2: 0.0, s3: 0.0 };

    pub const fn new(s1: f64, s2: f64, s3: f64) -> Self {
        Self { s1, s2, s3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }

    pub fn norm_squared(&self) -> f64 {
        self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3
    }

    pub fn is_finite(&self) -> bool {
        self.s1.is_finite() && self.s2.is_finite() && self.s3.is_finite()
    }

    /// Quaternion without the finiteness check of [`mrp_to_quat`].
    pub(crate) fn to_quat_unchecked(self) -> Quaternion {
        let s2 = self.norm_squared();
        let d = 1.0 + s2;
        Quaternion::new(
            2.0 * self.s1 / d,
            2.0 * self.s2 / d,
            2.0 * self.s3 / d,
            (1.0 - s2) / d,
        )
    }
}

/// Inertial-to-body rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm(pub Matrix3<f64>);

impl Dcm {
    pub fn identity() -> Self {
        Dcm(Matrix3::identity())
    }

    pub fn from_quaternion(q: &Quaternion) -> Self {
        let (x, y, z, w) = (q.x, q.y, q.z, q.w);
        let s = w * w - x * x - y * y - z * z;
        Dcm(Matrix3::new(
            s + 2.0 * x * x,
            2.0 * (x * y + w * z),
            2.0 * (x * z - w * y),
            2.0 * (x * y - w * z),
            s + 2.0 * y * y,
            2.0 * (y * z + w * x),
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            s + 2.0 * z * z,
        ))
    }

    /// Shepperd's method; result is canonical (w >= 0).
    pub fn to_quaternion(&self) -> Quaternion {
        let m = &self.0;
        let tr = m.trace();
        let cands = [tr, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        let (imax, _) = cands
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let q = match imax {
            0 => {
                let w = 0.5 * (1.0 + tr).sqrt();
                let f = 0.25 / w;
                Quaternion::new(
                    (m[(1, 2)] - m[(2, 1)]) * f,
                    (m[(2, 0)] - m[(0, 2)]) * f,
                    (m[(0, 1)] - m[(1, 0)]) * f,
                    w,
                )
            }
            1 => {
                let x = 0.5 * (1.0 + 2.0 * m[(0, 0)] - tr).sqrt();
                let f = 0.25 / x;
                Quaternion::new(
                    x,
                    (m[(0, 1)] + m[(1, 0)]) * f,
                    (m[(0, 2)] + m[(2, 0)]) * f,
                    (m[(1, 2)] - m[(2, 1)]) * f,
                )
            }
            2 => {
                let y = 0.5 * (1.0 + 2.0 * m[(1, 1)] - tr).sqrt();
                let f = 0.25 / y;
                Quaternion::new(
                    (m[(0, 1)] + m[(1, 0)]) * f,
                    y,
                    (m[(1, 2)] + m[(2, 1)]) * f,
                    (m[(2, 0)] - m[(0, 2)]) * f,
                )
            }
            _ => {
                let z = 0.5 * (1.0 + 2.0 * m[(2, 2)] - tr).sqrt();
                let f = 0.25 / z;
                Quaternion::new(
                    (m[(0, 2)] + m[(2, 0)]) * f,
                    (m[(1, 2)] + m[(2, 1)]) * f,
                    z,
                    (m[(0, 1)] - m[(1, 0)]) * f,
                )
            }
        };
        q.canonical()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn transpose(&self) -> Self {
        Dcm(self.0.transpose())
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Largest absolute entry of `M^T M - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }
}

pub fn quat_to_mrp(q: &Quaternion) -> Result<Mrp> {
    if !q.is_finite() {
        return Err(invalid(format!("non-finite quaternion {q:?}")));
    }
    let c = q.canonical();
    let d = 1.0 + c.w;
    Ok(Mrp::new(c.x / d, c.y / d, c.z / d))
}

pub fn mrp_to_quat(m: &Mrp) -> Result<Quaternion> {
    if !m.is_finite() {
        return Err(invalid(format!("non-finite MRP {m:?}")));
    }
    Ok(m.to_quat_unchecked())
}

/// Relative rotation angle between two unit quaternions, radians in `[0, pi]`.
///
/// Equal to `2 acos(|<a, b>|)`; evaluated through the relative quaternion so
/// that angles near zero keep full precision.
pub fn quat_angle_rad(a: &Quaternion, b: &Quaternion) -> f64 {
    // Vector part of conj(a) * b, written so that it vanishes exactly for
    // b = a and b = -a and flips sign exactly when a and b are swapped.
    let (va, vb) = (a.vector(), b.vector());
    let v = (a.w * vb - b.w * va) - va.cross(&vb);
    let c = a.w * b.w + va.dot(&vb);
    2.0 * v.norm().atan2(c.abs())
}

/// Rotation angle between two MRP attitudes, degrees.
pub fn rotation_angle(a: &Mrp, b: &Mrp) -> f64 {
    quat_angle_rad(&a.to_quat_unchecked(), &b.to_quat_unchecked()).to_degrees()
}

/// RMS of the pairwise rotation angles, degrees.
pub fn rms_rotation_angle(a: &[Mrp], b: &[Mrp]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(invalid("empty attitude sequence"));
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| rotation_angle(x, y).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Inertial-frame vector expressed in the body frame of attitude `q`.
pub fn quat_rotate(q: &Quaternion, v: &Vec3) -> Vec3 {
    let p = Quaternion::new(v.x, v.y, v.z, 0.0);
    q.conjugate().hamilton(&p).hamilton(q).vector()
}

/// Angle between two non-zero vectors, degrees.
pub fn vector_angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}
