//! Rotation and rigid-transform algebra.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and kept in canonical form
//! (`w >= 0`, ties broken on the first non-zero vector component) so that
//! the double cover never leaks into equality checks, regression targets or
//! serialized files.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unit quaternion representing an element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes and canonicalizes raw components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self::from_raw(w / norm, x / norm, y / norm, z / norm))
    }

    fn from_raw(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion { w, x, y, z };
        let n2 = w * w + x * x + y * y + z * z;
        // Renormalize away accumulated drift.
        let q = if (n2 - 1.0).abs() > 1e-14 {
            let n = n2.sqrt();
            UnitQuaternion {
                w: w / n,
                x: x / n,
                y: y / n,
                z: z / n,
            }
        } else {
            q
        };
        q.canonicalize()
    }

    pub fn from_wxyz(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Representative of `{q, -q}` with `w >= 0`.
    pub fn canonicalize(self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            UnitQuaternion {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::from_raw(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map from a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }
    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }
    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }

    /// Unit axis and angle in `[0, pi]`; the axis is `x` for the identity.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        let v = Vec3::new(self.x, self.y, self.z);
        let n = v.norm();
        if n < 1e-300 {
            return (Vec3::x(), 0.0);
        }
        let sign = if self.w < 0.0 { -1.0 } else { 1.0 };
        (v * (sign / n), 2.0 * n.atan2(self.w.abs()))
    }

    /// Logarithm map: axis times angle.
    pub fn rotation_vector(&self) -> Vec3 {
        let (axis, angle) = self.axis_angle();
        axis * angle
    }

    pub fn inverse(&self) -> Self {
        Self::from_raw(self.w, -self.x, -self.y, -self.z)
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let (a, b) = (self, other);
        Self::from_raw(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::new(w, x, y, z).unwrap_or(Self::IDENTITY)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Sign-invariant approximate equality.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        geodesic_angle(self, other) <= tol
    }
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.compose(&rhs)
    }
}

impl Mul<Vec3> for UnitQuaternion {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.apply(&rhs)
    }
}

impl Serialize for UnitQuaternion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.wxyz().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        UnitQuaternion::from_wxyz(c).map_err(serde::de::Error::custom)
    }
}

/// Geodesic distance on SO(3), in radians within `[0, pi]`.
///
/// Equal to `2 acos(|<a, b>|)`; evaluated through `atan2` on the relative
/// rotation, which stays accurate for small angles.
pub fn geodesic_angle(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    b.compose(&a.inverse()).angle()
}

/// Geodesic interpolation from `from` (at `eta = 0`) to `to` (at `eta = 1`)
/// along the shorter arc.
pub fn slerp(from: &UnitQuaternion, to: &UnitQuaternion, eta: f64) -> UnitQuaternion {
    // `to * from^-1` is canonical, hence already the short way round.
    let rel = to.compose(&from.inverse());
    let (axis, angle) = rel.axis_angle();
    if angle == 0.0 {
        return *from;
    }
    UnitQuaternion::from_axis_angle(&axis, eta * angle).compose(from)
}

/// Uniform sample from SO(3) using Shoemake's subgroup algorithm.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    UnitQuaternion::from_raw(b * c3, a * s2, a * c2, b * s3)
}

/// Uniformly distributed unit vector.
pub fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(v[0], v[1], v[2])
}

/// Rotation about a uniformly random axis with angle uniform in
/// `[0, max_angle)`. `max_angle == 0` yields the identity.
pub fn sample_bounded<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Result<UnitQuaternion> {
    if !max_angle.is_finite() || !(0.0..=PI).contains(&max_angle) {
        return Err(Error::InvalidArgument(format!(
            "max_angle must lie in [0, pi], got {max_angle}"
        )));
    }
    if max_angle == 0.0 {
        return Ok(UnitQuaternion::IDENTITY);
    }
    let axis = random_axis(rng);
    let angle = rng.random::<f64>() * max_angle;
    Ok(UnitQuaternion::from_axis_angle(&axis, angle))
}

/// Rotation with exactly `angle` radians about a uniformly random axis.
pub fn sample_with_angle<R: Rng + ?Sized>(rng: &mut R, angle: f64) -> UnitQuaternion {
    UnitQuaternion::from_axis_angle(&random_axis(rng), angle)
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(UnitQuaternion::IDENTITY, Vec3::zeros())
    }

    pub fn from_rotation(rotation: UnitQuaternion) -> Self {
        Pose::new(rotation, Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose::new(UnitQuaternion::IDENTITY, translation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation.compose(&other.rotation),
            self.rotation.apply(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose::new(r, -r.apply(&self.translation))
    }

    /// Pre-rotates by `rotation` about the world-frame point `center`.
    pub fn rotated_about(&self, rotation: &UnitQuaternion, center: &Vec3) -> Pose {
        Pose::new(
            rotation.compose(&self.rotation),
            rotation.apply(&(self.translation - center)) + center,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|c| c.is_finite())
    }
}

pub fn deg(radians: f64) -> f64 {
    radians.to_degrees()
}

pub fn rad(degrees: f64) -> f64 {
    degrees.to_radians()
}
