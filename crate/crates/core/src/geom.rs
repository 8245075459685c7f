//! Rotation and rigid-transform algebra.
//!
//! Quaternions are stored in `(w, x, y, z)` order everywhere, including every
//! serialized form. Products are renormalized on construction so the unit
//! invariant never drifts.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeomError {
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("quaternion is zero or non-finite")]
    DegenerateQuaternion,
}

/// A 3-vector in meters, or dimensionless when used as a direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3::new(0.0, 0.0, 0.0);
    pub const X: Vector3 = Vector3::new(1.0, 0.0, 0.0);
    pub const Y: Vector3 = Vector3::new(0.0, 1.0, 0.0);
    pub const Z: Vector3 = Vector3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, other: &Vector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Vector3) -> Vector3 {
        Vector3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(&self) -> Option<Vector3> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn distance(&self, other: &Vector3) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Component-wise linear blend `a·(1−u) + b·u`, exact at both ends.
    pub fn lerp(a: &Vector3, b: &Vector3, u: f64) -> Vector3 {
        *a * (1.0 - u) + *b * u
    }
}

impl From<[f64; 3]> for Vector3 {
    fn from(a: [f64; 3]) -> Self {
        Vector3::new(a[0], a[1], a[2])
    }
}

impl From<Vector3> for [f64; 3] {
    fn from(v: Vector3) -> Self {
        v.to_array()
    }
}

impl Add for Vector3 {
    type Output = Vector3;
    fn add(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vector3 {
    fn add_assign(&mut self, rhs: Vector3) {
        *self = *self + rhs;
    }
}

impl Sub for Vector3 {
    type Output = Vector3;
    fn sub(self, rhs: Vector3) -> Vector3 {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vector3 {
    type Output = Vector3;
    fn mul(self, s: f64) -> Vector3 {
        Vector3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vector3 {
    type Output = Vector3;
    fn neg(self) -> Vector3 {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)` representing a rotation.
///
/// `q` and `-q` are the same rotation; nothing in this crate distinguishes
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
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

    /// Normalizes `(w, x, y, z)`. Input that is already unit to within a few
    /// ulps is kept bit-for-bit, so values survive serialization round-trips.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let n2 = w * w + x * x + y * y + z * z;
        if !n2.is_finite() || n2 < 1e-24 {
            return Err(GeomError::DegenerateQuaternion);
        }
        if (n2 - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self { w, x, y, z });
        }
        let inv = 1.0 / n2.sqrt();
        Ok(Self {
            w: w * inv,
            x: x * inv,
            y: y * inv,
            z: z * inv,
        })
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self, GeomError> {
        Self::new_normalize(a[0], a[1], a[2], a[3])
    }

    pub fn from_axis_angle(axis: &Vector3, angle: f64) -> Result<Self, GeomError> {
        let n = axis.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(GeomError::ZeroAxis);
        }
        if angle == 0.0 {
            return Ok(Self::IDENTITY);
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / n;
        Self::new_normalize(c, axis.x * k, axis.y * k, axis.z * k)
    }

    pub fn from_rot_x(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::unit_unchecked(c, s, 0.0, 0.0)
    }

    pub fn from_rot_y(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::unit_unchecked(c, 0.0, s, 0.0)
    }

    pub fn from_rot_z(angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        Self::unit_unchecked(c, 0.0, 0.0, s)
    }

    /// Exponential map of a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(v: &Vector3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            return Self::IDENTITY;
        }
        Self::from_axis_angle(v, angle).unwrap_or(Self::IDENTITY)
    }

    /// Shortest rotation taking direction `from` onto direction `to`.
    pub fn rotation_between(from: &Vector3, to: &Vector3) -> Option<Self> {
        let a = from.normalized()?;
        let b = to.normalized()?;
        let d = a.dot(&b);
        if d < -1.0 + 1e-12 {
            // antiparallel: any perpendicular axis works
            let helper = if a.x.abs() < 0.9 { Vector3::X } else { Vector3::Y };
            let axis = a.cross(&helper);
            return Self::from_axis_angle(&axis, std::f64::consts::PI).ok();
        }
        let c = a.cross(&b);
        Self::new_normalize(1.0 + d, c.x, c.y, c.z).ok()
    }

    fn unit_unchecked(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
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

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(&self) -> Vector3 {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Inverse rotation (the conjugate, for a unit quaternion).
    pub fn inverse(&self) -> Self {
        Self::unit_unchecked(self.w, -self.x, -self.y, -self.z)
    }

    /// The same rotation with all four components negated.
    pub fn negated(&self) -> Self {
        Self::unit_unchecked(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Hamilton product `self ∘ rhs`, renormalized.
    pub fn compose(&self, rhs: &UnitQuaternion) -> Self {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        Self::new_normalize(w, x, y, z).expect("product of unit quaternions is never degenerate")
    }

    pub fn rotate(&self, v: &Vector3) -> Vector3 {
        let u = self.vector_part();
        let t = u.cross(v) * 2.0;
        *v + t * self.w + u.cross(&t)
    }

    /// Row-major 3×3 rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Rotation angle in `[0, π]`, insensitive to the sign of `q`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector_part().norm().atan2(self.w.abs())
    }

    /// Geodesic angle between two orientations, in `[0, π]`.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        if self == other || *self == other.negated() {
            return 0.0;
        }
        self.inverse().compose(other).angle()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = GeomError;
    fn try_from(a: [f64; 4]) -> Result<Self, GeomError> {
        Self::from_array(a)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.compose(&rhs)
    }
}

/// Rotate `v` by `q`.
pub fn rotate_vector(q: &UnitQuaternion, v: &Vector3) -> Vector3 {
    q.rotate(v)
}

/// Rigid frame `F[R, p]`: rotation followed by translation, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    #[serde(rename = "q")]
    pub rotation: UnitQuaternion,
    #[serde(rename = "p")]
    pub translation: Vector3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: UnitQuaternion::IDENTITY,
        translation: Vector3::ZERO,
    };

    pub fn new(rotation: UnitQuaternion, translation: Vector3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_translation(t: Vector3) -> Self {
        Self::new(UnitQuaternion::IDENTITY, t)
    }

    pub fn from_rotation(r: UnitQuaternion) -> Self {
        Self::new(r, Vector3::ZERO)
    }

    /// `self · rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&rhs.rotation),
            translation: self.rotation.rotate(&rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3) -> Vector3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation.rotate(v)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

/// Mirror a pose across the x–y plane (right-handed ↔ left-handed frames).
///
/// Positions get `z ↦ −z`; rotations are conjugated by `diag(1, 1, −1)`, which
/// negates the quaternion's x and y components. Involutive and bit-exact.
pub fn handedness_convert(p: &Vector3, q: &UnitQuaternion) -> (Vector3, UnitQuaternion) {
    (
        Vector3::new(p.x, p.y, -p.z),
        UnitQuaternion::unit_unchecked(q.w, -q.x, -q.y, q.z),
    )
}
