//! Planar and spatial primitives shared by every stage of the pipeline.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Signed smallest difference `a - b`, wrapped into `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn distance_squared(self, other: Point2) -> f64 {
        (self - other).norm_squared()
    }

    /// Polar coordinates of this point about `center`.
    pub fn to_polar_about(self, center: Point2) -> PolarPoint {
        let d = self - center;
        PolarPoint::new(d.norm(), d.y.atan2(d.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn distance_squared(self, other: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, other: Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A LIDAR return in the sensor's native polar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    /// Meters, finite and non-negative.
    pub range: f64,
    /// Radians in `[-pi, pi)`.
    pub bearing: f64,
}

impl PolarPoint {
    pub fn new(range: f64, bearing: f64) -> Self {
        debug_assert!(range.is_finite() && range >= 0.0, "invalid range {range}");
        Self {
            range,
            bearing: normalize_angle(bearing),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.range.is_finite() && self.range >= 0.0 && self.bearing.is_finite()
    }
}

pub fn polar_to_cartesian(p: PolarPoint) -> Point2 {
    let (s, c) = p.bearing.sin_cos();
    Point2::new(p.range * c, p.range * s)
}

pub fn cartesian_to_polar(p: Point2) -> PolarPoint {
    p.to_polar_about(Point2::ORIGIN)
}

/// Rigid planar motion: rotate by `rotation`, then translate by `(tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Transform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform2D {
    pub fn new(rotation: f64, tx: f64, ty: f64) -> Self {
        Self {
            rotation: normalize_angle(rotation),
            tx,
            ty,
        }
    }

    pub const fn identity() -> Self {
        Self {
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn from_pose(position: Point2, heading: f64) -> Self {
        Self::new(heading, position.x, position.y)
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.tx, self.ty)
    }

    pub fn apply_point(&self, p: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }

    pub fn apply(&self, points: &[Point2]) -> Vec<Point2> {
        points.iter().map(|&p| self.apply_point(p)).collect()
    }

    /// Rotates a vector without translating it.
    pub fn rotate_vector(&self, v: Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// `self ∘ other`: applying the result equals applying `other` first, then `self`.
    pub fn compose(&self, other: &Transform2D) -> Transform2D {
        let t = self.rotate_vector(other.translation());
        Transform2D::new(
            self.rotation + other.rotation,
            t.x + self.tx,
            t.y + self.ty,
        )
    }

    pub fn inverse(&self) -> Transform2D {
        let (s, c) = self.rotation.sin_cos();
        Transform2D::new(
            -self.rotation,
            -(c * self.tx + s * self.ty),
            -(-s * self.tx + c * self.ty),
        )
    }

    /// Homogeneous 3x3 matrix form.
    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.rotation.sin_cos();
        Matrix3::new(c, -s, self.tx, s, c, self.ty, 0.0, 0.0, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.tx.is_finite() && self.ty.is_finite()
    }
}

/// Vehicle attitude as roll/pitch/yaw Euler angles (Z-Y-X order).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll,
            pitch,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn level() -> Self {
        Self::default()
    }

    /// Body-to-world rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        )
    }
}

/// Raw scan as reported by the sensor, ordered by bearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarScan {
    pub timestamp: f64,
    pub points: Vec<PolarPoint>,
}

impl PolarScan {
    pub fn new(timestamp: f64, points: Vec<PolarPoint>) -> Self {
        Self { timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Filtered, attitude-projected scan. Planar matching reads `x` and `y`;
/// `z` is kept for ground filtering and map slicing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianScan {
    pub timestamp: f64,
    pub points: Vec<Point3>,
}

impl CartesianScan {
    pub fn new(timestamp: f64, points: Vec<Point3>) -> Self {
        Self { timestamp, points }
    }

    pub fn planar(&self) -> Vec<Point2> {
        self.points.iter().map(|p| p.planar()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
