//! Raw scan clean-up: close-point, ground, noise and external-point removal,
//! plus the attitude/altitude projection into a level frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Attitude, CartesianScan, Point2, Point3, PolarScan, Transform2D};
use crate::spatial::VoxelHash;

#[derive(Debug, Error, PartialEq)]
pub enum ProcessingError {
    #[error("no points survived scan processing at t={0}")]
    EmptyScan(f64),
    #[error("invalid processing context: {0}")]
    InvalidContext(&'static str),
}

/// Simple planar polygon; containment is closed (boundary points are inside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Option<Self> {
        if vertices.len() < 3 || vertices.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let poly = Self { vertices };
        (poly.signed_area().abs() > 1e-12).then_some(poly)
    }

    pub fn rectangle(min: Point2, max: Point2) -> Option<Self> {
        Self::new(vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let ab = b - a;
    let ap = p - a;
    let cross = ab.x * ap.y - ab.y * ap.x;
    let len = ab.norm().max(1e-300);
    if (cross / len).abs() > 1e-9 {
        return false;
    }
    let t = ap.dot(ab) / (len * len);
    (-1e-12..=1.0 + 1e-12).contains(&t)
}

/// Per-scan inputs to [`process`]. Rebuilt from the latest state estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingContext {
    pub uav_radius: f64,
    /// `f64::NEG_INFINITY` disables ground removal.
    pub ground_threshold: f64,
    pub altitude: f64,
    pub attitude: Attitude,
    /// `None` disables external-point removal.
    pub flight_area: Option<Polygon>,
    pub last_position: Point2,
    /// Heading used to place points in the world frame for the flight-area test.
    pub last_heading: f64,
    pub noise_filter: bool,
    pub noise_radius: f64,
    pub noise_min_neighbors: usize,
}

impl Default for ProcessingContext {
    fn default() -> Self {
        Self {
            uav_radius: 0.395,
            ground_threshold: 0.2,
            altitude: 0.0,
            attitude: Attitude::level(),
            flight_area: None,
            last_position: Point2::ORIGIN,
            last_heading: 0.0,
            noise_filter: true,
            noise_radius: 0.5,
            noise_min_neighbors: 2,
        }
    }
}

impl ProcessingContext {
    pub fn validate(&self) -> Result<(), ProcessingError> {
        if !(self.uav_radius > 0.0) {
            return Err(ProcessingError::InvalidContext("uav_radius must be positive"));
        }
        if !(self.noise_radius > 0.0) {
            return Err(ProcessingError::InvalidContext("noise_radius must be positive"));
        }
        if self.noise_min_neighbors < 1 {
            return Err(ProcessingError::InvalidContext("noise_min_neighbors must be at least 1"));
        }
        if self.ground_threshold.is_nan() || !self.altitude.is_finite() {
            return Err(ProcessingError::InvalidContext("non-finite altitude or ground threshold"));
        }
        Ok(())
    }
}

pub fn remove_close(scan: &PolarScan, uav_radius: f64) -> PolarScan {
    PolarScan::new(
        scan.timestamp,
        scan.points.iter().copied().filter(|p| p.range >= uav_radius).collect(),
    )
}

/// Lifts each return onto the tilted sensor plane (yaw left at zero) and
/// raises it by the altitude estimate.
pub fn project_by_attitude(scan: &PolarScan, attitude: Attitude, altitude: f64) -> Vec<Point3> {
    let rot = Attitude::new(attitude.roll, attitude.pitch, 0.0).rotation_matrix();
    scan.points
        .iter()
        .map(|p| {
            let (s, c) = p.bearing.sin_cos();
            let v = rot * Vector3::new(p.range * c, p.range * s, 0.0);
            Point3::new(v.x, v.y, v.z + altitude)
        })
        .collect()
}

pub fn remove_ground(points: &[Point3], ground_threshold: f64) -> Vec<Point3> {
    points.iter().copied().filter(|p| p.z >= ground_threshold).collect()
}

/// Keeps points with at least `min_neighbors` other points within `radius`,
/// counted on the input set.
pub fn remove_noise(points: &[Point3], radius: f64, min_neighbors: usize) -> Vec<Point3> {
    noise_survivors(points, radius, min_neighbors)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

fn noise_survivors(points: &[Point3], radius: f64, min_neighbors: usize) -> Vec<usize> {
    let index = VoxelHash::new(points, radius);
    (0..points.len())
        .filter(|&i| index.within(points, points[i], radius).len() > min_neighbors)
        .collect()
}

/// Keeps points whose world-frame position (placed relative to the last pose)
/// lies inside `area`.
pub fn remove_external(points: &[Point3], area: &Polygon, last_position: Point2, last_heading: f64) -> Vec<Point3> {
    external_survivors(points, area, last_position, last_heading)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

fn external_survivors(points: &[Point3], area: &Polygon, last_position: Point2, last_heading: f64) -> Vec<usize> {
    let pose = Transform2D::from_pose(last_position, last_heading);
    (0..points.len())
        .filter(|&i| area.contains(pose.apply_point(points[i].planar())))
        .collect()
}

/// Full processing chain; returns the surviving points and their indices into
/// the raw scan.
pub fn process_indexed(
    scan: &PolarScan,
    ctx: &ProcessingContext,
) -> Result<(CartesianScan, Vec<usize>), ProcessingError> {
    ctx.validate()?;
    let mut kept: Vec<usize> = (0..scan.points.len())
        .filter(|&i| scan.points[i].range >= ctx.uav_radius)
        .collect();
    let close_free = PolarScan::new(scan.timestamp, kept.iter().map(|&i| scan.points[i]).collect());
    let mut points = project_by_attitude(&close_free, ctx.attitude, ctx.altitude);

    let retain = |points: &mut Vec<Point3>, kept: &mut Vec<usize>, survivors: Vec<usize>| {
        *points = survivors.iter().map(|&i| points[i]).collect();
        *kept = survivors.iter().map(|&i| kept[i]).collect();
    };

    let ground: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].z >= ctx.ground_threshold)
        .collect();
    retain(&mut points, &mut kept, ground);

    if ctx.noise_filter {
        let s = noise_survivors(&points, ctx.noise_radius, ctx.noise_min_neighbors);
        retain(&mut points, &mut kept, s);
    }
    if let Some(area) = &ctx.flight_area {
        let s = external_survivors(&points, area, ctx.last_position, ctx.last_heading);
        retain(&mut points, &mut kept, s);
    }
    if points.is_empty() {
        return Err(ProcessingError::EmptyScan(scan.timestamp));
    }
    Ok((CartesianScan::new(scan.timestamp, points), kept))
}

pub fn process(scan: &PolarScan, ctx: &ProcessingContext) -> Result<CartesianScan, ProcessingError> {
    process_indexed(scan, ctx).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{polar_to_cartesian, PolarPoint};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn scan(points: &[(f64, f64)]) -> PolarScan {
        PolarScan::new(1.0, points.iter().map(|&(r, b)| PolarPoint::new(r, b)).collect())
    }

    /// Explicit Ry(pitch) * Rx(roll) built from elementary matrices.
    fn rotation_oracle(roll: f64, pitch: f64, v: [f64; 3]) -> [f64; 3] {
        let rx = [[1.0, 0.0, 0.0], [0.0, roll.cos(), -roll.sin()], [0.0, roll.sin(), roll.cos()]];
        let ry = [[pitch.cos(), 0.0, pitch.sin()], [0.0, 1.0, 0.0], [-pitch.sin(), 0.0, pitch.cos()]];
        let mul = |m: [[f64; 3]; 3], v: [f64; 3]| {
            [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
        };
        mul(ry, mul(rx, v))
    }

    pub(crate) fn brute_noise(points: &[Point3], radius: f64, min_neighbors: usize) -> Vec<Point3> {
        points
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                points
                    .iter()
                    .enumerate()
                    .filter(|(j, q)| j != i && p.distance(**q) <= radius)
                    .count()
                    >= min_neighbors
            })
            .map(|(_, p)| *p)
            .collect()
    }

    #[test]
    fn close_points() {
        let s = scan(&[(0.30, 0.0), (0.50, 1.0)]);
        let out = remove_close(&s, 0.395);
        assert_eq!(out.points, vec![PolarPoint::new(0.50, 1.0)]);
        assert!(remove_close(&scan(&[]), 0.395).is_empty());
        let s = scan(&[(0.1, 0.0), (3.0, -1.0), (0.5, 2.0)]);
        assert_eq!(remove_close(&s, 0.1), s);
    }

    #[test]
    fn attitude_projection() {
        let s = scan(&[(2.0, 0.0)]);
        let p = project_by_attitude(&s, Attitude::level(), 1.0)[0];
        assert_abs_diff_eq!(p.x, 2.0);
        assert_abs_diff_eq!(p.y, 0.0);
        assert_abs_diff_eq!(p.z, 1.0);

        let p = project_by_attitude(&s, Attitude::new(0.0, PI / 6.0, 0.0), 1.0)[0];
        let o = rotation_oracle(0.0, PI / 6.0, [2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(p.x, o[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 1.0 + o[2], epsilon = 1e-12);
        assert_abs_diff_eq!(p.x, 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);

        let p = project_by_attitude(&s, Attitude::new(PI / 6.0, 0.0, 0.0), 1.0)[0];
        assert_abs_diff_eq!(p.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 1.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (roll, pitch) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let (r, b) = (rng.random_range(0.0..20.0), rng.random_range(-PI..PI));
            let p = project_by_attitude(&scan(&[(r, b)]), Attitude::new(roll, pitch, 1.3), 0.7)[0];
            let o = rotation_oracle(roll, pitch, [r * b.cos(), r * b.sin(), 0.0]);
            assert_abs_diff_eq!(p.x, o[0], epsilon = 1e-9);
            assert_abs_diff_eq!(p.y, o[1], epsilon = 1e-9);
            assert_abs_diff_eq!(p.z, o[2] + 0.7, epsilon = 1e-9);
        }
    }

    #[test]
    fn ground_filter() {
        let pts = vec![Point3::new(0.0, 0.0, 0.1), Point3::new(1.0, 0.0, 0.3)];
        assert_eq!(remove_ground(&pts, 0.2), vec![pts[1]]);
        assert_eq!(remove_ground(&pts, f64::NEG_INFINITY), pts);
        let slope: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.01 * i as f64)).collect();
        assert!(remove_ground(&slope, 0.2).is_empty());
    }

    #[test]
    fn noise_filter() {
        let p = Point3::new(1.0, 1.0, 1.0);
        assert_eq!(remove_noise(&[p, p, p], 0.5, 2).len(), 3);
        let mut pts: Vec<Point3> = (0..10).map(|i| Point3::new(0.1 * i as f64, 0.0, 0.0)).collect();
        pts.push(Point3::new(50.0, 50.0, 0.0));
        let out = remove_noise(&pts, 0.5, 2);
        assert_eq!(out.len(), 10);
        assert!(!out.contains(&Point3::new(50.0, 50.0, 0.0)));
    }

    #[test]
    fn noise_filter_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [0, 1, 2, 5, 100, 250] {
            let pts: Vec<Point3> = (0..n)
                .map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..0.4)))
                .collect();
            for (radius, k) in [(0.5, 2), (0.3, 1), (1.0, 4)] {
                assert_eq!(remove_noise(&pts, radius, k), brute_noise(&pts, radius, k));
            }
        }
    }

    #[test]
    fn external_filter() {
        let square = Polygon::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        let pts = vec![Point3::new(0.5, 0.5, 0.0), Point3::new(5.0, 5.0, 0.0), Point3::new(1.0, 0.5, 0.0)];
        let out = remove_external(&pts, &square, Point2::ORIGIN, 0.0);
        assert_eq!(out, vec![pts[0], pts[2]]);
        let huge = Polygon::rectangle(Point2::new(-1e9, -1e9), Point2::new(1e9, 1e9)).unwrap();
        assert_eq!(remove_external(&pts, &huge, Point2::ORIGIN, 0.0), pts);
        // placed relative to the last pose
        let out = remove_external(&[Point3::new(0.5, 0.0, 0.0)], &square, Point2::new(0.0, 0.5), 0.0);
        assert_eq!(out.len(), 1);
        let out = remove_external(&[Point3::new(0.5, 0.0, 0.0)], &square, Point2::new(0.0, 0.5), PI);
        assert!(out.is_empty());
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert!(Polygon::new(vec![Point2::ORIGIN, Point2::new(1.0, 0.0)]).is_none());
        assert!(Polygon::new(vec![Point2::ORIGIN, Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)]).is_none());
    }

    #[test]
    fn process_all_close_is_empty() {
        let s = scan(&[(0.1, 0.0), (0.2, 1.0)]);
        assert_eq!(process(&s, &ProcessingContext::default()), Err(ProcessingError::EmptyScan(1.0)));
    }

    #[test]
    fn process_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<(f64, f64)> = (0..180)
            .map(|i| (rng.random_range(1.0..8.0), -PI + (i as f64 + 0.5) * 2.0 * PI / 180.0))
            .collect();
        let s = scan(&raw);
        let ctx = ProcessingContext {
            uav_radius: 1e-6,
            ground_threshold: f64::NEG_INFINITY,
            noise_filter: false,
            ..Default::default()
        };
        let out = process(&s, &ctx).unwrap();
        assert_eq!(out.len(), raw.len());
        for (p, q) in out.points.iter().zip(&s.points) {
            let c = polar_to_cartesian(*q);
            assert!((p.x - c.x).abs() <= 1e-9 && (p.y - c.y).abs() <= 1e-9 && p.z.abs() <= 1e-9);
        }
    }

    #[test]
    fn filters_are_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Point3> = (0..200)
            .map(|_| Point3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-0.2..0.6)))
            .collect();
        let g = remove_ground(&pts, 0.2);
        assert_eq!(remove_ground(&g, 0.2), g);
        let area = Polygon::rectangle(Point2::new(-2.0, -2.0), Point2::new(3.0, 2.0)).unwrap();
        let e = remove_external(&pts, &area, Point2::ORIGIN, 0.0);
        assert_eq!(remove_external(&e, &area, Point2::ORIGIN, 0.0), e);
        let s = scan(&[(0.2, 0.0), (0.5, 1.0), (3.0, 2.0)]);
        let c = remove_close(&s, 0.395);
        assert_eq!(remove_close(&c, 0.395), c);
    }

    #[test]
    fn process_output_is_subset_of_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<(f64, f64)> = (0..150).map(|_| (rng.random_range(0.0..6.0), rng.random_range(-PI..PI))).collect();
        let mut s = scan(&raw);
        s.points.sort_by(|a, b| a.bearing.total_cmp(&b.bearing));
        let ctx = ProcessingContext {
            altitude: 1.0,
            attitude: Attitude::new(0.1, -0.2, 0.0),
            flight_area: Polygon::rectangle(Point2::new(-3.0, -3.0), Point2::new(3.0, 3.0)),
            ..Default::default()
        };
        let (out, idx) = process_indexed(&s, &ctx).unwrap();
        let projected = project_by_attitude(&s, ctx.attitude, ctx.altitude);
        for (p, i) in out.points.iter().zip(idx) {
            assert_eq!(*p, projected[i]);
        }
    }
}
