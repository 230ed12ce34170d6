//! Trajectory and map quality metrics.

use std::collections::HashMap;

use nalgebra::Matrix3;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{angle_diff, normalize_angle, Point2, Point3};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectories share {pairs} associated samples, need at least 2")]
    InsufficientOverlap { pairs: usize },
    #[error("every map point has a degenerate neighbourhood")]
    NoValidPoints,
    #[error("trajectory timestamps must be strictly increasing (sample {index})")]
    NonMonotonic { index: usize },
    #[error("trajectory sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

impl TrajectorySample {
    pub fn new(timestamp: f64, x: f64, y: f64, z: f64, heading: f64) -> Self {
        Self { timestamp, x, y, z, heading }
    }

    pub fn planar(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Time-ordered poses; timestamps strictly increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, EvalError> {
        for (index, s) in samples.iter().enumerate() {
            let finite = [s.timestamp, s.x, s.y, s.z, s.heading].iter().all(|v| v.is_finite());
            if !finite {
                return Err(EvalError::NonFinite { index });
            }
            if index > 0 && !(s.timestamp > samples[index - 1].timestamp) {
                return Err(EvalError::NonMonotonic { index });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample if it is strictly newer than the last one.
    pub fn push(&mut self, s: TrajectorySample) -> bool {
        if self.samples.last().is_some_and(|l| !(s.timestamp > l.timestamp)) {
            return false;
        }
        self.samples.push(s);
        true
    }

    /// Linear interpolation at `t`, heading along the shorter arc. `None`
    /// outside the covered span.
    pub fn at(&self, t: f64) -> Option<TrajectorySample> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.timestamp || t > last.timestamp {
            return None;
        }
        let i = self.samples.partition_point(|s| s.timestamp < t);
        let b = self.samples[i];
        if b.timestamp == t || i == 0 {
            return Some(b);
        }
        let a = self.samples[i - 1];
        let u = (t - a.timestamp) / (b.timestamp - a.timestamp);
        let lerp = |p: f64, q: f64| p + (q - p) * u;
        Some(TrajectorySample {
            timestamp: t,
            x: lerp(a.x, b.x),
            y: lerp(a.y, b.y),
            z: lerp(a.z, b.z),
            heading: normalize_angle(a.heading + angle_diff(b.heading, a.heading) * u),
        })
    }

    /// Rigidly transforms every pose (rotation about the origin, then shift).
    pub fn transformed(&self, rotation: f64, shift: Point2) -> Trajectory {
        let (s, c) = rotation.sin_cos();
        let samples = self
            .samples
            .iter()
            .map(|p| TrajectorySample {
                x: c * p.x - s * p.y + shift.x,
                y: s * p.x + c * p.y + shift.y,
                heading: normalize_angle(p.heading + rotation),
                ..*p
            })
            .collect();
        Trajectory { samples }
    }
}

/// Estimate samples paired with truth interpolated at their timestamps.
fn associate(estimate: &Trajectory, truth: &Trajectory) -> Result<Vec<(TrajectorySample, TrajectorySample)>, EvalError> {
    let pairs: Vec<_> = estimate.samples.iter().filter_map(|e| truth.at(e.timestamp).map(|t| (*e, t))).collect();
    if pairs.len() < 2 {
        return Err(EvalError::InsufficientOverlap { pairs: pairs.len() });
    }
    Ok(pairs)
}

/// Least-squares rigid alignment `q ≈ R(θ) p + t` of paired planar points.
pub fn align_se2(pairs: &[(Point2, Point2)]) -> (f64, Point2) {
    let n = pairs.len() as f64;
    let (mut mp, mut mq) = (Point2::ORIGIN, Point2::ORIGIN);
    for (p, q) in pairs {
        mp = mp + *p;
        mq = mq + *q;
    }
    mp = mp * (1.0 / n);
    mq = mq * (1.0 / n);
    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, q) in pairs {
        let (a, b) = (*p - mp, *q - mq);
        dot += a.dot(b);
        cross += a.x * b.y - a.y * b.x;
    }
    let theta = if dot == 0.0 && cross == 0.0 { 0.0 } else { cross.atan2(dot) };
    let (s, c) = theta.sin_cos();
    let shift = mq - Point2::new(c * mp.x - s * mp.y, s * mp.x + c * mp.y);
    (theta, shift)
}

/// Position RMSE after rigid planar alignment of the estimate onto truth.
pub fn ate(estimate: &Trajectory, truth: &Trajectory) -> Result<f64, EvalError> {
    let pairs: Vec<(Point2, Point2)> =
        associate(estimate, truth)?.iter().map(|(e, t)| (e.planar(), t.planar())).collect();
    let (theta, shift) = align_se2(&pairs);
    let (s, c) = theta.sin_cos();
    let sq: f64 = pairs
        .iter()
        .map(|(p, q)| (Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift).distance_squared(*q))
        .sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// RMSE of wrapped absolute heading differences (no alignment).
pub fn heading_rmse(estimate: &Trajectory, truth: &Trajectory) -> Result<f64, EvalError> {
    let pairs = associate(estimate, truth)?;
    let sq: f64 = pairs.iter().map(|(e, t)| angle_diff(e.heading, t.heading).powi(2)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Planar distance between the first and last positions.
pub fn loop_drift(trajectory: &Trajectory) -> Option<f64> {
    if trajectory.len() < 2 {
        return None;
    }
    let (a, b) = (trajectory.samples[0], trajectory.samples[trajectory.len() - 1]);
    Some(a.planar().distance(b.planar()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmeReport {
    /// Mean differential entropy over contributing points (nats).
    pub entropy: f64,
    pub contributing: usize,
    pub skipped: usize,
}

/// Neighbourhoods smaller than this (including the query point) are skipped.
pub const MME_MIN_NEIGHBOURS: usize = 4;

/// Mean map entropy: per point, the entropy of the 3D sample covariance of
/// all map points within `radius`. Singular neighbourhoods are skipped.
pub fn mme(map: &[Point3], radius: f64) -> Result<MmeReport, EvalError> {
    if !(radius > 0.0) {
        return Err(EvalError::InvalidRadius(radius));
    }
    let key = |p: &Point3| [(p.x / radius).floor() as i64, (p.y / radius).floor() as i64, (p.z / radius).floor() as i64];
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    for (i, p) in map.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i as u32);
    }
    let r2 = radius * radius;
    let ln_2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let (mut sum, mut contributing, mut skipped) = (0.0, 0usize, 0usize);
    let mut hood: Vec<Point3> = Vec::new();
    for q in map {
        hood.clear();
        let k = key(q);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        hood.extend(ids.iter().map(|&j| map[j as usize]).filter(|p| p.distance_squared(*q) <= r2));
                    }
                }
            }
        }
        match log_det_covariance(&hood) {
            Some(ld) => {
                sum += 0.5 * (3.0 * ln_2pie + ld);
                contributing += 1;
            }
            None => skipped += 1,
        }
    }
    if contributing == 0 {
        return Err(EvalError::NoValidPoints);
    }
    Ok(MmeReport { entropy: sum / contributing as f64, contributing, skipped })
}

/// `ln det` of the unbiased sample covariance, or `None` when it is
/// (numerically) singular.
fn log_det_covariance(points: &[Point3]) -> Option<f64> {
    let n = points.len();
    if n < MME_MIN_NEIGHBOURS {
        return None;
    }
    let inv = 1.0 / n as f64;
    let mean = points.iter().fold([0.0; 3], |m, p| [m[0] + p.x * inv, m[1] + p.y * inv, m[2] + p.z * inv]);
    let mut c = Matrix3::<f64>::zeros();
    for p in points {
        let d = nalgebra::Vector3::new(p.x - mean[0], p.y - mean[1], p.z - mean[2]);
        c += d * d.transpose();
    }
    c /= (n - 1) as f64;
    let det = c.determinant();
    let scale = (c.trace() / 3.0).powi(3);
    if !(det > 1e-12 * scale) || !(det > 0.0) {
        return None;
    }
    Some(det.ln())
}
