//! Planar LIDAR model: ray casting against a world with noise, outliers,
//! dropouts, floor returns and self-returns.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use lidarloc_core::geometry::{Attitude, Point2, PolarPoint, PolarScan};

use crate::world::World;

#[derive(Debug, Error, PartialEq)]
pub enum SensorError {
    #[error("sensor parameter out of range: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Clean,
    Outlier,
    /// Ray produced no return (random dropout).
    Dropped,
    /// Return from the floor or from anything below `ground_label_height`.
    Ground,
    OutOfRange,
    /// Return from the vehicle's own frame.
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub rate: f64,
    pub points_per_scan: usize,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub outlier_probability: f64,
    pub dropout_probability: f64,
    /// Probability that a ray hits the vehicle frame first.
    pub close_probability: f64,
    /// Self-returns fall uniformly below this range (meters).
    pub close_range: f64,
    /// Returns whose true hit lies below this height are labelled ground.
    pub ground_label_height: f64,
    /// Rotates the first bearing by a random fraction of the ray spacing per scan.
    pub random_phase: bool,
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            rate: 5.0,
            points_per_scan: 180,
            max_range: 10.0,
            range_noise_sigma: 0.02,
            outlier_probability: 0.02,
            dropout_probability: 0.01,
            close_probability: 0.0,
            close_range: 0.395,
            ground_label_height: 0.2,
            random_phase: true,
            seed: 0,
        }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        Self {
            range_noise_sigma: 0.0,
            outlier_probability: 0.0,
            dropout_probability: 0.0,
            close_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let probs = [self.outlier_probability, self.dropout_probability, self.close_probability];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SensorError::InvalidParameter("probabilities must lie in [0, 1]"));
        }
        if !(self.rate > 0.0) {
            return Err(SensorError::InvalidParameter("rate must be positive"));
        }
        if self.points_per_scan == 0 || !(self.max_range > 0.0) || !(self.range_noise_sigma >= 0.0) {
            return Err(SensorError::InvalidParameter("need points, a positive range and a non-negative sigma"));
        }
        if !(self.close_range > 0.0) {
            return Err(SensorError::InvalidParameter("close_range must be positive"));
        }
        Ok(())
    }
}

/// Sensor pose: position (with height above the world origin) and attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: Point2,
    pub z: f64,
    pub attitude: Attitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaycastOutput {
    pub scan: PolarScan,
    /// One label per returned point, parallel to `scan.points`.
    pub labels: Vec<Label>,
    /// One label per cast ray.
    pub ray_labels: Vec<Label>,
}

/// First hit of a 3D ray from `origin` along unit `dir` within `max_range`:
/// (range, hit height, hit the floor).
pub fn trace(world: &World, origin: Vector3<f64>, dir: Vector3<f64>, max_range: f64) -> Option<(f64, f64, bool)> {
    let planar = Point2::new(dir.x, dir.y);
    let o2 = Point2::new(origin.x, origin.y);
    let mut best: Option<(f64, f64, bool)> = None;
    let mut consider = |s: f64, floor: bool| {
        let z = origin.z + s * dir.z;
        if s <= max_range && best.is_none_or(|b| s < b.0) {
            best = Some((s, z, floor));
        }
    };
    if planar.norm() > 1e-12 {
        for w in &world.walls {
            if let Some(s) = w.ray_hit(o2, planar) {
                let z = origin.z + s * dir.z;
                if world.floor.is_none_or(|f| z >= f) {
                    consider(s, false);
                }
            }
        }
        for c in &world.sections {
            for w in &c.segments {
                if let Some(s) = w.ray_hit(o2, planar) {
                    let z = origin.z + s * dir.z;
                    if (c.z_min..=c.z_max).contains(&z) {
                        consider(s, false);
                    }
                }
            }
        }
    }
    if let Some(f) = world.floor {
        if dir.z < -1e-12 && origin.z > f {
            consider((f - origin.z) / dir.z, true);
        }
    }
    best
}

/// Casts `points_per_scan` rays at uniform bearings in the tilted sensor
/// plane. Bearings are in the body frame; the attitude's yaw is the heading.
pub fn raycast<R: Rng>(world: &World, pose: &SensorPose, sensor: &SensorModel, rng: &mut R, timestamp: f64) -> RaycastOutput {
    let n = sensor.points_per_scan;
    let step = std::f64::consts::TAU / n as f64;
    let phase = if sensor.random_phase { rng.random::<f64>() * step } else { 0.0 };
    let rot = pose.attitude.rotation_matrix();
    let origin = Vector3::new(pose.position.x, pose.position.y, pose.z);
    let noise = (sensor.range_noise_sigma > 0.0).then(|| Normal::new(0.0, sensor.range_noise_sigma).expect("finite sigma"));
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut ray_labels = Vec::with_capacity(n);
    for i in 0..n {
        let bearing = -std::f64::consts::PI + phase + i as f64 * step;
        let dir = rot * Vector3::new(bearing.cos(), bearing.sin(), 0.0);
        // draw every random number unconditionally so streams stay aligned
        let u_drop: f64 = rng.random();
        let u_close: f64 = rng.random();
        let u_out: f64 = rng.random();
        let u_range: f64 = rng.random();
        let e = noise.map_or(0.0, |d| d.sample(rng));

        let (label, range) = if u_drop < sensor.dropout_probability {
            (Label::Dropped, None)
        } else if u_close < sensor.close_probability {
            (Label::Close, Some(u_range * sensor.close_range * 0.999))
        } else if u_out < sensor.outlier_probability {
            (Label::Outlier, Some(u_range * sensor.max_range))
        } else {
            match trace(world, origin, dir, sensor.max_range) {
                None => (Label::OutOfRange, None),
                Some((s, z, floor)) => {
                    let ground = floor || world.floor.is_some_and(|f| z - f < sensor.ground_label_height);
                    let r = (s + e).max(0.0);
                    (if ground { Label::Ground } else { Label::Clean }, Some(r))
                }
            }
        };
        ray_labels.push(label);
        if let Some(r) = range {
            points.push(PolarPoint::new(r, bearing));
            labels.push(label);
        }
    }
    RaycastOutput { scan: PolarScan::new(timestamp, points), labels, ray_labels }
}
