//! Piecewise-linear waypoint trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lidarloc_core::geometry::{normalize_angle, Attitude, Point2};

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("need at least two waypoints")]
    TooFewWaypoints,
    #[error("waypoint times must strictly increase (waypoint {0})")]
    NonIncreasingTime(usize),
    #[error("waypoint {0} is not finite")]
    NonFinite(usize),
    #[error("time {t} outside [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Heading, unwrapped: interpolation is linear in this value.
    pub heading: f64,
    pub time: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, z: f64, heading: f64, time: f64) -> Self {
        Self { x, y, z, heading, time }
    }
}

/// Roll/pitch as sinusoids of time; zero amplitude is level flight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TiltModel {
    pub roll_amplitude: f64,
    pub pitch_amplitude: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub tilt: TiltModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueState {
    pub time: f64,
    pub position: Point2,
    pub z: f64,
    /// Normalized heading.
    pub heading: f64,
    pub velocity: [f64; 3],
    pub heading_rate: f64,
    /// Zero between waypoints; the velocity changes at waypoints are impulses.
    pub acceleration: [f64; 3],
    pub attitude: Attitude,
}

impl TrajectorySpec {
    pub fn new(waypoints: Vec<Waypoint>, tilt: TiltModel) -> Result<Self, TrajectoryError> {
        let s = Self { waypoints, tilt };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.waypoints.len() < 2 {
            return Err(TrajectoryError::TooFewWaypoints);
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if ![w.x, w.y, w.z, w.heading, w.time].iter().all(|v| v.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 && !(w.time > self.waypoints[i - 1].time) {
                return Err(TrajectoryError::NonIncreasingTime(i));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.waypoints[0].time
    }

    pub fn end(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time
    }

    pub fn sample(&self, t: f64) -> Result<TrueState, TrajectoryError> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(TrajectoryError::OutOfSpan { t, start, end });
        }
        // leg i spans [w_i, w_{i+1}); the final instant belongs to the last leg
        let i = self.waypoints.partition_point(|w| w.time <= t).clamp(1, self.waypoints.len() - 1) - 1;
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let dt = b.time - a.time;
        let u = (t - a.time) / dt;
        let lerp = |p: f64, q: f64| p + (q - p) * u;
        let roll_pitch = if self.tilt.period > 0.0 {
            let ph = std::f64::consts::TAU * t / self.tilt.period;
            (self.tilt.roll_amplitude * ph.sin(), self.tilt.pitch_amplitude * (0.7 * ph).cos())
        } else {
            (0.0, 0.0)
        };
        let heading = normalize_angle(lerp(a.heading, b.heading));
        Ok(TrueState {
            time: t,
            position: Point2::new(lerp(a.x, b.x), lerp(a.y, b.y)),
            z: lerp(a.z, b.z),
            heading,
            velocity: [(b.x - a.x) / dt, (b.y - a.y) / dt, (b.z - a.z) / dt],
            heading_rate: (b.heading - a.heading) / dt,
            acceleration: [0.0; 3],
            attitude: Attitude::new(roll_pitch.0, roll_pitch.1, heading),
        })
    }

    /// Rectangular loop at constant height: legs along the rectangle edges
    /// with the heading following the direction of travel, an in-place
    /// quarter turn at each corner, and a final hover at the start.
    pub fn rectangle_loop(center: Point2, half: Point2, z: f64, duration: f64) -> Self {
        let turn = 0.04 * duration;
        let hover = 0.04 * duration;
        let travel = duration - 4.0 * turn - hover;
        let (lx, ly) = (2.0 * half.x, 2.0 * half.y);
        let speed = travel / (2.0 * (lx + ly));
        let corners = [
            (center.x - half.x, center.y - half.y),
            (center.x + half.x, center.y - half.y),
            (center.x + half.x, center.y + half.y),
            (center.x - half.x, center.y + half.y),
        ];
        let lengths = [lx, ly, lx, ly];
        let mut wps = vec![Waypoint::new(corners[0].0, corners[0].1, z, 0.0, 0.0)];
        let mut t = 0.0;
        let mut heading = 0.0;
        for k in 0..4 {
            let next = corners[(k + 1) % 4];
            t += lengths[k] * speed;
            wps.push(Waypoint::new(next.0, next.1, z, heading, t));
            heading += std::f64::consts::FRAC_PI_2;
            t += turn;
            wps.push(Waypoint::new(next.0, next.1, z, heading, t));
        }
        wps.push(Waypoint::new(corners[0].0, corners[0].1, z, heading, duration));
        debug_assert!((t + hover - duration).abs() < 1e-9);
        Self { waypoints: wps, tilt: TiltModel::default() }
    }

    /// Stationary hover.
    pub fn hover(position: Point2, z: f64, heading: f64, duration: f64) -> Self {
        Self {
            waypoints: vec![
                Waypoint::new(position.x, position.y, z, heading, 0.0),
                Waypoint::new(position.x, position.y, z, heading, duration),
            ],
            tilt: TiltModel::default(),
        }
    }
}
