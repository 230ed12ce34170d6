//! Sequential matching of consecutive scans into velocity measurements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CartesianScan, Point2, Transform2D};
use crate::matching::{match_scans, MatchError, MatchParams, MatchResult, ReferenceCloud, Termination};

#[derive(Debug, Error, PartialEq)]
pub enum OdometryError {
    #[error("scan interval must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("sequential match failed: {0}")]
    MatchFailed(#[from] MatchError),
    #[error("sequential match rejected: quality {quality:.4} above gate {gate:.4}")]
    QualityGate { quality: f64, gate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryParams {
    /// Matches whose quality exceeds this are discarded (meters); off by default.
    pub quality_gate: Option<f64>,
}

/// Velocity over one scan interval, expressed in the previous scan's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityMeasurement {
    pub timestamp: f64,
    pub dt: f64,
    pub linear: Point2,
    pub angular: f64,
    /// Final FRMSD of the producing match.
    pub quality: f64,
    /// Current scan expressed in the previous scan's frame.
    pub transform: Transform2D,
    pub iterations: usize,
    pub termination: Termination,
}

/// Converts an inter-scan transform into velocities.
pub fn velocity_from_transform(t: &Transform2D, dt: f64) -> (Point2, f64) {
    (t.translation() * (1.0 / dt), t.rotation() / dt)
}

/// Matches `curr` onto `prev` starting from `prior` (the predicted motion of
/// `curr` in `prev`'s frame) and returns the match with its velocity.
pub fn step_with_prior(
    prev: &CartesianScan,
    curr: &CartesianScan,
    match_params: &MatchParams,
    params: &OdometryParams,
    prior: Transform2D,
) -> Result<(VelocityMeasurement, MatchResult), OdometryError> {
    let dt = curr.timestamp - prev.timestamp;
    if !(dt > 0.0) {
        return Err(OdometryError::NonPositiveDt(dt));
    }
    let reference = ReferenceCloud::from_scan(&prev.planar(), match_params.max_segment_length);
    let result = match_scans(&curr.planar(), &reference, match_params, prior)?;
    if let Some(gate) = params.quality_gate.filter(|g| !(result.quality <= *g)) {
        return Err(OdometryError::QualityGate { quality: result.quality, gate });
    }
    let (linear, angular) = velocity_from_transform(&result.transform, dt);
    let m = VelocityMeasurement {
        timestamp: curr.timestamp,
        dt,
        linear,
        angular,
        quality: result.quality,
        transform: result.transform,
        iterations: result.iterations,
        termination: result.termination,
    };
    Ok((m, result))
}

/// Matches `curr` onto `prev` from an identity guess.
pub fn step(
    prev: &CartesianScan,
    curr: &CartesianScan,
    match_params: &MatchParams,
    params: &OdometryParams,
) -> Result<VelocityMeasurement, OdometryError> {
    step_with_prior(prev, curr, match_params, params, Transform2D::identity()).map(|(m, _)| m)
}
