//! Scan-to-map matching for absolute pose measurements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CartesianScan, Point2, Point3, Transform2D};
use crate::matching::{match_scans, MatchError, MatchParams, MatchResult, ReferenceCloud, Termination};

#[derive(Debug, Error, PartialEq)]
pub enum GlobalError {
    #[error("empty scan")]
    EmptyScan,
    #[error("map crop holds {found} points, need {required}")]
    MapTooSparse { found: usize, required: usize },
    #[error("global match failed: {0}")]
    MatchFailed(#[from] MatchError),
    /// The match ran but its quality exceeds the gate; the pose is kept for diagnostics.
    #[error("global match rejected: quality {:.4} above gate {gate:.4}", measurement.quality)]
    QualityGate { measurement: PoseMeasurement, gate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalParams {
    /// Crop radius as a multiple of the sensor range.
    pub crop_factor: f64,
    pub sensor_max_range: f64,
    /// Half thickness of the map slice around the flight height (meters).
    pub slice_half_height: f64,
    /// Travel since the last map update that triggers insertion (meters).
    pub update_distance: f64,
    /// Global matching rate (Hz).
    pub rate: f64,
    pub min_crop_points: usize,
    /// Matches whose quality exceeds this are not fused or mapped (meters);
    /// off by default.
    pub quality_gate: Option<f64>,
}

impl Default for GlobalParams {
    fn default() -> Self {
        Self {
            crop_factor: 1.2,
            sensor_max_range: 10.0,
            slice_half_height: 0.5,
            update_distance: 0.5,
            rate: 1.0,
            min_crop_points: 20,
            quality_gate: None,
        }
    }
}

impl GlobalParams {
    pub fn crop_radius(&self) -> f64 {
        self.crop_factor * self.sensor_max_range
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.crop_factor >= 1.0) {
            return Err("crop_factor must be at least 1");
        }
        if !(self.update_distance > 0.0) {
            return Err("update_distance must be positive");
        }
        if !(self.sensor_max_range > 0.0 && self.rate > 0.0 && self.slice_half_height >= 0.0) {
            return Err("sensor_max_range and rate must be positive, slice_half_height non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub timestamp: f64,
    pub position: Point2,
    pub heading: f64,
    /// Variant-independent quality of the producing match.
    pub quality: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl PoseMeasurement {
    pub fn transform(&self) -> Transform2D {
        Transform2D::from_pose(self.position, self.heading)
    }
}

/// Map points within the crop radius of `center` and the slice around `flight_height`.
pub fn crop_map(snapshot: &[Point3], center: Point2, flight_height: f64, params: &GlobalParams) -> Vec<Point3> {
    let r2 = params.crop_radius().powi(2);
    snapshot
        .iter()
        .copied()
        .filter(|p| p.planar().distance_squared(center) <= r2 && (p.z - flight_height).abs() <= params.slice_half_height)
        .collect()
}

/// Matches `scan` (sensor-level frame) against the cropped map, seeded with
/// `prior` (body-to-world). The measurement is the refined body pose.
pub fn localize(
    scan: &CartesianScan,
    snapshot: &[Point3],
    prior: Transform2D,
    flight_height: f64,
    params: &GlobalParams,
    match_params: &MatchParams,
) -> Result<(PoseMeasurement, MatchResult), GlobalError> {
    if scan.is_empty() {
        return Err(GlobalError::EmptyScan);
    }
    let crop = crop_map(snapshot, prior.translation(), flight_height, params);
    if crop.len() < params.min_crop_points {
        return Err(GlobalError::MapTooSparse { found: crop.len(), required: params.min_crop_points });
    }
    let planar: Vec<Point2> = crop.iter().map(|p| p.planar()).collect();
    let reference = ReferenceCloud::from_map(&planar, match_params.map_link_radius);
    let result = match_scans(&scan.planar(), &reference, match_params, prior)?;
    let m = PoseMeasurement {
        timestamp: scan.timestamp,
        position: result.transform.translation(),
        heading: result.transform.rotation(),
        quality: result.quality,
        iterations: result.iterations,
        termination: result.termination,
    };
    if let Some(gate) = params.quality_gate.filter(|g| !(result.quality <= *g)) {
        return Err(GlobalError::QualityGate { measurement: m, gate });
    }
    Ok((m, result))
}

/// True iff the vehicle moved strictly more than `update_distance`.
pub fn should_update_map(current: Point2, last_update: Point2, update_distance: f64) -> bool {
    current.distance(last_update) > update_distance
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crop_radius_boundary() {
        let params = GlobalParams { sensor_max_range: 10.0, ..Default::default() };
        let pts = vec![Point3::new(11.9, 0.0, 1.0), Point3::new(12.1, 0.0, 1.0), Point3::new(0.0, 0.0, 1.6)];
        let crop = crop_map(&pts, Point2::ORIGIN, 1.0, &params);
        assert_eq!(crop, vec![Point3::new(11.9, 0.0, 1.0)]);
        assert!(crop_map(&[], Point2::ORIGIN, 1.0, &params).is_empty());
    }

    #[test]
    fn update_gate_is_strict() {
        assert!(should_update_map(Point2::new(0.6, 0.0), Point2::ORIGIN, 0.5));
        assert!(!should_update_map(Point2::new(0.5, 0.0), Point2::ORIGIN, 0.5));
        assert!(!should_update_map(Point2::ORIGIN, Point2::ORIGIN, 0.5));
    }

    fn room_points(step: f64) -> Vec<Point3> {
        let mut out = Vec::new();
        let n = (8.0 / step) as usize;
        for i in 0..n {
            let s = -4.0 + i as f64 * step;
            out.push(Point3::new(s, -3.0, 1.0));
            out.push(Point3::new(s, 3.0, 1.0));
            out.push(Point3::new(-4.0, s * 0.75, 1.0));
            out.push(Point3::new(4.0, s * 0.75, 1.0));
        }
        out.push(Point3::new(1.0, 1.0, 1.0));
        out
    }

    #[test]
    fn scan_at_prior_reproduces_prior() {
        let map = room_points(0.2);
        let pose = Transform2D::new(0.3, 0.5, -0.4);
        let inv = pose.inverse();
        let mut body: Vec<Point2> = map.iter().map(|p| inv.apply_point(p.planar())).collect();
        body.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
        let scan = CartesianScan::new(3.0, body.iter().map(|p| Point3::new(p.x, p.y, 1.0)).collect());
        let (m, _) = localize(&scan, &map, pose, 1.0, &GlobalParams::default(), &MatchParams::default()).unwrap();
        assert!(m.position.distance(pose.translation()) < 1e-6);
        assert!((m.heading - 0.3).abs() < 1e-6);
        assert_eq!(m.timestamp, 3.0);
    }

    #[test]
    fn sparse_crop_is_reported() {
        let scan = CartesianScan::new(0.0, vec![Point3::new(1.0, 0.0, 1.0)]);
        let err = localize(&scan, &[], Transform2D::identity(), 1.0, &GlobalParams::default(), &MatchParams::default());
        assert_eq!(err.unwrap_err(), GlobalError::MapTooSparse { found: 0, required: 20 });
    }

    proptest! {
        #[test]
        fn crop_is_a_filtered_subset(
            pts in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.0..3.0f64), 0..100),
            cx in -5.0..5.0f64, cy in -5.0..5.0f64, h in 0.0..3.0f64,
        ) {
            let params = GlobalParams::default();
            let snapshot: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let c = Point2::new(cx, cy);
            let crop = crop_map(&snapshot, c, h, &params);
            let expected: Vec<Point3> = snapshot
                .iter()
                .copied()
                .filter(|p| p.planar().distance(c) <= 12.0 + 1e-12 && (p.z - h).abs() <= 0.5)
                .collect();
            prop_assert_eq!(crop, expected);
        }
    }
}
