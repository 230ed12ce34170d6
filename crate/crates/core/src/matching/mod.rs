//! Scan matching: interpolated closest-point correspondences for translation,
//! IMRP correspondences for rotation, FRMSD outlier rejection, distance
//! weighting and a closed-form solve, iterated until a stopping rule fires.

mod correspondence;
mod outliers;
mod solve;

pub use correspondence::{
    correspondences_closest, correspondences_imrp, correspondences_interpolated, project_onto_segment, Adjacency,
    Correspondence, CorrespondenceSet, ReferenceCloud,
};
pub use outliers::{apply_weights, frmsd, select_inliers, uniform_weights};
pub use solve::{solve_transform, translation_for_rotation, weighted_error};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, PolarPoint, Transform2D};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("empty point set")]
    EmptyInput,
    #[error("no correspondences found")]
    NoCorrespondences,
    #[error("inlier fraction {0} keeps no correspondences")]
    InvalidFraction(f64),
    #[error("rotation is indeterminate for this geometry")]
    DegenerateGeometry,
    #[error("invalid match parameters: {0}")]
    InvalidParams(&'static str),
}

/// Point about which IMRP polar coordinates are taken each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarCenter {
    /// The moving scan's sensor origin carried by the current estimate.
    #[default]
    SensorOrigin,
    /// Centroid of the moving scan under the current estimate.
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// FRMSD exponent on the inlier fraction.
    pub lambda: f64,
    /// IMRP bearing window at iteration zero (radians).
    pub initial_window: f64,
    /// Per-iteration exponential decay of the IMRP window.
    pub window_decay: f64,
    /// Stop once FRMSD drops below this (meters).
    pub frmsd_stop: f64,
    /// Stop once consecutive FRMSD values differ by less than this (meters).
    pub delta_stop: f64,
    /// Wall-clock budget per match (milliseconds).
    pub time_budget_ms: f64,
    pub max_iterations: usize,
    /// Step of the inlier-fraction grid.
    pub f_grid_step: f64,
    /// Segment interpolation of translation correspondences.
    pub interpolate: bool,
    /// IMRP correspondences for the rotation (otherwise the translation set is used).
    pub imrp: bool,
    pub weighting: bool,
    /// FRMSD inlier selection (otherwise every correspondence is an inlier).
    pub outlier_rejection: bool,
    /// Scan-order neighbours farther apart than this are not interpolated (meters).
    pub max_segment_length: f64,
    /// Link radius for interpolation on unordered map clouds (meters).
    pub map_link_radius: f64,
    pub polar_center: PolarCenter,
    /// Rank and weight translation correspondences by the distance to the
    /// nearest real reference point instead of the virtual one. Virtual
    /// distances vanish along walls that already agree, which lets inlier
    /// selection discard every wall constraining the remaining error.
    pub rank_by_nearest: bool,
    /// Correspondences closer than this are never rejected (meters). Trimming
    /// alone keeps only the walls that already agree once the remaining error
    /// is structured (a residual shift or rotation), and then stalls; the
    /// floor should sit near the largest expected misalignment.
    pub inlier_floor: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            lambda: 1.2,
            initial_window: 0.5,
            window_decay: 0.03,
            frmsd_stop: 0.01,
            delta_stop: 1e-4,
            time_budget_ms: 50.0,
            max_iterations: 100,
            f_grid_step: 0.05,
            interpolate: true,
            imrp: true,
            weighting: true,
            outlier_rejection: true,
            max_segment_length: 1.0,
            map_link_radius: 0.45,
            polar_center: PolarCenter::SensorOrigin,
            rank_by_nearest: true,
            inlier_floor: 0.3,
        }
    }
}

impl MatchParams {
    /// Plain closest-point ICP: no interpolation, IMRP, weighting or rejection.
    pub fn closest_only() -> Self {
        Self {
            interpolate: false,
            imrp: false,
            weighting: false,
            outlier_rejection: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.lambda > 0.0) {
            return Err(MatchError::InvalidParams("lambda must be positive"));
        }
        if !(self.initial_window > 0.0) {
            return Err(MatchError::InvalidParams("initial_window must be positive"));
        }
        if !(self.f_grid_step > 0.0 && self.f_grid_step <= 1.0) {
            return Err(MatchError::InvalidParams("f_grid_step must be in (0, 1]"));
        }
        if !(self.time_budget_ms >= 0.0) {
            return Err(MatchError::InvalidParams("time_budget_ms must be non-negative"));
        }
        if self.max_iterations == 0 {
            return Err(MatchError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.inlier_floor >= 0.0) {
            return Err(MatchError::InvalidParams("inlier_floor must be non-negative"));
        }

        if !(self.window_decay >= 0.0) || !(self.max_segment_length > 0.0) || !(self.map_link_radius > 0.0) {
            return Err(MatchError::InvalidParams("window_decay, max_segment_length, map_link_radius"));
        }
        Ok(())
    }
}

/// IMRP bearing window after `iteration` iterations.
pub fn shrink_window(initial: f64, decay: f64, iteration: usize) -> f64 {
    initial * (-decay * iteration as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Consecutive FRMSD values stopped changing.
    Delta,
    /// FRMSD fell below the absolute threshold.
    Threshold,
    /// Wall-clock budget exhausted.
    Budget,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Delta => "delta",
            Termination::Threshold => "threshold",
            Termination::Budget => "budget",
            Termination::MaxIterations => "max_iter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// FRMSD of the translation correspondences before this iteration's update.
    pub frmsd: f64,
    pub inlier_fraction: f64,
    pub window: f64,
    /// Accumulated transform after this iteration's update.
    pub transform: Transform2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Maps moving-scan coordinates into the fixed frame.
    pub transform: Transform2D,
    pub final_frmsd: f64,
    /// Best-fraction FRMSD of closest-point residuals at the final transform.
    /// Unlike `final_frmsd` it does not depend on which features are enabled,
    /// so acceptance gates treat every variant alike.
    pub quality: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inlier_fraction: f64,
    pub termination: Termination,
    pub history: Vec<IterationRecord>,
}

fn centroid(points: &[Point2]) -> Point2 {
    let sum = points.iter().fold(Point2::ORIGIN, |acc, &p| acc + p);
    sum * (1.0 / points.len() as f64)
}

fn flag_and_weight(corrs: &mut CorrespondenceSet, params: &MatchParams) -> Result<(f64, f64), MatchError> {
    let (fraction, value) = if params.outlier_rejection {
        let r = select_inliers(corrs, params.lambda, params.f_grid_step)?;
        for c in corrs.iter_mut() {
            c.inlier |= c.distance < params.inlier_floor;
        }
        r
    } else {
        corrs.iter_mut().for_each(|c| c.inlier = true);
        (1.0, frmsd(corrs, 1.0, params.lambda)?)
    };
    if params.weighting {
        apply_weights(corrs);
    } else {
        uniform_weights(corrs);
    }
    Ok((fraction, value))
}

/// Aligns `moving` (sensor-frame points, ordered by bearing) to `fixed`,
/// starting from `initial_guess`. The returned transform maps moving
/// coordinates into the fixed frame.
pub fn match_scans(
    moving: &[Point2],
    fixed: &ReferenceCloud,
    params: &MatchParams,
    initial_guess: Transform2D,
) -> Result<MatchResult, MatchError> {
    params.validate()?;
    if moving.is_empty() || fixed.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let started = Instant::now();
    let budget = Duration::from_secs_f64(params.time_budget_ms / 1000.0);
    let mut total = initial_guess;
    let mut previous: Option<f64> = None;
    let mut history = Vec::new();

    for iteration in 0..params.max_iterations {
        let current = total.apply(moving);
        let mut trans = if params.interpolate {
            correspondences_interpolated(&current, fixed)?
        } else {
            correspondences_closest(&current, fixed)?
        };
        if params.rank_by_nearest && params.interpolate {
            for c in trans.iter_mut() {
                c.distance = fixed.nearest(c.source).map_or(c.distance, |(_, d)| d.sqrt());
            }
        }
        let (fraction, score) = flag_and_weight(&mut trans, params)?;
        let window = shrink_window(params.initial_window, params.window_decay, iteration);

        let rot = if params.imrp {
            let center = match params.polar_center {
                PolarCenter::SensorOrigin => total.translation(),
                PolarCenter::Centroid => centroid(&current),
            };
            let source: Vec<PolarPoint> = current.iter().map(|p| p.to_polar_about(center)).collect();
            let targets = fixed.points();
            let found = if params.interpolate {
                correspondence::imrp_interpolated_about(&source, targets, window, center, params.max_segment_length)
            } else {
                let target: Vec<PolarPoint> = targets.iter().map(|p| p.to_polar_about(center)).collect();
                correspondence::imrp_about(&source, &target, window, center)
            };
            match found {
                Ok(mut c) => {
                    // exact source coordinates rather than the polar round trip
                    c.iter_mut().for_each(|c| {
                        c.source = current[c.source_index];
                        c.distance = c.source.distance(c.target);
                    });
                    flag_and_weight(&mut c, params)?;
                    Some(c)
                }
                Err(MatchError::NoCorrespondences) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let rot_set = rot.as_ref().unwrap_or(&trans);
        let step = match solve_transform(&trans, rot_set) {
            Ok(t) => t,
            Err(MatchError::DegenerateGeometry) => translation_for_rotation(&trans, 0.0)?,
            Err(MatchError::NoCorrespondences) if rot.is_some() => {
                // every IMRP pair lost its weight; fall back to the translation set
                match solve_transform(&trans, &trans) {
                    Ok(t) => t,
                    Err(MatchError::DegenerateGeometry) => translation_for_rotation(&trans, 0.0)?,
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };
        total = step.compose(&total);
        history.push(IterationRecord {
            frmsd: score,
            inlier_fraction: fraction,
            window,
            transform: total,
        });
        log::debug!(
            "match iter {iteration}: frmsd={score:.5} f={fraction:.2} window={window:.4} t=({:.4}, {:.4}, {:.5})",
            total.tx,
            total.ty,
            total.rotation()
        );

        let termination = if started.elapsed() > budget {
            Some(Termination::Budget)
        } else if score < params.frmsd_stop {
            Some(Termination::Threshold)
        } else if previous.is_some_and(|p| (p - score).abs() < params.delta_stop) {
            Some(Termination::Delta)
        } else if iteration + 1 == params.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };
        previous = Some(score);
        if let Some(termination) = termination {
            let mut residuals = correspondences_closest(&total.apply(moving), fixed)?;
            let (_, quality) = select_inliers(&mut residuals, params.lambda, params.f_grid_step)?;
            return Ok(MatchResult {
                transform: total,
                final_frmsd: score,
                quality,
                iterations: iteration + 1,
                converged: matches!(termination, Termination::Delta | Termination::Threshold),
                inlier_fraction: fraction,
                termination,
                history,
            });
        }
    }
    unreachable!("max_iterations >= 1 always terminates inside the loop")
}
