//! Closed-form weighted rigid fit.

use crate::geometry::{Point2, Transform2D};

use super::correspondence::CorrespondenceSet;
use super::MatchError;

/// Weighted means and cross-covariances of an inlier set.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mean_source: Point2,
    mean_target: Point2,
    sxx: f64,
    sxy: f64,
    syx: f64,
    syy: f64,
    spread: f64,
}

fn moments(corrs: &CorrespondenceSet) -> Option<Moments> {
    let active = || corrs.iter().filter(|c| c.inlier && c.weight > 0.0);
    let weight: f64 = active().map(|c| c.weight).sum();
    if !(weight > 0.0) {
        return None;
    }
    let mut ms = Point2::ORIGIN;
    let mut mt = Point2::ORIGIN;
    for c in active() {
        ms = ms + c.source * c.weight;
        mt = mt + c.target * c.weight;
    }
    ms = ms * (1.0 / weight);
    mt = mt * (1.0 / weight);
    let mut m = Moments {
        mean_source: ms,
        mean_target: mt,
        sxx: 0.0,
        sxy: 0.0,
        syx: 0.0,
        syy: 0.0,
        spread: 0.0,
    };
    for c in active() {
        let a = c.source - ms;
        let b = c.target - mt;
        m.sxx += c.weight * a.x * b.x;
        m.sxy += c.weight * a.x * b.y;
        m.syx += c.weight * a.y * b.x;
        m.syy += c.weight * a.y * b.y;
        m.spread += c.weight * (a.norm_squared() + b.norm_squared());
    }
    Some(m)
}

impl Moments {
    fn rotation(&self) -> Result<f64, MatchError> {
        let num = self.sxy - self.syx;
        let den = self.sxx + self.syy;
        let eps = 1e-12 * self.spread.max(f64::MIN_POSITIVE);
        if num.abs() <= eps && den.abs() <= eps {
            return Err(MatchError::DegenerateGeometry);
        }
        Ok(num.atan2(den))
    }

    fn translation_for(&self, rotation: f64) -> Point2 {
        let (s, c) = rotation.sin_cos();
        let (mx, my) = (self.mean_source.x, self.mean_source.y);
        Point2::new(
            self.mean_target.x - (mx * c - my * s),
            self.mean_target.y - (mx * s + my * c),
        )
    }
}

/// Translation that best aligns `corrs` given a fixed rotation.
pub fn translation_for_rotation(corrs: &CorrespondenceSet, rotation: f64) -> Result<Transform2D, MatchError> {
    let m = moments(corrs).ok_or(MatchError::NoCorrespondences)?;
    let t = m.translation_for(rotation);
    Ok(Transform2D::new(rotation, t.x, t.y))
}

/// Combined solve: the rotation comes from `rotation_corrs`, the translation
/// from the weighted means of `translation_corrs` under that rotation.
pub fn solve_transform(
    translation_corrs: &CorrespondenceSet,
    rotation_corrs: &CorrespondenceSet,
) -> Result<Transform2D, MatchError> {
    let trans = moments(translation_corrs).ok_or(MatchError::NoCorrespondences)?;
    let rot = moments(rotation_corrs).ok_or(MatchError::NoCorrespondences)?;
    let omega = rot.rotation()?;
    let t = trans.translation_for(omega);
    Ok(Transform2D::new(omega, t.x, t.y))
}

/// Weighted sum of squared residuals of `t` over the inliers of `corrs`.
pub fn weighted_error(t: &Transform2D, corrs: &CorrespondenceSet) -> f64 {
    corrs
        .iter()
        .filter(|c| c.inlier)
        .map(|c| c.weight * t.apply_point(c.source).distance_squared(c.target))
        .sum()
}
