//! Fractional RMSD inlier selection and distance weighting.

use super::correspondence::CorrespondenceSet;
use super::MatchError;

fn sorted_distances(corrs: &CorrespondenceSet) -> Vec<f64> {
    let mut d: Vec<f64> = corrs.iter().map(|c| c.distance).collect();
    d.sort_by(f64::total_cmp);
    d
}

fn kept_count(fraction: f64, n: usize) -> usize {
    // the slack keeps k/steps * n from flooring one short
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// FRMSD over an ascending distance list.
fn frmsd_sorted(sorted: &[f64], fraction: f64, lambda: f64) -> Result<f64, MatchError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MatchError::InvalidFraction(fraction));
    }
    let n = sorted.len();
    let k = kept_count(fraction, n).min(n);
    if k == 0 {
        return Err(MatchError::InvalidFraction(fraction));
    }
    let sum: f64 = sorted[..k].iter().map(|d| d * d).sum();
    Ok((sum / (fraction * n as f64)).sqrt() / fraction.powf(lambda))
}

/// Fractional root mean squared distance of the best `fraction` of `corrs`.
pub fn frmsd(corrs: &CorrespondenceSet, fraction: f64, lambda: f64) -> Result<f64, MatchError> {
    frmsd_sorted(&sorted_distances(corrs), fraction, lambda)
}

/// Grid search for the inlier fraction minimizing FRMSD (ties prefer the
/// larger fraction). Flags the smallest-distance correspondences as inliers
/// and returns `(fraction, frmsd)`.
pub fn select_inliers(
    corrs: &mut CorrespondenceSet,
    lambda: f64,
    grid_step: f64,
) -> Result<(f64, f64), MatchError> {
    if corrs.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let sorted = sorted_distances(corrs);
    let n = sorted.len();
    let steps = (1.0 / grid_step).round().max(1.0) as usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..=steps {
        let f = i as f64 / steps as f64;
        if kept_count(f, n) == 0 {
            continue;
        }
        let value = frmsd_sorted(&sorted, f, lambda)?;
        if best.map_or(true, |(_, v)| value <= v) {
            best = Some((f, value));
        }
    }
    let (fraction, value) = best.ok_or(MatchError::InvalidFraction(grid_step))?;
    let k = kept_count(fraction, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| corrs[a].distance.total_cmp(&corrs[b].distance).then(a.cmp(&b)));
    for c in corrs.iter_mut() {
        c.inlier = false;
    }
    for &i in &order[..k] {
        corrs[i].inlier = true;
    }
    Ok((fraction, value))
}

/// `w = 1 - d / max(d)` over inliers; outliers get zero weight. When every
/// inlier weight would be zero the inliers are weighted uniformly.
pub fn apply_weights(corrs: &mut CorrespondenceSet) {
    let max = corrs
        .iter()
        .filter(|c| c.inlier)
        .map(|c| c.distance)
        .fold(0.0, f64::max);
    for c in corrs.iter_mut() {
        c.weight = match (c.inlier, max > 0.0) {
            (false, _) => 0.0,
            (true, true) => 1.0 - c.distance / max,
            (true, false) => 1.0,
        };
    }
    let total: f64 = corrs.iter().filter(|c| c.inlier).map(|c| c.weight).sum();
    if total <= 0.0 {
        for c in corrs.iter_mut().filter(|c| c.inlier) {
            c.weight = 1.0;
        }
    }
}

/// Unit weight on inliers, zero on outliers.
pub fn uniform_weights(corrs: &mut CorrespondenceSet) {
    for c in corrs.iter_mut() {
        c.weight = if c.inlier { 1.0 } else { 0.0 };
    }
}
