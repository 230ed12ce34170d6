//! Correspondence search: closest point, line-segment interpolation and IMRP.

use std::f64::consts::PI;

use crate::geometry::{angle_diff, polar_to_cartesian, Point2, PolarPoint};
use crate::spatial::Grid2;

use super::MatchError;

/// One matched pair. `target` may be a virtual point on a reference segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub source: Point2,
    pub target: Point2,
    pub distance: f64,
    pub weight: f64,
    pub inlier: bool,
}

impl Correspondence {
    pub fn new(source_index: usize, source: Point2, target: Point2) -> Self {
        Self {
            source_index,
            source,
            target,
            distance: source.distance(target),
            weight: 1.0,
            inlier: true,
        }
    }
}

pub type CorrespondenceSet = Vec<Correspondence>;

/// How reference points are linked into segments for interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adjacency {
    /// Points keep scan (bearing) order; neighbours are the previous and next
    /// returns, wrapping around, unless they are more than `max_gap` apart.
    ScanOrder { max_gap: f64 },
    /// Unordered clouds (map crops): every point within `link_radius`.
    Radius { link_radius: f64 },
}

/// Fixed side of a registration: indexed points plus segment adjacency.
#[derive(Debug, Clone)]
pub struct ReferenceCloud {
    grid: Grid2,
    adjacency: Adjacency,
}

impl ReferenceCloud {
    pub fn new(points: &[Point2], adjacency: Adjacency) -> Self {
        Self {
            grid: Grid2::new(points),
            adjacency,
        }
    }

    /// Reference built from an ordered scan.
    pub fn from_scan(points: &[Point2], max_gap: f64) -> Self {
        Self::new(points, Adjacency::ScanOrder { max_gap })
    }

    pub fn from_map(points: &[Point2], link_radius: f64) -> Self {
        Self::new(points, Adjacency::Radius { link_radius })
    }

    pub fn points(&self) -> &[Point2] {
        self.grid.points()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        self.grid.nearest(q)
    }

    fn neighbours(&self, i: usize) -> Vec<usize> {
        let pts = self.points();
        let n = pts.len();
        match self.adjacency {
            Adjacency::ScanOrder { max_gap } => {
                if n < 2 {
                    return Vec::new();
                }
                let mut out = vec![(i + n - 1) % n, (i + 1) % n];
                out.sort_unstable();
                out.dedup();
                out.retain(|&j| j != i && pts[i].distance(pts[j]) <= max_gap);
                out
            }
            Adjacency::Radius { link_radius } => {
                let mut out = self.grid.within(pts[i], link_radius);
                out.retain(|&j| j != i);
                out
            }
        }
    }
}

fn require_nonempty(source: &[Point2], target: &ReferenceCloud) -> Result<(), MatchError> {
    if source.is_empty() || target.is_empty() {
        Err(MatchError::EmptyInput)
    } else {
        Ok(())
    }
}

/// Nearest reference point for every source point.
pub fn correspondences_closest(source: &[Point2], target: &ReferenceCloud) -> Result<CorrespondenceSet, MatchError> {
    require_nonempty(source, target)?;
    let pts = target.points();
    Ok(source
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let (i, _) = target.nearest(p).expect("non-empty reference");
            Correspondence::new(j, p, pts[i])
        })
        .collect())
}

/// Closest point on the segment between the nearest reference point and its
/// adjacent neighbour that lies closer to the source point.
pub fn correspondences_interpolated(
    source: &[Point2],
    target: &ReferenceCloud,
) -> Result<CorrespondenceSet, MatchError> {
    require_nonempty(source, target)?;
    let pts = target.points();
    Ok(source
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let (i, _) = target.nearest(p).expect("non-empty reference");
            let qi = pts[i];
            let adjacent = target
                .neighbours(i)
                .into_iter()
                .map(|k| (k, pts[k].distance_squared(p)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let virt = match adjacent {
                Some((k, _)) => project_onto_segment(p, qi, pts[k]),
                None => qi,
            };
            Correspondence::new(j, p, virt)
        })
        .collect())
}

pub fn project_onto_segment(p: Point2, a: Point2, b: Point2) -> Point2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= f64::EPSILON * f64::EPSILON {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Reference points pre-sorted by bearing for windowed range search.
pub(crate) struct BearingIndex {
    order: Vec<usize>,
    bearings: Vec<f64>,
}

impl BearingIndex {
    pub(crate) fn new(points: &[PolarPoint]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].bearing.total_cmp(&points[b].bearing).then(a.cmp(&b)));
        let bearings = order.iter().map(|&i| points[i].bearing).collect();
        Self { order, bearings }
    }

    /// Calls `visit` with every sorted position whose bearing lies within
    /// `±window` of `bearing`, handling wrap-around at ±π.
    pub(crate) fn for_each_in_window(&self, bearing: f64, window: f64, mut visit: impl FnMut(usize)) {
        let mut scan = |lo: f64, hi: f64| {
            let start = self.bearings.partition_point(|&b| b < lo);
            for k in start..self.bearings.len() {
                if self.bearings[k] > hi {
                    break;
                }
                visit(k);
            }
        };
        if window >= PI {
            scan(f64::NEG_INFINITY, f64::INFINITY);
            return;
        }
        let (lo, hi) = (bearing - window, bearing + window);
        scan(lo.max(-PI), hi.min(PI));
        if lo < -PI {
            scan(lo + 2.0 * PI, PI);
        }
        if hi > PI {
            scan(-PI, hi - 2.0 * PI);
        }
    }

    /// Index of the point within the bearing window minimizing the squared
    /// range difference; lowest index on ties.
    pub(crate) fn best_in_window(&self, points: &[PolarPoint], query: PolarPoint, window: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        self.for_each_in_window(query.bearing, window, |k| {
            let i = self.order[k];
            let d = (points[i].range - query.range).powi(2);
            match best {
                Some((bi, bd)) if d > bd || (d == bd && i > bi) => {}
                _ => best = Some((i, d)),
            }
        });
        best.map(|b| b.0)
    }
}

/// IMRP pairs of polar sets expressed about a common `center`.
pub(crate) fn imrp_about(
    source: &[PolarPoint],
    target: &[PolarPoint],
    window: f64,
    center: Point2,
) -> Result<CorrespondenceSet, MatchError> {
    if source.is_empty() || target.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let index = BearingIndex::new(target);
    let out: CorrespondenceSet = source
        .iter()
        .enumerate()
        .filter_map(|(j, &p)| {
            index.best_in_window(target, p, window).map(|i| {
                Correspondence::new(j, polar_to_cartesian(p) + center, polar_to_cartesian(target[i]) + center)
            })
        })
        .collect();
    if out.is_empty() {
        Err(MatchError::NoCorrespondences)
    } else {
        Ok(out)
    }
}

/// IMRP against the target's bearing-ordered polyline: where the source
/// range circle crosses a target segment inside the window the crossing is
/// the match (nearest bearing first); otherwise the discrete rule applies.
/// Segments longer than `max_gap` are not interpolated.
pub(crate) fn imrp_interpolated_about(
    source: &[PolarPoint],
    target: &[Point2],
    window: f64,
    center: Point2,
    max_gap: f64,
) -> Result<CorrespondenceSet, MatchError> {
    if source.is_empty() || target.is_empty() {
        return Err(MatchError::EmptyInput);
    }
    let polar: Vec<PolarPoint> = target.iter().map(|p| p.to_polar_about(center)).collect();
    let index = BearingIndex::new(&polar);
    let n = target.len();
    let max_gap2 = max_gap * max_gap;
    let out: CorrespondenceSet = source
        .iter()
        .enumerate()
        .filter_map(|(j, &p)| {
            // (range error, bearing error, tie index, point)
            let mut best: Option<(f64, f64, usize, Point2)> = None;
            let mut offer = |cand: (f64, f64, usize, Point2)| {
                let better = match best {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(cand);
                }
            };
            index.for_each_in_window(p.bearing, window, |k| {
                let i = index.order[k];
                offer(((polar[i].range - p.range).abs(), angle_diff(polar[i].bearing, p.bearing).abs(), i, target[i]));
                if n < 2 {
                    return;
                }
                for (a, b) in [(index.order[(k + n - 1) % n], i), (i, index.order[(k + 1) % n])] {
                    if target[a].distance_squared(target[b]) > max_gap2 {
                        continue;
                    }
                    for x in circle_segment_crossings(center, p.range, target[a], target[b]) {
                        let dphi = angle_diff((x - center).y.atan2((x - center).x), p.bearing).abs();
                        if dphi <= window {
                            offer((0.0, dphi, a.min(b), x));
                        }
                    }
                }
            });
            best.map(|(_, _, _, x)| Correspondence::new(j, polar_to_cartesian(p) + center, x))
        })
        .collect();
    if out.is_empty() {
        Err(MatchError::NoCorrespondences)
    } else {
        Ok(out)
    }
}

/// Points of segment `a`-`b` at distance `r` from `c`.
fn circle_segment_crossings(c: Point2, r: f64, a: Point2, b: Point2) -> impl Iterator<Item = Point2> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    let qb = 2.0 * f.dot(d);
    let qc = f.norm_squared() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    let roots = if qa <= f64::EPSILON || disc < 0.0 {
        [None, None]
    } else {
        let s = disc.sqrt();
        [Some((-qb - s) / (2.0 * qa)), Some((-qb + s) / (2.0 * qa))]
    };
    roots
        .into_iter()
        .flatten()
        .filter(|t| (0.0..=1.0).contains(t))
        .map(move |t| a + d * t)
}

/// Matches each source return to the target return within `±window` of its
/// bearing that has the closest range. Sources with empty windows are skipped.
pub fn correspondences_imrp(
    source: &[PolarPoint],
    target: &[PolarPoint],
    window: f64,
) -> Result<CorrespondenceSet, MatchError> {
    imrp_about(source, target, window, Point2::ORIGIN)
}
