//! Uniform-grid indices for nearest-neighbour and radius queries.
//!
//! Both indices break distance ties towards the lowest point index so every
//! query is reproducible.

use std::collections::HashMap;

use crate::geometry::{Point2, Point3};

/// Dense bucket grid over the bounding box of a planar point set.
#[derive(Debug, Clone)]
pub struct Grid2 {
    points: Vec<Point2>,
    origin: Point2,
    cell: f64,
    cols: usize,
    rows: usize,
    // CSR layout: indices of cell k are entries[starts[k]..starts[k + 1]]
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl Grid2 {
    pub fn new(points: &[Point2]) -> Self {
        let n = points.len().max(1);
        let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        if points.is_empty() {
            lo = Point2::ORIGIN;
            hi = Point2::ORIGIN;
        }
        let w = (hi.x - lo.x).max(1e-6);
        let h = (hi.y - lo.y).max(1e-6);
        // about two points per cell
        let cell = ((w * h * 2.0) / n as f64).sqrt().max(w.max(h) / 512.0).max(1e-6);
        Self::with_cell(points, lo, cell, w, h)
    }

    fn with_cell(points: &[Point2], origin: Point2, cell: f64, w: f64, h: f64) -> Self {
        let cols = ((w / cell).floor() as usize + 1).max(1);
        let rows = ((h / cell).floor() as usize + 1).max(1);
        let mut counts = vec![0u32; cols * rows + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| {
                let cx = (((p.x - origin.x) / cell) as usize).min(cols - 1);
                let cy = (((p.y - origin.y) / cell) as usize).min(rows - 1);
                cy * cols + cx
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            entries[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Self {
            points: points.to_vec(),
            origin,
            cell,
            cols,
            rows,
            starts,
            entries,
        }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
        )
    }

    fn bucket(&self, cx: i64, cy: i64) -> &[u32] {
        if cx < 0 || cy < 0 || cx >= self.cols as i64 || cy >= self.rows as i64 {
            return &[];
        }
        let k = cy as usize * self.cols + cx as usize;
        &self.entries[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Index and squared distance of the nearest point, lowest index on ties.
    pub fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (qx, qy) = self.cell_of(q);
        // clamped cell position so that ring distances to the grid are bounded
        let max_ring = [
            qx.abs(),
            (qx - self.cols as i64 + 1).abs(),
            qy.abs(),
            (qy - self.rows as i64 + 1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        let consider = |idx: u32, best: &mut Option<(usize, f64)>| {
            let i = idx as usize;
            let d = self.points[i].distance_squared(q);
            match best {
                Some((bi, bd)) if d > *bd || (d == *bd && i > *bi) => {}
                _ => *best = Some((i, d)),
            }
        };
        for ring in 0..=max_ring {
            let y0 = (qy - ring).max(0);
            let y1 = (qy + ring).min(self.rows as i64 - 1);
            for cy in y0..=y1 {
                if (cy - qy).abs() == ring {
                    let x0 = (qx - ring).max(0);
                    let x1 = (qx + ring).min(self.cols as i64 - 1);
                    for cx in x0..=x1 {
                        for &idx in self.bucket(cx, cy) {
                            consider(idx, &mut best);
                        }
                    }
                } else {
                    for cx in [qx - ring, qx + ring] {
                        for &idx in self.bucket(cx, cy) {
                            consider(idx, &mut best);
                        }
                        if ring == 0 {
                            break;
                        }
                    }
                }
            }
            if let Some((_, bd)) = best {
                // anything in ring + 1 or further is at least ring * cell away
                let reach = ring as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best
    }

    /// Indices of all points within `radius` of `q` (inclusive), ascending.
    pub fn within(&self, q: Point2, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        let (x0, y0) = self.cell_of(Point2::new(q.x - radius, q.y - radius));
        let (x1, y1) = self.cell_of(Point2::new(q.x + radius, q.y + radius));
        for cy in y0.max(0)..=y1.min(self.rows as i64 - 1) {
            for cx in x0.max(0)..=x1.min(self.cols as i64 - 1) {
                for &idx in self.bucket(cx, cy) {
                    if self.points[idx as usize].distance_squared(q) <= r2 {
                        out.push(idx as usize);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Sparse voxel hash for radius queries over 3D points.
#[derive(Debug, Clone)]
pub struct VoxelHash {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl VoxelHash {
    pub fn new(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, *p)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(cell: f64, p: Point3) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices within `radius` of `q` (inclusive), ascending.
    pub fn within(&self, points: &[Point3], q: Point3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo = Self::key(self.cell, Point3::new(q.x - radius, q.y - radius, q.z - radius));
        let hi = Self::key(self.cell, Point3::new(q.x + radius, q.y + radius, q.z + radius));
        let mut out = Vec::new();
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(b) = self.buckets.get(&(x, y, z)) {
                        out.extend(b.iter().copied().filter(|&i| points[i].distance_squared(q) <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
