//! Resolution-bounded global map: an octree of raw points at least one
//! resolution apart, plus the dense cloud of every inserted point.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Point3, Transform2D};

const NONE: u32 = u32::MAX;
const BINARY_MAGIC: [u8; 4] = *b"LLMP";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    /// Minimum separation of stored points and octree leaf size (meters).
    pub resolution: f64,
    /// Dense cloud size past which it is uniformly thinned.
    pub dense_cap: usize,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self { resolution: 0.2, dense_cap: 5_000_000 }
    }
}

#[derive(Debug, Clone)]
struct Node {
    /// Child node indices; all `NONE` for leaves.
    children: [u32; 8],
    /// Stored raw points (leaves only).
    points: Vec<u32>,
}

impl Node {
    fn empty() -> Self {
        Self { children: [NONE; 8], points: Vec::new() }
    }
}

/// Cubic octree over integer leaf coordinates. The root spans
/// `[origin, origin + 2^depth)` leaves on every axis.
#[derive(Debug, Clone)]
struct Octree {
    nodes: Vec<Node>,
    origin: [i64; 3],
    depth: u32,
}

impl Octree {
    fn new(at: [i64; 3]) -> Self {
        Self { nodes: vec![Node::empty()], origin: at, depth: 0 }
    }

    fn span(&self) -> i64 {
        1i64 << self.depth
    }

    fn contains(&self, k: [i64; 3]) -> bool {
        (0..3).all(|a| k[a] >= self.origin[a] && k[a] < self.origin[a] + self.span())
    }

    /// Doubles the root towards `k` until it is covered.
    fn grow_to(&mut self, k: [i64; 3]) {
        while !self.contains(k) {
            let span = self.span();
            let mut slot = 0;
            let mut origin = self.origin;
            for a in 0..3 {
                if k[a] < self.origin[a] {
                    origin[a] -= span;
                    slot |= 1 << a;
                }
            }
            let old_root = std::mem::replace(&mut self.nodes[0], Node::empty());
            let moved = self.nodes.len() as u32;
            self.nodes.push(old_root);
            self.nodes[0].children[slot] = moved;
            self.origin = origin;
            self.depth += 1;
        }
    }

    fn child_slot(&self, k: [i64; 3], level: u32) -> usize {
        let mut slot = 0;
        for a in 0..3 {
            if ((k[a] - self.origin[a]) >> level) & 1 == 1 {
                slot |= 1 << a;
            }
        }
        slot
    }

    fn leaf(&self, k: [i64; 3]) -> Option<&Node> {
        if !self.contains(k) {
            return None;
        }
        let mut node = 0usize;
        for level in (0..self.depth).rev() {
            let child = self.nodes[node].children[self.child_slot(k, level)];
            if child == NONE {
                return None;
            }
            node = child as usize;
        }
        Some(&self.nodes[node])
    }

    /// Returns the leaf for `k`, creating nodes on the way.
    fn leaf_mut(&mut self, k: [i64; 3]) -> &mut Node {
        self.grow_to(k);
        let mut node = 0usize;
        for level in (0..self.depth).rev() {
            let slot = self.child_slot(k, level);
            let child = self.nodes[node].children[slot];
            node = if child == NONE {
                let id = self.nodes.len() as u32;
                self.nodes.push(Node::empty());
                self.nodes[node].children[slot] = id;
                id as usize
            } else {
                child as usize
            };
        }
        &mut self.nodes[node]
    }

    /// Visits occupied leaves in a fixed traversal order.
    fn for_each_leaf(&self, mut visit: impl FnMut([i64; 3], &Node)) {
        let mut stack = vec![(0usize, self.origin, self.depth)];
        while let Some((id, origin, level)) = stack.pop() {
            let node = &self.nodes[id];
            if level == 0 {
                if !node.points.is_empty() {
                    visit(origin, node);
                }
                continue;
            }
            let half = 1i64 << (level - 1);
            for slot in (0..8).rev() {
                let child = node.children[slot];
                if child != NONE {
                    let mut o = origin;
                    for (a, v) in o.iter_mut().enumerate() {
                        if slot & (1 << a) != 0 {
                            *v += half;
                        }
                    }
                    stack.push((child as usize, o, level - 1));
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalMap {
    params: MappingParams,
    tree: Option<Octree>,
    stored: Vec<Point3>,
    occupied: usize,
    dense: Vec<Point3>,
    /// Only every `dense_stride`-th inserted point reaches the dense cloud.
    dense_stride: usize,
    dense_seen: u64,
    last_update: Option<Point2>,
}

impl GlobalMap {
    pub fn new(params: MappingParams) -> Self {
        assert!(params.resolution > 0.0, "map resolution must be positive");
        Self {
            params,
            tree: None,
            stored: Vec::new(),
            occupied: 0,
            dense: Vec::new(),
            dense_stride: 1,
            dense_seen: 0,
            last_update: None,
        }
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution
    }

    fn key(&self, p: Point3) -> [i64; 3] {
        let r = self.params.resolution;
        [(p.x / r).floor() as i64, (p.y / r).floor() as i64, (p.z / r).floor() as i64]
    }

    /// True if `p` lies at least one resolution away from every stored point.
    pub fn is_free(&self, p: Point3) -> bool {
        let Some(tree) = &self.tree else { return true };
        let r = self.params.resolution;
        let k = self.key(p);
        // cells within one leaf of k cover the r-ball
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(leaf) = tree.leaf([k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if leaf.points.iter().any(|&i| self.stored[i as usize].distance(p) < r) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Inserts a world-frame point if it satisfies the separation rule.
    /// Returns whether it was stored.
    pub fn insert_point(&mut self, p: Point3) -> bool {
        if !p.is_finite() || !self.is_free(p) {
            return false;
        }
        let k = self.key(p);
        let id = self.stored.len() as u32;
        self.stored.push(p);
        let tree = self.tree.get_or_insert_with(|| Octree::new(k));
        let leaf = tree.leaf_mut(k);
        if leaf.points.is_empty() {
            self.occupied += 1;
        }
        leaf.points.push(id);
        true
    }

    fn push_dense(&mut self, p: Point3) {
        let seen = self.dense_seen;
        self.dense_seen += 1;
        if seen % self.dense_stride as u64 != 0 {
            return;
        }
        self.dense.push(p);
        if self.params.dense_cap > 0 && self.dense.len() >= self.params.dense_cap {
            let mut keep = 0;
            for i in (0..self.dense.len()).step_by(2) {
                self.dense[keep] = self.dense[i];
                keep += 1;
            }
            self.dense.truncate(keep);
            self.dense_stride *= 2;
        }
    }

    /// Transforms sensor-level points by `pose` into the world frame, inserts
    /// those satisfying the separation rule and appends all to the dense
    /// cloud. Returns the number of newly stored points.
    pub fn insert_scan(&mut self, points: &[Point3], pose: &Transform2D) -> usize {
        let mut added = 0;
        for &p in points {
            let q = pose.apply_point(p.planar());
            let w = Point3::new(q.x, q.y, p.z);
            if self.insert_point(w) {
                added += 1;
            }
            self.push_dense(w);
        }
        added
    }

    /// Cell centres of all occupied leaves.
    pub fn snapshot(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.occupied);
        let r = self.params.resolution;
        if let Some(tree) = &self.tree {
            tree.for_each_leaf(|k, _| {
                out.push(Point3::new(
                    (k[0] as f64 + 0.5) * r,
                    (k[1] as f64 + 0.5) * r,
                    (k[2] as f64 + 0.5) * r,
                ));
            });
        }
        out
    }

    /// Stored raw points in insertion order.
    pub fn stored_points(&self) -> &[Point3] {
        &self.stored
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupied
    }

    pub fn export_dense(&self) -> &[Point3] {
        &self.dense
    }

    pub fn last_update_position(&self) -> Option<Point2> {
        self.last_update
    }

    pub fn set_last_update_position(&mut self, p: Point2) {
        self.last_update = Some(p);
    }

    /// Builds a map whose stored points come from a prepared cloud.
    pub fn from_points(params: MappingParams, points: &[Point3]) -> Self {
        let mut map = Self::new(params);
        for &p in points {
            map.insert_point(p);
        }
        map
    }
}

/// Writes `x y z` lines with six decimals.
pub fn write_ascii<W: Write>(mut w: W, points: &[Point3]) -> io::Result<()> {
    for p in points {
        writeln!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
    }
    w.flush()
}

pub fn read_ascii<R: BufRead>(r: R) -> io::Result<Vec<Point3>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        if v.len() != 3 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: expected 3 values, got {}", n + 1, v.len()),
            ));
        }
        out.push(Point3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

/// 16-byte header (magic, version u32, count u64, little endian) followed by
/// little-endian f32 triples.
pub fn write_binary<W: Write>(mut w: W, points: &[Point3]) -> io::Result<()> {
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(points.len() as u64).to_le_bytes())?;
    for p in points {
        for v in [p.x, p.y, p.z] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_binary<R: Read>(mut r: R) -> io::Result<Vec<Point3>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != BINARY_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad map magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unsupported map version {version}")));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 24));
    let mut buf = [0u8; 12];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        let f = |i: usize| f32::from_le_bytes(buf[i..i + 4].try_into().expect("4 bytes")) as f64;
        out.push(Point3::new(f(0), f(4), f(8)));
    }
    Ok(out)
}
