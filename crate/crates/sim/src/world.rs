//! Planar obstacle worlds with optional height-limited cross-sections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lidarloc_core::geometry::Point2;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("segment {0} is degenerate or not finite")]
    DegenerateSegment(usize),
    #[error("cross-section {0} has an empty or inverted height interval")]
    BadInterval(usize),
    #[error("unknown world preset '{0}'")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    fn is_valid(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.a.distance(self.b) > 1e-9
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let d = self.b - self.a;
        let u = ((p - self.a).dot(d) / d.norm_squared()).clamp(0.0, 1.0);
        p.distance(self.a + d * u)
    }

    /// Ray parameter `s > 0` where `origin + s * dir` crosses the segment.
    pub fn ray_hit(&self, origin: Point2, dir: Point2) -> Option<f64> {
        let e = self.b - self.a;
        let den = dir.x * e.y - dir.y * e.x;
        if den.abs() < 1e-15 {
            return None;
        }
        let w = self.a - origin;
        let s = (w.x * e.y - w.y * e.x) / den;
        let u = (w.x * dir.y - w.y * dir.x) / den;
        (s > 1e-12 && (0.0..=1.0).contains(&u)).then_some(s)
    }
}

/// Obstacles that exist only within `[z_min, z_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub z_min: f64,
    pub z_max: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    /// Full-height walls.
    pub walls: Vec<Segment>,
    #[serde(default)]
    pub sections: Vec<CrossSection>,
    /// Height of the floor plane; `None` for no floor returns.
    #[serde(default)]
    pub floor: Option<f64>,
}

fn polyline(points: &[(f64, f64)], closed: bool) -> Vec<Segment> {
    let p: Vec<Point2> = points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    let mut out: Vec<Segment> = p.windows(2).map(|w| Segment::new(w[0], w[1])).collect();
    if closed && p.len() > 2 {
        out.push(Segment::new(p[p.len() - 1], p[0]));
    }
    out
}

fn rect(cx: f64, cy: f64, hx: f64, hy: f64) -> Vec<Segment> {
    polyline(&[(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)], true)
}

fn octagon(cx: f64, cy: f64, r: f64) -> Vec<Segment> {
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let a = (k as f64 + 0.5) * std::f64::consts::FRAC_PI_4;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    polyline(&pts, true)
}

impl World {
    pub fn new(walls: Vec<Segment>, sections: Vec<CrossSection>, floor: Option<f64>) -> Result<Self, WorldError> {
        let w = Self { walls, sections, floor };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let mut index = 0;
        for s in self.walls.iter().chain(self.sections.iter().flat_map(|c| c.segments.iter())) {
            if !s.is_valid() {
                return Err(WorldError::DegenerateSegment(index));
            }
            index += 1;
        }
        for (i, c) in self.sections.iter().enumerate() {
            if !(c.z_max > c.z_min) {
                return Err(WorldError::BadInterval(i));
            }
        }
        Ok(())
    }

    /// Full-height walls plus cross-sections present at height `z`.
    pub fn segments_at(&self, z: f64) -> Vec<Segment> {
        let mut out = self.walls.clone();
        for c in &self.sections {
            if (c.z_min..=c.z_max).contains(&z) {
                out.extend_from_slice(&c.segments);
            }
        }
        out
    }

    /// Distance from `p` at height `z` to the nearest obstacle there.
    pub fn clearance(&self, p: Point2, z: f64) -> f64 {
        self.segments_at(z).iter().map(|s| s.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// 10 m × 10 m empty room centred on the origin.
    pub fn room() -> Self {
        Self { walls: rect(0.0, 0.0, 5.0, 5.0), sections: Vec::new(), floor: Some(0.0) }
    }

    /// 14 m × 8 m nave with irregularly spaced wall alcoves, a polygonal apse,
    /// an entrance niche, two pillar rows, low pews and a gallery that only
    /// exists above 2.5 m. Spacings are deliberately uneven so that no
    /// translation along the nave maps the walls onto themselves.
    pub fn church() -> Self {
        let notch = |x0: f64, w: f64, y: f64, depth: f64| [(x0, y), (x0, y + depth), (x0 + w, y + depth), (x0 + w, y)];
        let mut outline = vec![(-7.0, -4.0)];
        for (x0, w) in [(-5.6, 1.4), (-2.1, 1.2), (1.0, 1.6), (4.3, 1.3)] {
            outline.extend_from_slice(&notch(x0, w, -4.0, -0.9));
        }
        // apse to the east
        outline.extend_from_slice(&[(7.0, -4.0), (7.0, -3.0), (8.4, -2.2), (9.0, 0.0), (8.4, 2.2), (7.0, 3.0), (7.0, 4.0)]);
        for (x0, w) in [(5.0, 1.0), (2.2, 1.1), (-1.3, 1.5), (-4.8, 1.2)] {
            let n = notch(x0 + w, -w, 4.0, 0.9);
            outline.extend_from_slice(&n);
        }
        outline.extend_from_slice(&[(-7.0, 4.0), (-7.0, 1.2), (-7.6, 1.2), (-7.6, -1.2), (-7.0, -1.2)]);
        let mut walls = polyline(&outline, true);
        for x in [-4.0, -0.6, 2.9] {
            walls.extend(rect(x, -2.4, 0.3, 0.3));
        }
        for x in [-3.4, 0.3, 3.6] {
            walls.extend(rect(x, 2.4, 0.3, 0.3));
        }
        let mut pews = Vec::new();
        for k in 0..5 {
            let x = -5.5 + k as f64 * 1.8;
            pews.extend(rect(x, -1.1, 0.25, 0.7));
            pews.extend(rect(x, 1.1, 0.25, 0.7));
        }
        let gallery = polyline(&[(-7.0, -3.0), (-5.5, -3.0), (-5.5, 3.0), (-7.0, 3.0)], false);
        Self {
            walls,
            sections: vec![
                CrossSection { z_min: 0.0, z_max: 0.9, segments: pews },
                CrossSection { z_min: 2.5, z_max: 3.5, segments: gallery },
            ],
            floor: Some(0.0),
        }
    }

    /// Unbounded grove of trunks on a jittered 3 m lattice over 30 m × 30 m,
    /// with the centre kept clear.
    pub fn forest() -> Self {
        let mut walls = Vec::new();
        // deterministic jitter from a fixed integer hash
        let h = |i: i64, j: i64, k: i64| {
            let mut v = (i * 73_856_093) ^ (j * 19_349_663) ^ (k * 83_492_791);
            v = v.wrapping_mul(0x5DEECE66D).wrapping_add(11);
            ((v >> 16) & 0xFFFF) as f64 / 65535.0
        };
        for i in -5i64..=5 {
            for j in -5i64..=5 {
                if i.abs() <= 1 && j.abs() <= 1 {
                    continue;
                }
                let x = i as f64 * 3.0 + (h(i, j, 1) - 0.5) * 1.6;
                let y = j as f64 * 3.0 + (h(i, j, 2) - 0.5) * 1.6;
                let r = 0.15 + 0.15 * h(i, j, 3);
                walls.extend(octagon(x, y, r));
            }
        }
        Self { walls, sections: Vec::new(), floor: Some(0.0) }
    }

    /// 40 m corridor, 3 m wide, with a dog-leg and side niches.
    pub fn tunnel() -> Self {
        let south = [
            (-20.0, -1.5),
            (-12.0, -1.5),
            (-12.0, -2.5),
            (-11.0, -2.5),
            (-11.0, -1.5),
            (0.0, -1.5),
            (4.0, 0.5),
            (12.0, 0.5),
            (12.0, -0.5),
            (13.0, -0.5),
            (13.0, 0.5),
            (20.0, 0.5),
        ];
        let north = [(20.0, 3.5), (6.0, 3.5), (4.0, 3.5), (0.0, 1.5), (-5.0, 1.5), (-5.0, 2.3), (-4.0, 2.3), (-4.0, 1.5), (-20.0, 1.5)];
        let mut outline: Vec<(f64, f64)> = south.to_vec();
        outline.extend_from_slice(&north);
        Self { walls: polyline(&outline, true), sections: Vec::new(), floor: Some(0.0) }
    }

    pub fn preset(name: &str) -> Result<Self, WorldError> {
        match name {
            "room" => Ok(Self::room()),
            "church" => Ok(Self::church()),
            "forest" => Ok(Self::forest()),
            "tunnel" => Ok(Self::tunnel()),
            other => Err(WorldError::UnknownPreset(other.to_string())),
        }
    }
}

pub const PRESETS: [&str; 4] = ["room", "church", "forest", "tunnel"];
