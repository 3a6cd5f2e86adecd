//! Convex hull `C` of a finite support, its relative interior `I`, and
//! point classification against them.

use crate::measure::{DiscreteMeasure, Point};
use crate::tolerance::TAU_GEOM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Single(Point),
    /// `origin + t * dir` for `t` in `[lo, hi]`, `dir` a unit vector.
    Segment {
        origin: Point,
        dir: Point,
        lo: f64,
        hi: f64,
    },
    /// Counter-clockwise, strictly convex.
    Polygon(Vec<Point>),
}

/// A ν-null stretch of a hull edge, used to place boundary spikes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGap {
    /// Midpoint of the gap.
    pub point: Point,
    /// Outward unit normal of the edge.
    pub normal: Point,
    /// Support value `<normal, y>` on the edge.
    pub offset: f64,
    /// Distance from `point` to the nearest charged point of the edge.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySummary {
    dim: usize,
    shape: Shape,
    tol: f64,
}

impl GeometrySummary {
    pub fn of(nu: &DiscreteMeasure) -> Self {
        Self::with_tolerance(nu, TAU_GEOM)
    }

    pub fn with_tolerance(nu: &DiscreteMeasure, tol: f64) -> Self {
        Self::from_points(nu.dim(), nu.points(), tol)
    }

    pub fn from_points(dim: usize, points: &[Point], tol: f64) -> Self {
        let shape = match dim {
            1 => {
                let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    Shape::Single(Point::scalar(lo))
                } else {
                    Shape::Segment {
                        origin: Point::scalar(0.0),
                        dir: Point::scalar(1.0),
                        lo,
                        hi,
                    }
                }
            }
            _ => planar_shape(points),
        };
        Self { dim, shape, tol }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn dim_affine_hull(&self) -> usize {
        match self.shape {
            Shape::Single(_) => 0,
            Shape::Segment { .. } => 1,
            Shape::Polygon(_) => 2,
        }
    }

    /// Extreme points of `C`, counter-clockwise in the plane.
    pub fn hull_vertices(&self) -> Vec<Point> {
        match &self.shape {
            Shape::Single(p) => vec![p.clone()],
            Shape::Segment {
                origin,
                dir,
                lo,
                hi,
            } => vec![origin.add(&dir.scale(*lo)), origin.add(&dir.scale(*hi))],
            Shape::Polygon(v) => v.clone(),
        }
    }

    /// `(lo, hi)` for one-dimensional supports.
    pub fn interval(&self) -> Option<(f64, f64)> {
        if self.dim != 1 {
            return None;
        }
        match &self.shape {
            Shape::Single(p) => Some((p[0], p[0])),
            Shape::Segment { lo, hi, .. } => Some((*lo, *hi)),
            Shape::Polygon(_) => None,
        }
    }

    pub fn diameter(&self) -> f64 {
        let v = self.hull_vertices();
        let mut d = 0.0f64;
        for a in &v {
            for b in &v {
                d = d.max(a.dist(b));
            }
        }
        d
    }

    /// Euclidean distance from `p` to `C` (zero inside).
    pub fn distance_to_hull(&self, p: &Point) -> f64 {
        match &self.shape {
            Shape::Single(q) => p.dist(q),
            Shape::Segment {
                origin,
                dir,
                lo,
                hi,
            } => {
                let (t, perp) = project(p, origin, dir);
                let along = (lo - t).max(t - hi).max(0.0);
                (perp * perp + along * along).sqrt()
            }
            Shape::Polygon(v) => {
                if polygon_signed(v, p) <= 0.0 {
                    0.0
                } else {
                    edges(v)
                        .map(|(a, b)| segment_distance(p, a, b))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Distance from `p` to the relative boundary of `C`, measured inside
    /// the affine hull; zero for points outside `C`. For a single-point hull
    /// the relative boundary is empty and this is `+inf` at the point.
    pub fn depth(&self, p: &Point) -> f64 {
        match &self.shape {
            Shape::Single(q) => {
                if p.dist(q) <= self.tol {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Shape::Segment {
                origin, dir, lo, hi, ..
            } => {
                let (t, _) = project(p, origin, dir);
                (t - lo).min(hi - t).max(0.0)
            }
            Shape::Polygon(v) => (-polygon_signed(v, p)).max(0.0),
        }
    }

    pub fn classify(&self, p: &Point) -> Location {
        if self.distance_to_hull(p) > self.tol {
            return Location::Exterior;
        }
        if let Shape::Segment { origin, dir, .. } = &self.shape {
            if project(p, origin, dir).1 > self.tol {
                return Location::Exterior;
            }
        }
        if self.depth(p) <= self.tol {
            Location::Boundary
        } else {
            Location::Interior
        }
    }

    /// Membership in `K^j = { z : dist(z, I^c) >= 1/j, |z| <= j }`, with
    /// distances measured inside the affine hull.
    pub fn in_kj(&self, p: &Point, j: usize) -> bool {
        let j = j as f64;
        self.classify(p) == Location::Interior && self.depth(p) >= 1.0 / j && p.norm() <= j
    }

    /// Points of `C` on a lattice of the given spacing, hull vertices included.
    pub fn lattice(&self, spacing: f64) -> Vec<Point> {
        match &self.shape {
            Shape::Single(p) => vec![p.clone()],
            Shape::Segment {
                origin,
                dir,
                lo,
                hi,
            } => {
                let steps = ((hi - lo) / spacing).ceil().max(1.0) as usize;
                (0..=steps)
                    .map(|k| {
                        let t = if k == steps {
                            *hi
                        } else {
                            lo + (hi - lo) * k as f64 / steps as f64
                        };
                        origin.add(&dir.scale(t))
                    })
                    .collect()
            }
            Shape::Polygon(v) => {
                let (mut x0, mut x1, mut y0, mut y1) =
                    (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
                for q in v {
                    x0 = x0.min(q[0]);
                    x1 = x1.max(q[0]);
                    y0 = y0.min(q[1]);
                    y1 = y1.max(q[1]);
                }
                let nx = ((x1 - x0) / spacing).ceil() as usize;
                let ny = ((y1 - y0) / spacing).ceil() as usize;
                let mut out = v.clone();
                for i in 0..=nx {
                    for k in 0..=ny {
                        let p = Point::xy(x0 + i as f64 * spacing, y0 + k as f64 * spacing);
                        if polygon_signed(v, &p) < -self.tol {
                            out.push(p);
                        }
                    }
                }
                out
            }
        }
    }

    /// The widest stretch of a hull edge free of atoms of `nu`, if its
    /// half-width exceeds `min_half_width`. Only planar hulls have relative
    /// boundary that atoms need not cover.
    pub fn widest_boundary_gap(&self, nu: &DiscreteMeasure, min_half_width: f64) -> Option<BoundaryGap> {
        let Shape::Polygon(v) = &self.shape else {
            return None;
        };
        let mut best: Option<BoundaryGap> = None;
        for (a, b) in edges(v) {
            let e = b.sub(a);
            let len = e.norm();
            let dir = e.scale(1.0 / len);
            let normal = Point::xy(dir[1], -dir[0]);
            let mut ts: Vec<f64> = nu
                .points()
                .iter()
                .filter(|p| segment_distance(p, a, b) <= self.tol)
                .map(|p| p.sub(a).dot(&dir).clamp(0.0, len))
                .collect();
            ts.push(0.0);
            ts.push(len);
            ts.sort_by(f64::total_cmp);
            for w in ts.windows(2) {
                let half = 0.5 * (w[1] - w[0]);
                if half > min_half_width && best.as_ref().is_none_or(|g| half > g.half_width) {
                    let point = a.add(&dir.scale(0.5 * (w[0] + w[1])));
                    best = Some(BoundaryGap {
                        offset: normal.dot(&point),
                        point,
                        normal: normal.clone(),
                        half_width: half,
                    });
                }
            }
        }
        best
    }
}

fn project(p: &Point, origin: &Point, dir: &Point) -> (f64, f64) {
    let rel = p.sub(origin);
    let t = rel.dot(dir);
    let perp = rel.sub(&dir.scale(t)).norm();
    (t, perp)
}

fn edges(v: &[Point]) -> impl Iterator<Item = (&Point, &Point)> {
    (0..v.len()).map(move |i| (&v[i], &v[(i + 1) % v.len()]))
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Largest signed distance of `p` beyond the edge lines of a CCW polygon:
/// negative inside (minus the distance to the boundary), positive outside.
fn polygon_signed(v: &[Point], p: &Point) -> f64 {
    edges(v)
        .map(|(a, b)| -cross(a, b, p) / a.dist(b))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let e = b.sub(a);
    let t = (p.sub(a).dot(&e) / e.norm_sq()).clamp(0.0, 1.0);
    p.dist(&a.add(&e.scale(t)))
}

fn planar_shape(points: &[Point]) -> Shape {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() == 1 {
        return Shape::Single(pts[0].clone());
    }
    // Farthest pair from the first point fixes a direction and a scale.
    let far = pts
        .iter()
        .max_by(|a, b| a.dist(&pts[0]).total_cmp(&b.dist(&pts[0])))
        .unwrap()
        .clone();
    let scale = far.dist(&pts[0]);
    let max_cross = pts
        .iter()
        .map(|p| cross(&pts[0], &far, p).abs())
        .fold(0.0, f64::max);
    if max_cross <= 1e-12 * scale * scale {
        let dir = far.sub(&pts[0]).scale(1.0 / scale);
        let origin = pts[0].clone();
        let ts = pts.iter().map(|p| p.sub(&origin).dot(&dir));
        let (lo, hi) = ts.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t), h.max(t)));
        return Shape::Segment {
            origin,
            dir,
            lo,
            hi,
        };
    }
    let eps = 1e-14 * scale * scale;
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Shape::Polygon(lower)
}
