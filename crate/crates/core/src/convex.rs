//! Finite max-of-affine convex functions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::GeometrySummary;
use crate::measure::Point;

/// `y -> <slope, y> + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub slope: Point,
    pub intercept: f64,
}

impl Affine {
    pub fn new(slope: Point, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    pub fn eval(&self, y: &Point) -> f64 {
        self.slope.dot(y) + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPL {
    dim: usize,
    pieces: Vec<Affine>,
}

impl ConvexPL {
    pub fn new(dim: usize, pieces: Vec<Affine>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("max-affine function needs a piece".into()));
        }
        for p in &pieces {
            if p.slope.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.slope.dim(),
                });
            }
            if !p.slope.is_finite() || !p.intercept.is_finite() {
                return Err(Error::InvalidArgument("non-finite affine piece".into()));
            }
        }
        Ok(Self { dim, pieces })
    }

    pub fn affine(slope: Point, intercept: f64) -> Self {
        Self {
            dim: slope.dim(),
            pieces: vec![Affine::new(slope, intercept)],
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::affine(Point::zeros(dim), c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Affine] {
        &self.pieces
    }

    pub fn eval(&self, y: &Point) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval_all(&self, ys: &[Point]) -> Vec<f64> {
        ys.iter().map(|y| self.eval(y)).collect()
    }

    /// `self + <slope, y> + c`.
    pub fn add_affine(&self, slope: &Point, c: f64) -> Self {
        Self {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| Affine::new(p.slope.add(slope), p.intercept + c))
                .collect(),
        }
    }

    /// `s * self` for `s >= 0`.
    pub fn scale(&self, s: f64) -> Self {
        assert!(s >= 0.0, "scaling a convex function by a negative factor");
        Self {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| Affine::new(p.slope.scale(s), p.intercept * s))
                .collect(),
        }
    }

    /// Pointwise sum; the pieces are all pairwise sums.
    pub fn sum(&self, other: &ConvexPL) -> Self {
        let mut pieces = Vec::with_capacity(self.pieces.len() * other.pieces.len());
        for a in &self.pieces {
            for b in &other.pieces {
                pieces.push(Affine::new(a.slope.add(&b.slope), a.intercept + b.intercept));
            }
        }
        Self {
            dim: self.dim,
            pieces,
        }
        .dedup()
    }

    /// Pointwise maximum.
    pub fn max(&self, other: &ConvexPL) -> Self {
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Self {
            dim: self.dim,
            pieces,
        }
        .dedup()
    }

    fn dedup(mut self) -> Self {
        let mut out: Vec<Affine> = Vec::with_capacity(self.pieces.len());
        for p in self.pieces.drain(..) {
            if let Some(q) = out.iter_mut().find(|q| q.slope == p.slope) {
                q.intercept = q.intercept.max(p.intercept);
            } else {
                out.push(p);
            }
        }
        self.pieces = out;
        self
    }

    /// Drops pieces that are never within `tol` of the maximum on `grid`.
    /// Values on the grid are unchanged.
    pub fn prune(&self, grid: &[Point], tol: f64) -> Self {
        let mut keep = vec![false; self.pieces.len()];
        for y in grid {
            let v = self.eval(y);
            for (k, p) in self.pieces.iter().enumerate() {
                if p.eval(y) >= v - tol {
                    keep[k] = true;
                }
            }
        }
        let pieces: Vec<Affine> = self
            .pieces
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(p, _)| p.clone())
            .collect();
        Self {
            dim: self.dim,
            pieces,
        }
    }

    /// Slopes of the pieces active at `y` (within `tol`); their convex hull
    /// is the subdifferential.
    pub fn active_slopes(&self, y: &Point, tol: f64) -> Vec<Point> {
        let v = self.eval(y);
        let mut out: Vec<Point> = Vec::new();
        for p in &self.pieces {
            if p.eval(y) >= v - tol && !out.contains(&p.slope) {
                out.push(p.slope.clone());
            }
        }
        out
    }

    /// `max_k (<a_k, y> + b_k)` with `k` pieces, slopes of norm at most
    /// `slope_scale` and intercepts in `[-1, 0]`.
    pub fn random<R: Rng>(dim: usize, k: usize, slope_scale: f64, rng: &mut R) -> Self {
        let pieces = (0..k.max(1))
            .map(|_| {
                let slope = match dim {
                    1 => Point::scalar(rng.gen_range(-1.0..=1.0) * slope_scale),
                    _ => {
                        let t = rng.gen_range(0.0..std::f64::consts::TAU);
                        let r = slope_scale * rng.gen_range(0.0..=1.0f64).sqrt();
                        Point::xy(r * t.cos(), r * t.sin())
                    }
                };
                Affine::new(slope, -rng.gen_range(0.0..=1.0))
            })
            .collect();
        Self { dim, pieces }
    }
}

/// Subtracts the affine function supporting `psi` at `anchor` whose slope
/// is the centroid of the subdifferential there. The result is nonnegative
/// and vanishes at `anchor`. Also returns the removed slope and constant, so
/// that `psi = result + <slope, y> + constant`.
pub fn normalize_affine_parts(psi: &ConvexPL, anchor: &Point) -> (ConvexPL, Point, f64) {
    let tol = 1e-9 * (1.0 + psi.eval(anchor).abs());
    let slopes = psi.active_slopes(anchor, tol);
    let slope = subdifferential_centroid(psi.dim(), &slopes);
    let constant = psi.eval(anchor) - slope.dot(anchor);
    let out = psi.add_affine(&slope.scale(-1.0), -constant);
    (out, slope, constant)
}

pub fn normalize_affine(psi: &ConvexPL, anchor: &Point) -> ConvexPL {
    normalize_affine_parts(psi, anchor).0
}

/// Canonical representative modulo affine functions: [`normalize_affine`]
/// at `anchor`, then shifted so the minimum over `grid` is zero. Returns the
/// result and the removed slope.
pub fn canonicalize(psi: &ConvexPL, anchor: &Point, grid: &[Point]) -> (ConvexPL, Point) {
    let (normalized, slope, _) = normalize_affine_parts(psi, anchor);
    let low = grid
        .iter()
        .map(|y| normalized.eval(y))
        .fold(f64::INFINITY, f64::min);
    let low = if low.is_finite() { low } else { 0.0 };
    let out = normalized.add_affine(&Point::zeros(psi.dim()), -low);
    (out, slope)
}

fn subdifferential_centroid(dim: usize, slopes: &[Point]) -> Point {
    if slopes.len() == 1 {
        return slopes[0].clone();
    }
    if dim == 1 {
        let lo = slopes.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().map(|s| s[0]).fold(f64::NEG_INFINITY, f64::max);
        return Point::scalar(0.5 * (lo + hi));
    }
    let hull = GeometrySummary::from_points(dim, slopes, 0.0).hull_vertices();
    match hull.len() {
        1 => hull[0].clone(),
        2 => hull[0].add(&hull[1]).scale(0.5),
        _ => polygon_centroid(&hull),
    }
}

fn polygon_centroid(v: &[Point]) -> Point {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    let o = &v[0];
    for i in 1..v.len() - 1 {
        let (p, q) = (v[i].sub(o), v[i + 1].sub(o));
        let t = 0.5 * (p[0] * q[1] - p[1] * q[0]);
        a += t;
        cx += t * (p[0] + q[0]) / 3.0;
        cy += t * (p[1] + q[1]) / 3.0;
    }
    Point::xy(o[0] + cx / a, o[1] + cy / a)
}

/// Lower convex envelope of the lifted points `(y, v)`, as a max-affine
/// function. It agrees with `values` at every point on the envelope and
/// lies below elsewhere.
pub fn envelope(points: &[Point], values: &[f64]) -> Result<ConvexPL> {
    if points.is_empty() || points.len() != values.len() {
        return Err(Error::InvalidArgument("envelope needs one value per point".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite envelope value".into()));
    }
    let dim = points[0].dim();
    let geo = GeometrySummary::from_points(dim, points, 0.0);
    match geo.dim_affine_hull() {
        0 => {
            let v = values.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(ConvexPL::constant(dim, v))
        }
        1 => {
            // Work along the line through the support.
            let ends = geo.hull_vertices();
            let origin = ends[0].clone();
            let dir = ends[1].sub(&origin);
            let dir = dir.scale(1.0 / dir.norm());
            let ts: Vec<f64> = points.iter().map(|p| p.sub(&origin).dot(&dir)).collect();
            let mut pieces = Vec::new();
            for (a, b) in envelope_1d(&ts, values) {
                // a t + b with t = <dir, y - origin>
                pieces.push(Affine::new(dir.scale(a), b - a * dir.dot(&origin)));
            }
            ConvexPL::new(dim, pieces)
        }
        _ => envelope_2d(points, values),
    }
}

/// Lines `(slope, intercept)` of the lower hull of `(t_i, v_i)`.
fn envelope_1d(ts: &[f64], vs: &[f64]) -> Vec<(f64, f64)> {
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]).then(vs[a].total_cmp(&vs[b])));
    // Among equal abscissae keep the lowest value.
    idx.dedup_by(|b, a| ts[*a] == ts[*b]);
    let mut hull: Vec<usize> = Vec::new();
    for &k in &idx {
        while hull.len() >= 2 {
            let (i, j) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (ts[j] - ts[i]) * (vs[k] - vs[i]) - (vs[j] - vs[i]) * (ts[k] - ts[i]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    if hull.len() == 1 {
        return vec![(0.0, vs[hull[0]])];
    }
    hull.windows(2)
        .map(|w| {
            let (i, j) = (w[0], w[1]);
            let a = (vs[j] - vs[i]) / (ts[j] - ts[i]);
            (a, vs[i] - a * ts[i])
        })
        .collect()
}

fn envelope_2d(points: &[Point], values: &[f64]) -> Result<ConvexPL> {
    let n = points.len();
    let vscale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * vscale;
    let mut pieces: Vec<Affine> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (p, q, r) = (&points[i], &points[j], &points[k]);
                let (e1, e2) = (q.sub(p), r.sub(p));
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                if det.abs() <= 1e-12 * e1.norm() * e2.norm() {
                    continue;
                }
                let (d1, d2) = (values[j] - values[i], values[k] - values[i]);
                let a = Point::xy((d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det);
                let b = values[i] - a.dot(p);
                let plane = Affine::new(a, b);
                let supporting = (0..n).all(|l| values[l] >= plane.eval(&points[l]) - tol);
                if supporting
                    && !pieces.iter().any(|f| {
                        f.slope.dist(&plane.slope) <= 1e-9 * (1.0 + f.slope.norm())
                            && (f.intercept - plane.intercept).abs() <= 1e-9 * vscale
                    })
                {
                    pieces.push(plane);
                }
            }
        }
    }
    ConvexPL::new(2, pieces)
}
