//! Finitely supported probability measures on R^d (d = 1 or 2).

use std::collections::HashMap;
use std::fmt;

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Weights must sum to one within this before renormalization.
const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }

    /// Bit pattern key with `-0.0` folded onto `0.0`.
    pub(crate) fn key(&self) -> Vec<u64> {
        self.0
            .iter()
            .map(|&c| if c == 0.0 { 0.0f64 } else { c }.to_bits())
            .collect()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a probability measure from atoms whose weights already sum to
    /// one (within 1e-9; the residual is renormalized away). Duplicate points
    /// are merged by summing weights.
    pub fn new(dim: usize, atoms: Vec<(Point, f64)>) -> Result<Self> {
        let m = Self::merge(dim, atoms)?;
        let total: f64 = m.weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(m.renormalized(total))
    }

    /// Like [`DiscreteMeasure::new`] but rescales arbitrary positive weights.
    pub fn from_unnormalized(dim: usize, atoms: Vec<(Point, f64)>) -> Result<Self> {
        let m = Self::merge(dim, atoms)?;
        let total: f64 = m.weights.iter().sum();
        Ok(m.renormalized(total))
    }

    /// Drops masses `<= min_mass` and renormalizes the rest. Used to read
    /// measures off LP solutions, where exact zeros come back as dust.
    pub fn from_masses(dim: usize, points: &[Point], masses: &[f64], min_mass: f64) -> Result<Self> {
        let atoms = points
            .iter()
            .zip(masses)
            .filter(|(_, &w)| w > min_mass)
            .map(|(p, &w)| (p.clone(), w))
            .collect();
        Self::from_unnormalized(dim, atoms)
    }

    pub fn dirac(p: Point) -> Self {
        Self {
            dim: p.dim(),
            points: vec![p],
            weights: vec![1.0],
        }
    }

    /// Equal weights on the given points.
    pub fn uniform(dim: usize, points: Vec<Point>) -> Result<Self> {
        let n = points.len() as f64;
        Self::from_unnormalized(dim, points.into_iter().map(|p| (p, 1.0 / n)).collect())
    }

    fn merge(dim: usize, atoms: Vec<(Point, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::UnsupportedDimension(0));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (k, (p, w)) in atoms.into_iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
            if !p.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom {k} has a non-finite coordinate")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k} has weight {w}, expected a positive finite number"
                )));
            }
            match index.get(&p.key()) {
                Some(&i) => weights[i] += w,
                None => {
                    index.insert(p.key(), points.len());
                    points.push(p);
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Weights already summing to one within round-off are kept bit for bit,
    /// so normalizing twice is a no-op.
    fn renormalized(mut self, total: f64) -> Self {
        if (total - 1.0).abs() <= self.weights.len() as f64 * f64::EPSILON {
            return self;
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Index of the atom at exactly `p`, if any.
    pub fn find(&self, p: &Point) -> Option<usize> {
        let key = p.key();
        self.points.iter().position(|q| q.key() == key)
    }

    pub fn barycenter(&self) -> Point {
        let mut acc = vec![0.0; self.dim];
        for (p, w) in self.atoms() {
            for (a, c) in acc.iter_mut().zip(p.coords()) {
                *a += w * c;
            }
        }
        Point(acc)
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms().map(|(p, w)| w * p.norm_sq()).sum()
    }

    /// Integral of `f` against the measure.
    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(p, w)| w * f(p)).sum()
    }

    /// Image under `p -> -p`.
    pub fn reflected(&self) -> Self {
        Self {
            dim: self.dim,
            points: self.points.iter().map(|p| p.scale(-1.0)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Restriction to the atoms selected by `keep`, renormalized.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("empty restriction".into()));
        }
        Self::from_unnormalized(
            self.dim,
            keep.iter()
                .map(|&i| (self.points[i].clone(), self.weights[i]))
                .collect(),
        )
    }

    pub fn mass_of(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.weights[i]).sum()
    }
}

/// Equal-probability quantization of the standard Gaussian on R^d.
///
/// In one dimension each of the `n` cells `(q_{k-1}, q_k]` between consecutive
/// `k/n` quantiles is represented by its conditional mean, and the result is
/// symmetrized so the barycenter is exactly zero. In two dimensions the
/// measure is the product of two one-dimensional grids with `sqrt(n)` points.
pub fn quantize_gaussian(dim: usize, n: usize) -> Result<DiscreteMeasure> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 gaussian points, got {n}")));
    }
    match dim {
        1 => {
            let z = gaussian_cell_means(n);
            let points = mirrored_order(&[n])
                .into_iter()
                .map(|ix| Point::scalar(z[ix[0]]))
                .collect();
            Ok(DiscreteMeasure {
                dim: 1,
                points,
                weights: vec![1.0 / n as f64; n],
            })
        }
        2 => {
            let s = (n as f64).sqrt().round() as usize;
            if s * s != n {
                return Err(Error::InvalidArgument(format!(
                    "two-dimensional quantization needs a perfect square, got {n}"
                )));
            }
            if s < 2 {
                return Err(Error::InvalidArgument("need at least 2 points per axis".into()));
            }
            let z = gaussian_cell_means(s);
            let points = mirrored_order(&[s, s])
                .into_iter()
                .map(|ix| Point::xy(z[ix[0]], z[ix[1]]))
                .collect();
            Ok(DiscreteMeasure {
                dim: 2,
                points,
                weights: vec![1.0 / n as f64; n],
            })
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Grid multi-indices ordered so each point is immediately followed by its
/// mirror image. Accumulating weighted coordinates in this order cancels
/// exactly, which keeps the barycenter at zero bit for bit.
fn mirrored_order(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut ix = Vec::with_capacity(sizes.len());
        let mut r = flat;
        for &s in sizes.iter().rev() {
            ix.push(r % s);
            r /= s;
        }
        ix.reverse();
        let mirror: Vec<usize> = ix.iter().zip(sizes).map(|(&i, &s)| s - 1 - i).collect();
        if ix < mirror {
            out.push(ix);
            out.push(mirror);
        } else if ix == mirror {
            out.push(ix);
        }
    }
    out
}

fn gaussian_cell_means(n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let nf = n as f64;
    let density_at = |k: usize| -> f64 {
        if k == 0 || k == n {
            0.0
        } else {
            normal.pdf(normal.inverse_cdf(k as f64 / nf))
        }
    };
    let raw: Vec<f64> = (1..=n).map(|k| nf * (density_at(k - 1) - density_at(k))).collect();
    (0..n).map(|k| 0.5 * (raw[k] - raw[n - 1 - k])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (Point::scalar(x), w)).collect()).unwrap()
    }

    #[test]
    fn barycenter_examples() {
        let d = DiscreteMeasure::dirac(Point::xy(2.0, -1.0));
        assert_eq!(d.barycenter(), Point::xy(2.0, -1.0));
        assert_eq!(line(&[(-1.0, 0.5), (1.0, 0.5)]).barycenter()[0], 0.0);
        assert!((line(&[(0.0, 0.3), (10.0, 0.7)]).barycenter()[0] - 7.0).abs() < 1e-14);
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(DiscreteMeasure::dirac(Point::scalar(0.0)).second_moment(), 0.0);
        assert_eq!(line(&[(-1.0, 0.5), (1.0, 0.5)]).second_moment(), 1.0);
        let t = DiscreteMeasure::uniform(
            2,
            vec![Point::xy(0.0, 0.0), Point::xy(3.0, 0.0), Point::xy(0.0, 4.0)],
        )
        .unwrap();
        assert!((t.second_moment() - 25.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn merges_duplicates_and_rejects_bad_weights() {
        let m = line(&[(1.0, 0.25), (1.0, 0.25), (-0.0, 0.5)]);
        assert_eq!(m.len(), 2);
        assert_eq!(m.weight(0), 0.5);
        assert!(DiscreteMeasure::new(1, vec![(Point::scalar(0.0), 0.5)]).is_err());
        assert!(DiscreteMeasure::new(1, vec![(Point::scalar(0.0), -1.0)]).is_err());
        assert!(DiscreteMeasure::new(1, vec![(Point::scalar(f64::NAN), 1.0)]).is_err());
        assert!(DiscreteMeasure::new(2, vec![(Point::scalar(0.0), 1.0)]).is_err());
    }

    #[test]
    fn two_point_quantization_is_half_normal_mean() {
        let g = quantize_gaussian(1, 2).unwrap();
        let c = (2.0 / std::f64::consts::PI).sqrt();
        assert!((g.point(1)[0] - c).abs() < 1e-12);
        assert_eq!(g.point(0)[0], -g.point(1)[0]);
    }

    #[test]
    fn quantization_is_centered_and_symmetric() {
        for n in [2, 3, 7, 32, 64, 65] {
            let g = quantize_gaussian(1, n).unwrap();
            assert_eq!(g.barycenter()[0], 0.0, "n = {n}");
            let r = g.reflected();
            for p in r.points() {
                assert!(g.find(p).is_some());
            }
        }
        let g = quantize_gaussian(2, 64).unwrap();
        assert_eq!(g.barycenter(), Point::xy(0.0, 0.0));
        assert!(quantize_gaussian(2, 60).is_err());
        assert!(quantize_gaussian(3, 64).is_err());
        assert!(quantize_gaussian(1, 1).is_err());
    }

    /// Second moment of the cell-mean quantizer by direct quadrature:
    /// sum over cells of (mass * conditional mean^2), with the conditional
    /// mean computed by trapezoid integration of z * pdf(z).
    fn quadrature_second_moment(n: usize) -> f64 {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut total = 0.0;
        for k in 1..=n {
            let a = if k == 1 { -12.0 } else { normal.inverse_cdf((k - 1) as f64 / n as f64) };
            let b = if k == n { 12.0 } else { normal.inverse_cdf(k as f64 / n as f64) };
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            let mut first = 0.0;
            for s in 0..=steps {
                let z = a + s as f64 * h;
                let wgt = if s == 0 || s == steps { 0.5 } else { 1.0 };
                first += wgt * z * normal.pdf(z) * h;
            }
            let mean = first * n as f64;
            total += mean * mean / n as f64;
        }
        total
    }

    #[test]
    fn second_moment_of_64_points_matches_quadrature() {
        let oracle = quadrature_second_moment(64);
        let g = quantize_gaussian(1, 64).unwrap();
        assert!((g.second_moment() - oracle).abs() < 1e-6);
        assert!((0.98..=1.0).contains(&g.second_moment()));
        let g32 = quantize_gaussian(1, 32).unwrap();
        assert!((g32.second_moment() - 1.0).abs() <= 0.02);
        // Product grid: each axis carries the one-dimensional grid.
        let g2 = quantize_gaussian(2, 64).unwrap();
        let axis = quantize_gaussian(1, 8).unwrap().second_moment();
        assert!((g2.second_moment() - 2.0 * axis).abs() < 1e-12);
        let g2 = quantize_gaussian(2, 1024).unwrap();
        assert!((g2.second_moment() - 2.0).abs() <= 0.04);
    }
}
