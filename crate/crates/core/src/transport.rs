//! Couplings, martingale transports, maximal covariance and W2.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::measure::{DiscreteMeasure, Point};
use crate::tolerance::TAU_LP;

/// Masses at or below this fraction of their row are dropped when a kernel
/// is read off a coupling.
const KERNEL_DUST: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: DiscreteMeasure,
    cols: DiscreteMeasure,
    /// Row-major `rows.len() x cols.len()`.
    mass: Vec<f64>,
}

impl Coupling {
    /// Wraps a mass matrix, clamping round-off negatives to zero. Marginals
    /// must match within `TAU_LP`.
    pub fn new(rows: DiscreteMeasure, cols: DiscreteMeasure, mut mass: Vec<f64>) -> Result<Self> {
        let (n, m) = (rows.len(), cols.len());
        if mass.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "coupling has {} entries, expected {}",
                mass.len(),
                n * m
            )));
        }
        if rows.dim() != cols.dim() {
            return Err(Error::DimensionMismatch {
                expected: rows.dim(),
                got: cols.dim(),
            });
        }
        for v in &mut mass {
            if !v.is_finite() || *v < -TAU_LP {
                return Err(Error::InvalidArgument(format!("invalid coupling mass {v}")));
            }
            *v = v.max(0.0);
        }
        let c = Self { rows, cols, mass };
        let res = c.marginal_residual();
        if res > TAU_LP {
            return Err(Error::InvalidArgument(format!(
                "coupling marginals off by {res:e}"
            )));
        }
        Ok(c)
    }

    pub fn product(rows: &DiscreteMeasure, cols: &DiscreteMeasure) -> Self {
        let mut mass = Vec::with_capacity(rows.len() * cols.len());
        for &a in rows.weights() {
            for &b in cols.weights() {
                mass.push(a * b);
            }
        }
        Self {
            rows: rows.clone(),
            cols: cols.clone(),
            mass,
        }
    }

    pub fn identity(m: &DiscreteMeasure) -> Self {
        let n = m.len();
        let mut mass = vec![0.0; n * n];
        for i in 0..n {
            mass[i * n + i] = m.weight(i);
        }
        Self {
            rows: m.clone(),
            cols: m.clone(),
            mass,
        }
    }

    pub fn rows(&self) -> &DiscreteMeasure {
        &self.rows
    }

    pub fn cols(&self) -> &DiscreteMeasure {
        &self.cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.cols.len();
        &self.mass[i * m..(i + 1) * m]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn marginal_residual(&self) -> f64 {
        let m = self.cols.len();
        let mut worst = 0.0f64;
        let mut col = vec![0.0; m];
        for i in 0..self.rows.len() {
            let r = self.row(i);
            worst = worst.max((r.iter().sum::<f64>() - self.rows.weight(i)).abs());
            for (c, v) in col.iter_mut().zip(r) {
                *c += v;
            }
        }
        for (j, c) in col.iter().enumerate() {
            worst = worst.max((c - self.cols.weight(j)).abs());
        }
        worst
    }

    /// `sum f(x, y) pi(x, y)`.
    pub fn integrate<F: Fn(&Point, &Point) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for (i, x) in self.rows.points().iter().enumerate() {
            for (j, y) in self.cols.points().iter().enumerate() {
                let w = self.mass(i, j);
                if w != 0.0 {
                    acc += w * f(x, y);
                }
            }
        }
        acc
    }

    /// Conditional law of the column variable given row atom `i`.
    pub fn kernel(&self, i: usize) -> DiscreteMeasure {
        let row = self.row(i);
        let total: f64 = row.iter().sum();
        DiscreteMeasure::from_masses(self.cols.dim(), self.cols.points(), row, KERNEL_DUST * total)
            .expect("row of a valid coupling has positive mass")
    }

    /// Transposed coupling.
    pub fn transpose(&self) -> Self {
        let (n, m) = (self.rows.len(), self.cols.len());
        let mut mass = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                mass[j * n + i] = self.mass[i * m + j];
            }
        }
        Self {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            mass,
        }
    }
}

/// A coupling whose kernels have barycenter equal to their row atom.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTransport {
    coupling: Coupling,
}

impl MartingaleTransport {
    pub fn new(coupling: Coupling) -> Result<Self> {
        let mt = Self { coupling };
        let res = mt.martingale_residual();
        if res > TAU_LP {
            return Err(Error::InvalidArgument(format!(
                "kernel barycenters miss their row atoms by {res:e}"
            )));
        }
        Ok(mt)
    }

    pub fn identity(m: &DiscreteMeasure) -> Self {
        Self {
            coupling: Coupling::identity(m),
        }
    }

    /// `mu(dx) k_x(dy)` with the column measure assembled from the kernels.
    pub fn from_kernels(mu: &DiscreteMeasure, kernels: &[DiscreteMeasure]) -> Result<Self> {
        if kernels.len() != mu.len() {
            return Err(Error::InvalidArgument("one kernel per row atom required".into()));
        }
        let mut atoms = Vec::new();
        for (k, (_, w)) in kernels.iter().zip(mu.atoms()) {
            for (y, p) in k.atoms() {
                atoms.push((y.clone(), w * p));
            }
        }
        let cols = DiscreteMeasure::from_unnormalized(mu.dim(), atoms)?;
        let m = cols.len();
        let mut mass = vec![0.0; mu.len() * m];
        for (i, (k, w)) in kernels.iter().zip(mu.weights()).enumerate() {
            for (y, p) in k.atoms() {
                let j = cols.find(y).expect("kernel atom present in column measure");
                mass[i * m + j] += w * p;
            }
        }
        Self::new(Coupling::new(mu.clone(), cols, mass)?)
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        self.coupling.rows()
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        self.coupling.cols()
    }

    pub fn kernel(&self, i: usize) -> DiscreteMeasure {
        self.coupling.kernel(i)
    }

    /// Largest `|sum_y (y - x) pi(x, y)| / mu(x)` over row atoms and axes.
    pub fn martingale_residual(&self) -> f64 {
        let c = &self.coupling;
        let mut worst = 0.0f64;
        for (i, x) in c.rows().points().iter().enumerate() {
            let mut drift = vec![0.0; x.dim()];
            for (j, y) in c.cols().points().iter().enumerate() {
                let w = c.mass(i, j);
                for (k, d) in drift.iter_mut().enumerate() {
                    *d += w * (y[k] - x[k]);
                }
            }
            let mass = c.rows().weight(i);
            for d in drift {
                worst = worst.max(d.abs() / mass);
            }
        }
        worst
    }
}

/// Equality rows of `MT(mu, nu)` on variables `offset + i * |nu| + j`:
/// row sums, column sums and one drift row per (row atom, axis).
pub(crate) fn add_martingale_rows(
    lp: &mut LinearProgram,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    offset: usize,
) -> Result<()> {
    let (n, m) = (mu.len(), nu.len());
    let var = |i: usize, j: usize| offset + i * m + j;
    for i in 0..n {
        lp.add_constraint((0..m).map(|j| (var(i, j), 1.0)), mu.weight(i))?;
    }
    for j in 0..m {
        lp.add_constraint((0..n).map(|i| (var(i, j), 1.0)), nu.weight(j))?;
    }
    for (i, x) in mu.points().iter().enumerate() {
        for k in 0..mu.dim() {
            lp.add_constraint(
                nu.points().iter().enumerate().map(|(j, y)| (var(i, j), y[k] - x[k])),
                0.0,
            )?;
        }
    }
    Ok(())
}

pub(crate) fn martingale_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, sense: Sense) -> Result<LinearProgram> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let mut lp = LinearProgram::new(mu.len() * nu.len(), sense);
    add_martingale_rows(&mut lp, mu, nu, 0)?;
    Ok(lp)
}

#[derive(Debug, Clone)]
pub struct ConvexOrder {
    pub holds: bool,
    pub witness: Option<MartingaleTransport>,
    /// Farkas multipliers over the rows of the martingale-transport LP
    /// (row sums, then column sums, then drift rows).
    pub certificate: Option<Vec<f64>>,
}

/// Decides `mu <=_c nu` by feasibility of `MT(mu, nu)`.
pub fn check_convex_order(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrder> {
    let lp = martingale_lp(mu, nu, Sense::Minimize)?;
    let f = lp::check_feasible(&lp)?;
    if !f.feasible {
        return Ok(ConvexOrder {
            holds: false,
            witness: None,
            certificate: f.certificate,
        });
    }
    let coupling = Coupling::new(mu.clone(), nu.clone(), f.witness.expect("feasible witness"))?;
    Ok(ConvexOrder {
        holds: true,
        witness: Some(MartingaleTransport::new(coupling)?),
        certificate: None,
    })
}

fn transport_lp<F: Fn(&Point, &Point) -> f64>(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    sense: Sense,
    cost: F,
) -> Result<(f64, Coupling)> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let (n, m) = (p.len(), q.len());
    let mut lp = LinearProgram::new(n * m, sense);
    let mut c = Vec::with_capacity(n * m);
    for x in p.points() {
        for y in q.points() {
            c.push(cost(x, y));
        }
    }
    lp.set_objective(c)?;
    for i in 0..n {
        lp.add_constraint((0..m).map(|j| (i * m + j, 1.0)), p.weight(i))?;
    }
    for j in 0..m {
        lp.add_constraint((0..n).map(|i| (i * m + j, 1.0)), q.weight(j))?;
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numeric(format!("transport LP ended {:?}", sol.status)));
    }
    Ok((sol.objective_value, Coupling::new(p.clone(), q.clone(), sol.primal)?))
}

/// Maximal covariance `sup_{pi in cpl(p, q)} int <x, y> dpi` by LP.
pub fn mcov(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<(f64, Coupling)> {
    transport_lp(p, q, Sense::Maximize, |x, y| x.dot(y))
}

/// One-dimensional maximal covariance through the comonotone coupling.
pub fn mcov_1d(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    for m in [p, q] {
        if m.dim() != 1 {
            return Err(Error::UnsupportedDimension(m.dim()));
        }
    }
    let sorted = |m: &DiscreteMeasure| {
        let mut v: Vec<(f64, f64)> = m.atoms().map(|(x, w)| (x[0], w)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(p), sorted(q));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let t = ra.min(rb);
        acc += t * a[i].0 * b[j].0;
        ra -= t;
        rb -= t;
        // Advance whichever side is exhausted; on the last atom, any
        // leftover is round-off and is swept into the final pairing.
        if ra <= rb {
            i += 1;
            if i == a.len() {
                break;
            }
            ra += a[i].1;
        } else {
            j += 1;
            if j == b.len() {
                break;
            }
            rb += b[j].1;
        }
    }
    Ok(acc)
}

/// `mcov` by the cheapest exact route for the dimension.
pub fn mcov_value(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    if p.dim() == 1 && q.dim() == 1 {
        mcov_1d(p, q)
    } else {
        Ok(mcov(p, q)?.0)
    }
}

/// Squared W2 computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Squared {
    /// `min int |x - y|^2 dpi` by LP.
    pub direct: f64,
    /// `sm(p) - 2 mcov(p, q) + sm(q)`.
    pub via_mcov: f64,
}

pub fn w2sq(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<W2Squared> {
    let (direct, _) = transport_lp(p, q, Sense::Minimize, |x, y| x.sub(y).norm_sq())?;
    let (cov, _) = mcov(p, q)?;
    Ok(W2Squared {
        direct,
        via_mcov: p.second_moment() - 2.0 * cov + q.second_moment(),
    })
}

/// W2 distance by the cheapest exact route for the dimension.
pub fn w2(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let sq = if p.dim() == 1 {
        p.second_moment() - 2.0 * mcov_1d(p, q)? + q.second_moment()
    } else {
        w2sq(p, q)?.direct
    };
    Ok(sq.max(0.0).sqrt())
}

/// Law of `(A, B, Z)` on `spt alpha x spt beta x spt zeta`.
#[derive(Debug, Clone)]
pub struct TripleLaw {
    pub alpha: DiscreteMeasure,
    pub beta: DiscreteMeasure,
    pub zeta: DiscreteMeasure,
    /// `(a, b, z, weight)` index triples with positive weight.
    pub atoms: Vec<(usize, usize, usize, f64)>,
}

impl TripleLaw {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.3).sum()
    }

    /// Row-major `|alpha| x |beta|` marginal.
    pub fn ab_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alpha.len() * self.beta.len()];
        for &(a, b, _, w) in &self.atoms {
            out[a * self.beta.len() + b] += w;
        }
        out
    }

    /// Row-major `|alpha| x |zeta|` marginal.
    pub fn az_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.alpha.len() * self.zeta.len()];
        for &(a, _, z, w) in &self.atoms {
            out[a * self.zeta.len() + z] += w;
        }
        out
    }

    /// `max over charged (a, z) of |E[B | A = a, Z = z] - a|`.
    pub fn max_conditional_mean_deviation(&self) -> f64 {
        let (nz, d) = (self.zeta.len(), self.alpha.dim());
        let mut mass = vec![0.0; self.alpha.len() * nz];
        let mut first = vec![0.0; self.alpha.len() * nz * d];
        for &(a, b, z, w) in &self.atoms {
            let k = a * nz + z;
            mass[k] += w;
            for c in 0..d {
                first[k * d + c] += w * self.beta.point(b)[c];
            }
        }
        let mut worst = 0.0f64;
        for (k, &m) in mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let a = self.alpha.point(k / nz);
            let dev: f64 = (0..d).map(|c| (first[k * d + c] / m - a[c]).powi(2)).sum();
            worst = worst.max(dev.sqrt());
        }
        worst
    }
}

/// Glues a martingale transport `alpha -> beta` and a coupling
/// `alpha -> zeta` along their common first marginal by multiplying kernels:
/// `alpha(da) pi1_a(db) pi2_a(dz)`.
pub fn strassen_extend(pi1: &MartingaleTransport, pi2: &Coupling) -> Result<TripleLaw> {
    let alpha = pi1.mu();
    let other = pi2.rows();
    if alpha.len() != other.len() {
        return Err(Error::Precondition("first marginals have different supports".into()));
    }
    let mut map = Vec::with_capacity(alpha.len());
    for (x, w) in alpha.atoms() {
        let k = other
            .find(x)
            .ok_or_else(|| Error::Precondition(format!("atom {x} missing from second coupling")))?;
        if (other.weight(k) - w).abs() > TAU_LP {
            return Err(Error::Precondition(format!("first marginals disagree at {x}")));
        }
        map.push(k);
    }
    let mut atoms = Vec::new();
    for (a, &w) in alpha.weights().iter().enumerate() {
        let row2 = pi2.row(map[a]);
        let w2 = other.weight(map[a]);
        for (b, &p1) in pi1.coupling().row(a).iter().enumerate() {
            if p1 <= 0.0 {
                continue;
            }
            for (z, &p2) in row2.iter().enumerate() {
                if p2 > 0.0 {
                    atoms.push((a, b, z, w * (p1 / w) * (p2 / w2)));
                }
            }
        }
    }
    Ok(TripleLaw {
        alpha: alpha.clone(),
        beta: pi1.nu().clone(),
        zeta: pi2.cols().clone(),
        atoms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McovChain {
    /// `<bary alpha, bary zeta>`.
    pub bary_term: f64,
    pub mcov_alpha: f64,
    pub mcov_beta: f64,
    /// `(sm beta + sm zeta) / 2`.
    pub moment_bound: f64,
}

impl McovChain {
    pub fn gaps(&self) -> [f64; 3] {
        [
            self.mcov_alpha - self.bary_term,
            self.mcov_beta - self.mcov_alpha,
            self.moment_bound - self.mcov_beta,
        ]
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.gaps().iter().all(|&g| g >= -tol)
    }
}

/// Evaluates `<bary a, bary z> <= mcov(a, z) <= mcov(b, z) <= (sm b + sm z)/2`
/// for `alpha <=_c beta`.
pub fn verify_mcov_chain(
    alpha: &DiscreteMeasure,
    beta: &DiscreteMeasure,
    zeta: &DiscreteMeasure,
) -> Result<McovChain> {
    let order = check_convex_order(alpha, beta)?;
    if !order.holds {
        return Err(Error::NotInConvexOrder {
            certificate: order.certificate.unwrap_or_default(),
        });
    }
    Ok(McovChain {
        bary_term: alpha.barycenter().dot(&zeta.barycenter()),
        mcov_alpha: mcov(alpha, zeta)?.0,
        mcov_beta: mcov(beta, zeta)?.0,
        moment_bound: 0.5 * (beta.second_moment() + zeta.second_moment()),
    })
}

/// Replaces every atom `(x, w)` by `x +- s u` with weight `w / 2` each, for a
/// random direction `u` and spread `s in (0, max_spread]`. The result
/// dominates the input in convex order.
pub fn mean_preserving_split<R: Rng>(m: &DiscreteMeasure, max_spread: f64, rng: &mut R) -> DiscreteMeasure {
    let mut atoms = Vec::with_capacity(2 * m.len());
    for (x, w) in m.atoms() {
        let u = match m.dim() {
            1 => Point::scalar(1.0),
            _ => {
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::xy(t.cos(), t.sin())
            }
        };
        let s = max_spread * rng.gen_range(0.05..=1.0);
        atoms.push((x.add(&u.scale(s)), 0.5 * w));
        atoms.push((x.sub(&u.scale(s)), 0.5 * w));
    }
    DiscreteMeasure::from_unnormalized(m.dim(), atoms).expect("split of a valid measure")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (Point::scalar(x), w)).collect()).unwrap()
    }

    fn pm1() -> DiscreteMeasure {
        line(&[(-1.0, 0.5), (1.0, 0.5)])
    }

    #[test]
    fn convex_order_examples() {
        let dirac0 = DiscreteMeasure::dirac(Point::scalar(0.0));
        let r = check_convex_order(&dirac0, &pm1()).unwrap();
        assert!(r.holds);
        let k = r.witness.unwrap().kernel(0);
        assert_eq!(k, pm1());

        let r = check_convex_order(&DiscreteMeasure::dirac(Point::scalar(1.0)), &pm1()).unwrap();
        assert!(!r.holds);
        let lp = martingale_lp(&DiscreteMeasure::dirac(Point::scalar(1.0)), &pm1(), Sense::Minimize).unwrap();
        assert!(lp::verify_farkas(&lp, &r.certificate.unwrap(), 1e-12));

        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let nu = line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let r = check_convex_order(&mu, &nu).unwrap();
        assert!(r.holds);
        assert!(r.witness.unwrap().martingale_residual() < 1e-12);
    }

    /// Brute force for the three-atom example: scan pi(-1/2, .) = (p, q, r)
    /// on a grid; the row from +1/2 is then forced by the column sums.
    #[test]
    fn convex_order_example_by_grid_search() {
        let third = 1.0 / 3.0;
        let mut found = false;
        let steps = 600;
        for a in 0..=steps {
            for b in 0..=steps - a {
                let p = a as f64 / steps as f64 * 0.5;
                let q = b as f64 / steps as f64 * 0.5;
                let r = 0.5 - p - q;
                let (p2, q2, r2) = (third - p, third - q, third - r);
                if p2 < -1e-12 || q2 < -1e-12 || r2 < -1e-12 {
                    continue;
                }
                let drift1 = -p + r + 0.5 * 0.5;
                let drift2 = -p2 + r2 - 0.5 * 0.5;
                if drift1.abs() < 1e-9 && drift2.abs() < 1e-9 {
                    found = true;
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn mcov_examples() {
        let c = (2.0 / std::f64::consts::PI).sqrt();
        let q = line(&[(-c, 0.5), (c, 0.5)]);
        let (v, _) = mcov(&pm1(), &q).unwrap();
        assert!((v - c).abs() < 1e-12);
        // Brute force over the free parameter t = pi(-1, -c).
        let best = (0..=1000)
            .map(|k| {
                let t = 0.5 * k as f64 / 1000.0;
                t * c + (0.5 - t) * -c + (0.5 - t) * -c + t * c
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v - best).abs() < 1e-12);

        let x = DiscreteMeasure::dirac(Point::xy(1.0, 2.0));
        let z = DiscreteMeasure::uniform(2, vec![Point::xy(0.0, 1.0), Point::xy(3.0, -1.0)]).unwrap();
        assert!((mcov(&x, &z).unwrap().0 - x.point(0).dot(&z.barycenter())).abs() < 1e-12);

        let u = line(&[(1.0, 1.0 / 3.0), (2.0, 1.0 / 3.0), (3.0, 1.0 / 3.0)]);
        assert!((mcov_1d(&u, &u).unwrap() - 14.0 / 3.0).abs() < 1e-12);
        assert!((mcov(&u, &u).unwrap().0 - u.second_moment()).abs() < 1e-12);
        assert!((mcov_1d(&DiscreteMeasure::dirac(Point::scalar(3.0)), &u).unwrap() - 6.0).abs() < 1e-12);
        assert!(mcov_1d(&x, &z).is_err());
    }

    #[test]
    fn w2_examples() {
        let p = pm1();
        let w = w2sq(&p, &p).unwrap();
        assert!(w.direct.abs() < 1e-12 && w.via_mcov.abs() < 1e-12);
        let a = DiscreteMeasure::dirac(Point::xy(1.0, 1.0));
        let b = DiscreteMeasure::dirac(Point::xy(4.0, -3.0));
        let w = w2sq(&a, &b).unwrap();
        assert!((w.direct - 25.0).abs() < 1e-12 && (w.via_mcov - 25.0).abs() < 1e-12);
    }

    #[test]
    fn strassen_examples() {
        let alpha = DiscreteMeasure::dirac(Point::scalar(0.0));
        let pi1 = check_convex_order(&alpha, &pm1()).unwrap().witness.unwrap();
        let pi2 = Coupling::product(&alpha, &pm1());
        let t = strassen_extend(&pi1, &pi2).unwrap();
        assert_eq!(t.atoms.len(), 4);
        assert!(t.atoms.iter().all(|a| a.3 == 0.25));
        assert_eq!(t.max_conditional_mean_deviation(), 0.0);

        let id = MartingaleTransport::identity(&pm1());
        let pi2 = Coupling::product(&pm1(), &line(&[(0.0, 0.2), (5.0, 0.8)]));
        let t = strassen_extend(&id, &pi2).unwrap();
        assert!(t.atoms.iter().all(|&(a, b, _, _)| t.alpha.point(a) == t.beta.point(b)));
        assert_eq!(t.max_conditional_mean_deviation(), 0.0);

        let wrong = Coupling::product(&line(&[(-1.0, 0.4), (1.0, 0.6)]), &pm1());
        assert!(strassen_extend(&id, &wrong).is_err());
    }

    #[test]
    fn mcov_chain_examples() {
        let alpha = DiscreteMeasure::dirac(Point::scalar(0.0));
        let c = verify_mcov_chain(&alpha, &pm1(), &pm1()).unwrap();
        assert_eq!(c.bary_term, 0.0);
        assert!(c.mcov_alpha.abs() < 1e-12);
        assert!((c.mcov_beta - 1.0).abs() < 1e-12);
        assert!((c.moment_bound - 1.0).abs() < 1e-12);
        assert!(c.holds(TAU_LP));
        assert!(matches!(
            verify_mcov_chain(&pm1(), &alpha, &pm1()),
            Err(Error::NotInConvexOrder { .. })
        ));
    }

    #[test]
    fn split_dominates_in_convex_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = line(&[(-0.3, 0.4), (0.8, 0.6)]);
        let b = mean_preserving_split(&a, 0.5, &mut rng);
        assert!(check_convex_order(&a, &b).unwrap().holds);
    }

    #[test]
    fn from_kernels_assembles_columns() {
        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let k = vec![line(&[(-1.0, 0.5), (0.0, 0.5)]), line(&[(0.0, 0.5), (1.0, 0.5)])];
        let mt = MartingaleTransport::from_kernels(&mu, &k).unwrap();
        assert_eq!(mt.nu().len(), 3);
        assert!((mt.nu().weight(mt.nu().find(&Point::scalar(0.0)).unwrap()) - 0.5).abs() < 1e-15);
    }
}
