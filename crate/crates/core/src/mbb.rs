//! The discrete martingale Benamou-Brenier problem as one linear program.
//!
//! Given `mu <=_c nu` and a quantized Gaussian `gamma`, the primal variables
//! are `q(x, y, z) >= 0` on `spt mu x spt nu x spt gamma` with
//!
//! * `sum_y q(x, y, z) = mu(x) gamma(z)`,
//! * `sum_{x,z} q(x, y, z) = nu(y)`,
//! * `sum_{y,z} q(x, y, z) (y - x) = 0`,
//!
//! maximizing `sum q <y, z>`. The multipliers of the three families are the
//! dual variables `m(x, z)`, `psi(y)` and `h(x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::{canonicalize, envelope, ConvexPL};
use crate::error::{Error, Result};
use crate::geometry::{GeometrySummary, Location};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::measure::{quantize_gaussian, DiscreteMeasure, Point};
use crate::tolerance::{TAU_IRR, TAU_LP};
use crate::transport::{check_convex_order, martingale_lp, mcov_value, Coupling, MartingaleTransport};

#[derive(Debug, Clone)]
pub struct Instance {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub gamma: DiscreteMeasure,
    pub geometry: GeometrySummary,
}

impl Instance {
    /// Validates dimensions, the centering of `gamma` and `mu <=_c nu`.
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, gamma: DiscreteMeasure) -> Result<Self> {
        for m in [&nu, &gamma] {
            if m.dim() != mu.dim() {
                return Err(Error::DimensionMismatch {
                    expected: mu.dim(),
                    got: m.dim(),
                });
            }
        }
        if !matches!(mu.dim(), 1 | 2) {
            return Err(Error::UnsupportedDimension(mu.dim()));
        }
        if gamma.barycenter().norm() > 1e-12 {
            return Err(Error::InvalidArgument("gaussian quantization must be centered".into()));
        }
        let order = check_convex_order(&mu, &nu)?;
        if !order.holds {
            return Err(Error::NotInConvexOrder {
                certificate: order.certificate.unwrap_or_default(),
            });
        }
        let geometry = GeometrySummary::of(&nu);
        Ok(Self {
            mu,
            nu,
            gamma,
            geometry,
        })
    }

    pub fn with_gauss_points(mu: DiscreteMeasure, nu: DiscreteMeasure, n: usize) -> Result<Self> {
        let gamma = quantize_gaussian(mu.dim(), n)?;
        Self::new(mu, nu, gamma)
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    /// Point at which dual potentials are pinned: the atom of `nu` in the
    /// relative interior nearest to its barycenter, else the barycenter.
    pub fn anchor(&self) -> Point {
        let b = self.nu.barycenter();
        self.nu
            .points()
            .iter()
            .filter(|p| self.geometry.classify(p) == Location::Interior)
            .min_by(|p, q| p.dist(&b).total_cmp(&q.dist(&b)))
            .cloned()
            .unwrap_or(b)
    }
}

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub value: f64,
    /// `q[(i * |nu| + j) * |gamma| + k]`.
    pub triple_mass: Vec<f64>,
    /// The `(x, y)` marginal of `q`.
    pub sbm: MartingaleTransport,
    /// `mcov(pi_x, gamma)` per atom of `mu`.
    pub per_x_mcov: Vec<f64>,
    /// Raw LP multipliers in row order (i), (ii), (iii).
    pub duals: Vec<f64>,
}

impl PrimalSolution {
    /// Largest deviation of the `(x, z)` marginal of `q` from `mu x gamma`.
    pub fn mixture_residual(&self, inst: &Instance) -> f64 {
        let (nm, nn, ng) = (inst.mu.len(), inst.nu.len(), inst.gamma.len());
        let mut worst = 0.0f64;
        for i in 0..nm {
            for k in 0..ng {
                let s: f64 = (0..nn).map(|j| self.triple_mass[(i * nn + j) * ng + k]).sum();
                worst = worst.max((s - inst.mu.weight(i) * inst.gamma.weight(k)).abs());
            }
        }
        worst
    }

    /// `sum_x mu(x) mcov(pi_x, gamma)`.
    pub fn kernel_value(&self, inst: &Instance) -> f64 {
        inst.mu.weights().iter().zip(&self.per_x_mcov).map(|(w, v)| w * v).sum()
    }
}

fn primal_lp(inst: &Instance) -> Result<LinearProgram> {
    let (mu, nu, g) = (&inst.mu, &inst.nu, &inst.gamma);
    let (nm, nn, ng, d) = (mu.len(), nu.len(), g.len(), inst.dim());
    let var = |i: usize, j: usize, k: usize| (i * nn + j) * ng + k;
    let mut lp = LinearProgram::new(nm * nn * ng, Sense::Maximize);
    let mut c = vec![0.0; nm * nn * ng];
    for i in 0..nm {
        for (j, y) in nu.points().iter().enumerate() {
            for (k, z) in g.points().iter().enumerate() {
                c[var(i, j, k)] = y.dot(z);
            }
        }
    }
    lp.set_objective(c)?;
    for i in 0..nm {
        for k in 0..ng {
            lp.add_constraint((0..nn).map(|j| (var(i, j, k), 1.0)), mu.weight(i) * g.weight(k))?;
        }
    }
    for j in 0..nn {
        lp.add_constraint(
            (0..nm).flat_map(|i| (0..ng).map(move |k| (var(i, j, k), 1.0))),
            nu.weight(j),
        )?;
    }
    for (i, x) in mu.points().iter().enumerate() {
        for c in 0..d {
            lp.add_constraint(
                nu.points()
                    .iter()
                    .enumerate()
                    .flat_map(|(j, y)| (0..ng).map(move |k| (var(i, j, k), y[c] - x[c]))),
                0.0,
            )?;
        }
    }
    Ok(lp)
}

pub fn solve_primal(inst: &Instance) -> Result<PrimalSolution> {
    let lp = primal_lp(inst)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::NotInConvexOrder {
                certificate: sol.farkas.unwrap_or_default(),
            })
        }
        LpStatus::Unbounded => return Err(Error::Numeric("primal LP reported unbounded".into())),
    }
    let (nm, nn, ng) = (inst.mu.len(), inst.nu.len(), inst.gamma.len());
    let q: Vec<f64> = sol.primal.iter().map(|v| v.max(0.0)).collect();
    let mut pi = vec![0.0; nm * nn];
    for i in 0..nm {
        for j in 0..nn {
            pi[i * nn + j] = q[(i * nn + j) * ng..(i * nn + j + 1) * ng].iter().sum();
        }
    }
    let sbm = MartingaleTransport::new(Coupling::new(inst.mu.clone(), inst.nu.clone(), pi)?)?;
    let per_x_mcov = (0..nm)
        .map(|i| mcov_value(&sbm.kernel(i), &inst.gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrimalSolution {
        value: sol.objective_value,
        triple_mass: q,
        sbm,
        per_x_mcov,
        duals: sol.duals,
    })
}

#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// The normalized potential as a convex function on all of `R^d`.
    pub psi: ConvexPL,
    /// `psi` on the atoms of `nu`.
    pub psi_hat: Vec<f64>,
    /// Martingale multiplier per atom of `mu`.
    pub h: Vec<Point>,
    /// Tightened mixture multiplier, `m[i * |gamma| + k]`.
    pub m: Vec<f64>,
    /// `phi^psi(x)` per atom of `mu`.
    pub phi_hat: Vec<f64>,
    pub value: f64,
    pub anchor: Point,
}

impl DualCertificate {
    /// `min over (x, y, z) of m(x, z) + psi(y) + <h(x), y - x> - <y, z>`;
    /// nonnegative up to round-off for a feasible certificate.
    pub fn feasibility_margin(&self, inst: &Instance) -> f64 {
        let ng = inst.gamma.len();
        let mut worst = f64::INFINITY;
        for (i, x) in inst.mu.points().iter().enumerate() {
            for (j, y) in inst.nu.points().iter().enumerate() {
                let base = self.psi_hat[j] + self.h[i].dot(&y.sub(x));
                for (k, z) in inst.gamma.points().iter().enumerate() {
                    worst = worst.min(self.m[i * ng + k] + base - y.dot(z));
                }
            }
        }
        worst
    }
}

/// Reads the dual potential off the primal LP, replaces it by its lower
/// convex envelope normalized at [`Instance::anchor`], shifts it so its
/// minimum over `spt nu` is zero, and rebuilds the remaining multipliers so
/// the certificate is exactly feasible.
pub fn extract_dual(inst: &Instance, ps: &PrimalSolution) -> Result<DualCertificate> {
    let (nm, nn, ng, d) = (inst.mu.len(), inst.nu.len(), inst.gamma.len(), inst.dim());
    let psi_raw = &ps.duals[nm * ng..nm * ng + nn];
    let h_raw = &ps.duals[nm * ng + nn..];
    let env = envelope(inst.nu.points(), psi_raw)?;
    let anchor = inst.anchor();
    let (psi, slope) = canonicalize(&env, &anchor, inst.nu.points());
    let psi_hat = psi.eval_all(inst.nu.points());
    let h: Vec<Point> = (0..nm)
        .map(|i| Point::new(h_raw[i * d..(i + 1) * d].to_vec()).add(&slope))
        .collect();
    let mut m = vec![0.0; nm * ng];
    let mut phi_hat = vec![0.0; nm];
    for (i, x) in inst.mu.points().iter().enumerate() {
        for (k, z) in inst.gamma.points().iter().enumerate() {
            m[i * ng + k] = inst
                .nu
                .points()
                .iter()
                .zip(&psi_hat)
                .map(|(y, p)| y.dot(z) - p - h[i].dot(&y.sub(x)))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        phi_hat[i] = -(0..ng).map(|k| inst.gamma.weight(k) * m[i * ng + k]).sum::<f64>();
    }
    let value = -inst
        .mu
        .weights()
        .iter()
        .zip(&phi_hat)
        .map(|(w, p)| w * p)
        .sum::<f64>()
        + inst.nu.weights().iter().zip(&psi_hat).map(|(w, p)| w * p).sum::<f64>();
    let gap = (value - ps.value).abs();
    if gap > TAU_LP * (1.0 + ps.value.abs()) {
        return Err(Error::Numeric(format!(
            "duality gap {gap:e} between primal {} and dual {value}",
            ps.value
        )));
    }
    Ok(DualCertificate {
        psi,
        psi_hat,
        h,
        m,
        phi_hat,
        value,
        anchor,
    })
}

#[derive(Debug, Clone)]
pub struct Irreducibility {
    pub irreducible: bool,
    /// Largest achievable minimum entry of a martingale transport.
    pub margin: f64,
    pub witness: MartingaleTransport,
}

/// Maximizes `t` subject to `pi in MT(mu, nu)` and `pi(x, y) >= t` on every
/// pair of atoms.
pub fn irreducibility(inst: &Instance) -> Result<Irreducibility> {
    let (nm, nn) = (inst.mu.len(), inst.nu.len());
    let np = nm * nn;
    // Variables: pi (np), t (1), slacks (np).
    let mut lp = LinearProgram::new(2 * np + 1, Sense::Maximize);
    lp.set_cost(np, 1.0)?;
    crate::transport::add_martingale_rows(&mut lp, &inst.mu, &inst.nu, 0)?;
    for v in 0..np {
        lp.add_constraint([(v, 1.0), (np, -1.0), (np + 1 + v, -1.0)], 0.0)?;
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numeric(format!("irreducibility LP ended {:?}", sol.status)));
    }
    let pi = sol.primal[..np].to_vec();
    let witness = MartingaleTransport::new(Coupling::new(inst.mu.clone(), inst.nu.clone(), pi)?)?;
    Ok(Irreducibility {
        irreducible: sol.objective_value > TAU_IRR,
        margin: sol.objective_value,
        witness,
    })
}

/// Restriction of the problem to the atoms `b` of `mu`: returns the instance
/// `(mu^B, nu^B)` and the restricted kernel `pi^B = mu^B(dx) pi_x(dy)`.
pub fn localize(inst: &Instance, ps: &PrimalSolution, b: &[usize]) -> Result<(Instance, MartingaleTransport)> {
    if b.is_empty() {
        return Err(Error::InvalidArgument("localization set is empty".into()));
    }
    let mut idx = b.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.iter().any(|&i| i >= inst.mu.len()) {
        return Err(Error::InvalidArgument("localization index out of range".into()));
    }
    let mu_b = inst.mu.restrict(&idx)?;
    let kernels: Vec<DiscreteMeasure> = idx.iter().map(|&i| ps.sbm.kernel(i)).collect();
    let pi_b = MartingaleTransport::from_kernels(&mu_b, &kernels)?;
    let local = Instance::new(mu_b, pi_b.nu().clone(), inst.gamma.clone())?;
    Ok((local, pi_b))
}

/// A vertex of `MT(mu, nu)` selected by a seeded random linear objective.
pub fn sample_mt(inst: &Instance, seed: u64) -> Result<MartingaleTransport> {
    let mut lp = martingale_lp(&inst.mu, &inst.nu, Sense::Minimize)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..lp.n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    lp.set_objective(c)?;
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numeric(format!("sampling LP ended {:?}", sol.status)));
    }
    MartingaleTransport::new(Coupling::new(inst.mu.clone(), inst.nu.clone(), sol.primal)?)
}

/// Among primal solutions within `slack` of the optimum, the largest
/// achievable `min over (x, y) of pi_x(y)`. Positive values show that an
/// optimal kernel charging every atom of `nu` exists (up to `slack`).
pub fn sbm_support_margin(inst: &Instance, ps: &PrimalSolution, slack: f64) -> Result<f64> {
    let base = primal_lp(inst)?;
    let (nm, nn, ng) = (inst.mu.len(), inst.nu.len(), inst.gamma.len());
    let nq = base.n_vars();
    let np = nm * nn;
    // Variables: q (nq), t, objective slack, pair slacks (np).
    let n = nq + 2 + np;
    let (t, e) = (nq, nq + 1);
    let mut lp = LinearProgram::new(n, Sense::Maximize);
    lp.set_cost(t, 1.0)?;
    for r in 0..base.n_constraints() {
        lp.add_constraint(base.row(r).iter().copied(), base.rhs()[r])?;
    }
    lp.add_constraint(
        base.objective()
            .iter()
            .enumerate()
            .map(|(j, &c)| (j, c))
            .chain([(e, -1.0)]),
        ps.value - slack,
    )?;
    for i in 0..nm {
        for j in 0..nn {
            let p = i * nn + j;
            lp.add_constraint(
                (0..ng)
                    .map(|k| ((i * nn + j) * ng + k, 1.0))
                    .chain([(t, -inst.mu.weight(i)), (nq + 2 + p, -1.0)]),
                0.0,
            )?;
        }
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numeric(format!("support LP ended {:?}", sol.status)));
    }
    Ok(sol.objective_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::mcov;

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (Point::scalar(x), w)).collect()).unwrap()
    }

    fn standard() -> Instance {
        Instance::with_gauss_points(
            DiscreteMeasure::dirac(Point::scalar(0.0)),
            line(&[(-1.0, 0.5), (1.0, 0.5)]),
            64,
        )
        .unwrap()
    }

    #[test]
    fn standard_instance_value_is_mean_abs_gaussian() {
        let inst = standard();
        let ps = solve_primal(&inst).unwrap();
        let oracle = mcov(&inst.nu, &inst.gamma).unwrap().0;
        let mean_abs: f64 = inst.gamma.atoms().map(|(z, w)| w * z[0].abs()).sum();
        assert!((ps.value - oracle).abs() < 1e-10);
        assert!((ps.value - mean_abs).abs() < 1e-10);
        assert!((ps.value - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
        assert!(ps.mixture_residual(&inst) < 1e-12);

        let dual = extract_dual(&inst, &ps).unwrap();
        assert!((dual.value - ps.value).abs() < 1e-10);
        assert!(dual.psi_hat[0].abs() < 1e-12 && dual.psi_hat[1].abs() < 1e-12);
        assert!(dual.feasibility_margin(&inst) > -1e-12);
    }

    #[test]
    fn equal_marginals_give_identity() {
        let nu = line(&[(-1.0, 0.3), (0.5, 0.4), (2.0, 0.3)]);
        let inst = Instance::with_gauss_points(nu.clone(), nu.clone(), 16).unwrap();
        let ps = solve_primal(&inst).unwrap();
        assert!(ps.value.abs() < 1e-10);
        for i in 0..3 {
            assert_eq!(ps.sbm.kernel(i).len(), 1);
        }
        let dual = extract_dual(&inst, &ps).unwrap();
        assert!(dual.value.abs() < 1e-10);
        assert!(!irreducibility(&inst).unwrap().irreducible);
    }

    #[test]
    fn rejects_mean_mismatch() {
        let r = Instance::with_gauss_points(
            DiscreteMeasure::dirac(Point::scalar(1.0)),
            line(&[(-1.0, 0.5), (1.0, 0.5)]),
            8,
        );
        assert!(matches!(r, Err(Error::NotInConvexOrder { .. })));
    }

    #[test]
    fn irreducibility_examples() {
        let r = irreducibility(&standard()).unwrap();
        assert!(r.irreducible);
        assert!((r.margin - 0.5).abs() < 1e-12);

        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let nu = line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let inst = Instance::with_gauss_points(mu, nu, 8).unwrap();
        let r = irreducibility(&inst).unwrap();
        assert!(r.irreducible);
        // Explicit full-support kernel: from -1/2 weights (0.6, 0.3, 0.1),
        // from +1/2 the remainder (1/15, 11/30, 17/30).
        let explicit = MartingaleTransport::new(
            Coupling::new(
                inst.mu.clone(),
                inst.nu.clone(),
                vec![0.3, 0.15, 0.05, 1.0 / 30.0, 11.0 / 60.0, 17.0 / 60.0],
            )
            .unwrap(),
        )
        .unwrap();
        let min_entry = explicit.coupling().masses().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(r.margin >= min_entry - 1e-12);
    }

    #[test]
    fn localization_to_everything_and_to_a_singleton() {
        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let nu = line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let inst = Instance::with_gauss_points(mu, nu, 16).unwrap();
        let ps = solve_primal(&inst).unwrap();
        let (loc, pib) = localize(&inst, &ps, &[0, 1]).unwrap();
        assert_eq!(loc.mu, inst.mu);
        for j in 0..loc.nu.len() {
            let k = inst.nu.find(loc.nu.point(j)).unwrap();
            assert!((loc.nu.weight(j) - inst.nu.weight(k)).abs() < 1e-12);
        }
        assert_eq!(pib.mu(), &inst.mu);

        let (loc, pib) = localize(&inst, &ps, &[1]).unwrap();
        assert_eq!(loc.mu.len(), 1);
        assert_eq!(pib.kernel(0), ps.sbm.kernel(1));
        let local = solve_primal(&loc).unwrap();
        assert!((local.value - ps.per_x_mcov[1]).abs() < 1e-8);
        assert!(localize(&inst, &ps, &[]).is_err());
    }

    #[test]
    fn sampled_transports_are_martingales() {
        let inst = standard();
        assert_eq!(sample_mt(&inst, 1).unwrap(), sample_mt(&inst, 2).unwrap());
        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let nu = line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let inst = Instance::with_gauss_points(mu, nu, 8).unwrap();
        for s in 0..4 {
            assert!(sample_mt(&inst, s).unwrap().martingale_residual() < 1e-12);
        }
    }
}
