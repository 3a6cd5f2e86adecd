//! The auxiliary potential `phi^psi`, the dual functional `D(psi)` and the
//! optimality criterion `L(psi)`.

use rayon::prelude::*;

use crate::convex::ConvexPL;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::mbb::{Instance, PrimalSolution};
use crate::measure::{DiscreteMeasure, Point};
use crate::tolerance::{TAU_LP, TOL_OPT};
use crate::transport::MartingaleTransport;

/// Lattice points per diameter of `C` in the default evaluation grid.
pub const GRID_DIVISIONS: f64 = 16.0;

/// Default grid for `phi^psi`: atoms of `nu` and `mu` plus a lattice over
/// `C` with spacing `diam(C) / 16`, without duplicates.
pub fn evaluation_grid(inst: &Instance) -> Vec<Point> {
    evaluation_grid_with(inst, GRID_DIVISIONS)
}

pub fn evaluation_grid_with(inst: &Instance, divisions: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let diam = inst.geometry.diameter();
    let lattice = if diam > 0.0 {
        inst.geometry.lattice(diam / divisions)
    } else {
        Vec::new()
    };
    for p in inst
        .nu
        .points()
        .iter()
        .chain(inst.mu.points())
        .chain(lattice.iter())
    {
        if seen.insert(p.key()) {
            out.push(p.clone());
        }
    }
    out
}

/// `phi^psi(x) = inf { int psi dp - mcov(p, gamma) : p on grid, bary p = x }`,
/// solved as a transport LP between `gamma` and an unknown `p`.
pub fn phi_psi(psi: &ConvexPL, x: &Point, gamma: &DiscreteMeasure, grid: &[Point]) -> Result<f64> {
    let values = psi.eval_all(grid);
    phi_from_values(&values, x, gamma, grid)
}

fn phi_from_values(values: &[f64], x: &Point, gamma: &DiscreteMeasure, grid: &[Point]) -> Result<f64> {
    let (ny, ng, d) = (grid.len(), gamma.len(), x.dim());
    let mut lp = LinearProgram::new(ny * ng, Sense::Minimize);
    let mut c = Vec::with_capacity(ny * ng);
    for (y, v) in grid.iter().zip(values) {
        for z in gamma.points() {
            c.push(v - y.dot(z));
        }
    }
    lp.set_objective(c)?;
    for k in 0..ng {
        lp.add_constraint((0..ny).map(|j| (j * ng + k, 1.0)), gamma.weight(k))?;
    }
    for a in 0..d {
        lp.add_constraint(
            grid.iter()
                .enumerate()
                .flat_map(|(j, y)| (0..ng).map(move |k| (j * ng + k, y[a]))),
            x[a],
        )?;
    }
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.objective_value),
        LpStatus::Infeasible => Err(Error::Precondition(format!(
            "point {x} lies outside the convex hull of the evaluation grid"
        ))),
        LpStatus::Unbounded => Err(Error::Numeric("inner potential LP unbounded".into())),
    }
}

/// `phi^psi` at every atom of `mu`, in parallel.
pub fn phi_at_atoms(psi: &ConvexPL, mu: &DiscreteMeasure, gamma: &DiscreteMeasure, grid: &[Point]) -> Result<Vec<f64>> {
    let values = psi.eval_all(grid);
    mu.points()
        .par_iter()
        .map(|x| phi_from_values(&values, x, gamma, grid))
        .collect()
}

/// `D(psi) = sum_x mu(x) (int psi dpi_x - phi^psi(x))` for a martingale
/// transport `pi` from `mu`.
pub fn d_of(psi: &ConvexPL, pi: &MartingaleTransport, gamma: &DiscreteMeasure, grid: &[Point]) -> Result<f64> {
    let phi = phi_at_atoms(psi, pi.mu(), gamma, grid)?;
    let nu_term = pi.coupling().integrate(|_, y| psi.eval(y));
    let phi_term: f64 = pi.mu().weights().iter().zip(&phi).map(|(w, p)| w * p).sum();
    Ok(nu_term - phi_term)
}

/// `L(psi)(x) = int psi dpi^SBM_x - phi^psi(x)` for every atom of `mu`.
pub fn l_of(psi: &ConvexPL, inst: &Instance, ps: &PrimalSolution, grid: &[Point]) -> Result<Vec<f64>> {
    let phi = phi_at_atoms(psi, &inst.mu, &inst.gamma, grid)?;
    Ok((0..inst.mu.len())
        .map(|i| ps.sbm.kernel(i).integrate(|y| psi.eval(y)) - phi[i])
        .collect())
}

/// `sum_x mu(x) |L(psi)(x) - mcov(pi^SBM_x, gamma)|`.
pub fn optimality_gap(psi: &ConvexPL, inst: &Instance, ps: &PrimalSolution, grid: &[Point]) -> Result<f64> {
    let l = l_of(psi, inst, ps, grid)?;
    Ok(inst
        .mu
        .weights()
        .iter()
        .zip(l.iter().zip(&ps.per_x_mcov))
        .map(|(w, (l, m))| w * (l - m).abs())
        .sum())
}

#[derive(Debug, Clone)]
pub struct OptimizingReport {
    /// `e_n` per element of the sequence.
    pub gaps: Vec<f64>,
    pub optimizing: bool,
}

/// Decides whether a sequence is optimizing: the final gap is at most
/// `tol` and over the last third each gap is at most 1.1 times its
/// predecessor (plus `TAU_LP`).
pub fn check_optimizing(
    seq: &[ConvexPL],
    inst: &Instance,
    ps: &PrimalSolution,
    grid: &[Point],
) -> Result<OptimizingReport> {
    check_optimizing_with(seq, inst, ps, grid, TOL_OPT)
}

pub fn check_optimizing_with(
    seq: &[ConvexPL],
    inst: &Instance,
    ps: &PrimalSolution,
    grid: &[Point],
    tol: f64,
) -> Result<OptimizingReport> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let gaps = seq
        .iter()
        .map(|psi| optimality_gap(psi, inst, ps, grid))
        .collect::<Result<Vec<_>>>()?;
    let optimizing = gaps_optimizing(&gaps, tol);
    Ok(OptimizingReport { gaps, optimizing })
}

pub(crate) fn gaps_optimizing(gaps: &[f64], tol: f64) -> bool {
    let n = gaps.len();
    let start = n - n.div_ceil(3);
    let tail_ok = gaps[start..]
        .windows(2)
        .all(|w| w[1] <= 1.1 * w[0] + TAU_LP);
    gaps[n - 1] <= tol && tail_ok
}

/// `sum_y nu(y) min(1, |f(y) - g(y)|)`.
pub fn measure_metric(f: &ConvexPL, g: &ConvexPL, nu: &DiscreteMeasure) -> f64 {
    nu.integrate(|y| (f.eval(y) - g.eval(y)).abs().min(1.0))
}

/// `sum_y nu(y) |f(y) - g(y)|`.
pub fn l1_metric(f: &ConvexPL, g: &ConvexPL, nu: &DiscreteMeasure) -> f64 {
    nu.integrate(|y| (f.eval(y) - g.eval(y)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::Affine;
    use crate::mbb::{extract_dual, sample_mt, solve_primal};
    use crate::measure::quantize_gaussian;
    use crate::transport::mcov;

    fn s(x: f64) -> Point {
        Point::scalar(x)
    }

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (s(x), w)).collect()).unwrap()
    }

    /// Brute force of `-max mcov(p, gamma)` over mean-zero `p` on
    /// `{-1, 0, 1}`: `p = (t, 1 - 2t, t)` for `t in [0, 1/2]`.
    #[test]
    fn phi_of_zero_matches_brute_force() {
        let gamma = quantize_gaussian(1, 8).unwrap();
        let grid = vec![s(-1.0), s(0.0), s(1.0)];
        let phi = phi_psi(&ConvexPL::constant(1, 0.0), &s(0.0), &gamma, &grid).unwrap();
        let mut best = f64::NEG_INFINITY;
        for k in 1..=1000 {
            let t = 0.5 * k as f64 / 1000.0;
            let atoms: Vec<(f64, f64)> = [(-1.0, t), (0.0, 1.0 - 2.0 * t), (1.0, t)]
                .into_iter()
                .filter(|a| a.1 > 0.0)
                .collect();
            let p = line(&atoms);
            best = best.max(mcov(&p, &gamma).unwrap().0);
        }
        assert!((phi + best).abs() < 1e-12);
        assert!(phi <= 0.0);
    }

    #[test]
    fn phi_below_psi_on_grid() {
        let gamma = quantize_gaussian(1, 16).unwrap();
        let grid = vec![s(-1.0), s(-0.2), s(0.5), s(1.0)];
        let psi = ConvexPL::new(1, vec![Affine::new(s(2.0), 0.1), Affine::new(s(-0.5), 0.3)]).unwrap();
        for y in &grid {
            assert!(phi_psi(&psi, y, &gamma, &grid).unwrap() <= psi.eval(y) + TAU_LP);
        }
        assert!(phi_psi(&psi, &s(3.0), &gamma, &grid).is_err());
    }

    #[test]
    fn dual_functional_matches_primal_at_the_optimizer() {
        let mu = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let nu = line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let inst = Instance::with_gauss_points(mu, nu, 32).unwrap();
        let ps = solve_primal(&inst).unwrap();
        let dual = extract_dual(&inst, &ps).unwrap();
        let grid = evaluation_grid(&inst);
        let d = d_of(&dual.psi, &ps.sbm, &inst.gamma, &grid).unwrap();
        assert!((d - ps.value).abs() < 1e-8);
        let d2 = d_of(&dual.psi, &sample_mt(&inst, 9).unwrap(), &inst.gamma, &grid).unwrap();
        assert!((d - d2).abs() < 1e-8);
        let shifted = dual.psi.add_affine(&s(3.7), -2.0);
        let d3 = d_of(&shifted, &ps.sbm, &inst.gamma, &grid).unwrap();
        assert!((d - d3).abs() < 1e-8);

        let l = l_of(&dual.psi, &inst, &ps, &grid).unwrap();
        for (li, mi) in l.iter().zip(&ps.per_x_mcov) {
            assert!((li - mi).abs() < 1e-8);
        }
        let spt_nu = inst.nu.points().to_vec();
        let phi = phi_at_atoms(&dual.psi, &inst.mu, &inst.gamma, &spt_nu).unwrap();
        for (a, b) in phi.iter().zip(&dual.phi_hat) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_instance_has_nonnegative_dual_functional() {
        let nu = line(&[(-1.0, 0.3), (0.5, 0.4), (2.0, 0.3)]);
        let inst = Instance::with_gauss_points(nu.clone(), nu.clone(), 16).unwrap();
        let grid = evaluation_grid(&inst);
        let pi = MartingaleTransport::identity(&nu);
        let psi = ConvexPL::new(1, vec![Affine::new(s(1.0), 0.0), Affine::new(s(-2.0), 0.5)]).unwrap();
        assert!(d_of(&psi, &pi, &inst.gamma, &grid).unwrap() >= -TAU_LP);
    }

    #[test]
    fn zero_potential_l_dominates_kernel_mcov() {
        let inst = Instance::with_gauss_points(
            DiscreteMeasure::dirac(s(0.0)),
            line(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]),
            8,
        )
        .unwrap();
        let ps = solve_primal(&inst).unwrap();
        let grid = inst.nu.points().to_vec();
        let l = l_of(&ConvexPL::constant(1, 0.0), &inst, &ps, &grid).unwrap();
        let phi0 = phi_psi(&ConvexPL::constant(1, 0.0), &s(0.0), &inst.gamma, &grid).unwrap();
        assert!((l[0] + phi0).abs() < 1e-12);
        assert!(l[0] >= ps.per_x_mcov[0] - TAU_LP);
    }

    #[test]
    fn optimizing_verdicts() {
        let inst = Instance::with_gauss_points(
            DiscreteMeasure::dirac(s(0.0)),
            line(&[(-1.0, 0.25), (0.0, 0.25), (2.5, 0.25), (-1.5, 0.25)]),
            16,
        )
        .unwrap();
        let ps = solve_primal(&inst).unwrap();
        let dual = extract_dual(&inst, &ps).unwrap();
        let grid = evaluation_grid(&inst);
        let constant = vec![dual.psi.clone(); 6];
        let r = check_optimizing(&constant, &inst, &ps, &grid).unwrap();
        assert!(r.optimizing);
        assert!(r.gaps.iter().all(|&e| e <= TAU_LP));

        let bump = ConvexPL::new(1, vec![Affine::new(s(1.0), -0.5), Affine::new(s(-1.0), -0.5)])
            .unwrap()
            .max(&ConvexPL::constant(1, 0.0))
            .scale(0.5);
        let off = vec![dual.psi.sum(&bump); 6];
        let r = check_optimizing(&off, &inst, &ps, &grid).unwrap();
        assert!(!r.optimizing);
        assert!(r.gaps[0] > 1e-3);
    }

    #[test]
    fn metrics_examples() {
        let nu = line(&[(0.0, 0.3), (1.0, 0.7)]);
        let f = ConvexPL::constant(1, 0.0);
        assert_eq!(measure_metric(&f, &f, &nu), 0.0);
        assert_eq!(measure_metric(&f, &ConvexPL::constant(1, 2.0), &nu), 1.0);
        // f - g = 5 at 0 and 0 at 1.
        let g = ConvexPL::affine(s(-5.0), 5.0).max(&ConvexPL::constant(1, 0.0));
        let h = ConvexPL::constant(1, 0.0);
        assert!((measure_metric(&g, &h, &nu) - 0.3).abs() < 1e-15);
        assert!((l1_metric(&g, &h, &nu) - 1.5).abs() < 1e-15);
    }
}
