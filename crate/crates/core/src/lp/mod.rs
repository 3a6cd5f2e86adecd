//! Equality-form linear programming over nonnegative variables.
//!
//! `solve` runs a two-phase revised simplex (Dantzig pricing, Bland's rule
//! while degenerate pivots stall) on an LU-factored basis that is refreshed
//! every [`REFACTOR_INTERVAL`] pivots. Infeasible programs come back with a
//! Farkas certificate `y` satisfying `A^T y <= 0` and `b^T y > 0`.

mod lu;
mod simplex;

use thiserror::Error;

pub use simplex::REFACTOR_INTERVAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("variable index {index} out of range for {n_vars} variables")]
    DimensionMismatch { index: usize, n_vars: usize },
    #[error("objective has {got} entries, expected {expected}")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("linear program has no variables")]
    Empty,
    #[error("numeric breakdown: {0}")]
    NumericBreakdown(String),
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
}

/// `optimize c^T x  s.t.  A x = b, x >= 0`, with `A` stored by rows.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    sense: Sense,
    objective: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(n_vars: usize, sense: Sense) -> Self {
        Self {
            n_vars,
            sense,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<(), LpError> {
        if c.len() != self.n_vars {
            return Err(LpError::ObjectiveLength {
                got: c.len(),
                expected: self.n_vars,
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        self.objective = c;
        Ok(())
    }

    pub fn set_cost(&mut self, j: usize, value: f64) -> Result<(), LpError> {
        if j >= self.n_vars {
            return Err(LpError::DimensionMismatch {
                index: j,
                n_vars: self.n_vars,
            });
        }
        if !value.is_finite() {
            return Err(LpError::NonFinite("objective"));
        }
        self.objective[j] = value;
        Ok(())
    }

    /// Appends `sum coeffs = rhs`. Repeated indices are summed and exact
    /// zeros dropped. Returns the row index.
    pub fn add_constraint<I>(&mut self, coeffs: I, rhs: f64) -> Result<usize, LpError>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        if !rhs.is_finite() {
            return Err(LpError::NonFinite("right-hand side"));
        }
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (j, v) in coeffs {
            if j >= self.n_vars {
                return Err(LpError::DimensionMismatch {
                    index: j,
                    n_vars: self.n_vars,
                });
            }
            if !v.is_finite() {
                return Err(LpError::NonFinite("constraint row"));
            }
            row.push((j, v));
        }
        row.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (j, v) in row {
            match merged.last_mut() {
                Some((k, acc)) if *k == j => *acc += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(merged);
        self.rhs.push(rhs);
        Ok(self.rows.len() - 1)
    }

    /// Largest absolute violation of `A x = b` and `x >= 0`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let lhs: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
            worst = worst.max((lhs - b).abs());
        }
        worst
    }

    /// Reduced costs `c - A^T y` in the caller's sense.
    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(j, v) in row {
                d[j] -= v * yi;
            }
        }
        d
    }

    /// Largest violation of dual feasibility for multipliers `y`
    /// (`A^T y >= c` when maximizing, `A^T y <= c` when minimizing).
    pub fn dual_residual(&self, y: &[f64]) -> f64 {
        let d = self.reduced_costs(y);
        match self.sense {
            Sense::Maximize => d.iter().fold(0.0f64, |w, &v| w.max(v)),
            Sense::Minimize => d.iter().fold(0.0f64, |w, &v| w.max(-v)),
        }
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.n_vars == 0 {
            return Err(LpError::Empty);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One multiplier per equality row, signed so that `b^T y` equals the
    /// optimal value in the caller's sense.
    pub duals: Vec<f64>,
    pub objective_value: f64,
    /// Present when `status == Infeasible`: `A^T y <= 0`, `b^T y > 0`.
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        lp.rhs.iter().zip(&self.duals).map(|(b, y)| b * y).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Feasibility {
    pub feasible: bool,
    pub witness: Option<Vec<f64>>,
    pub certificate: Option<Vec<f64>>,
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::Simplex::new(lp).solve(true)
}

pub fn check_feasible(lp: &LinearProgram) -> Result<Feasibility, LpError> {
    lp.validate()?;
    let sol = simplex::Simplex::new(lp).solve(false)?;
    Ok(match sol.status {
        LpStatus::Infeasible => Feasibility {
            feasible: false,
            witness: None,
            certificate: sol.farkas,
        },
        _ => Feasibility {
            feasible: true,
            witness: Some(sol.primal),
            certificate: None,
        },
    })
}

/// Checks `A^T y <= tol` and `b^T y > tol`, i.e. that `y` proves `lp` infeasible.
pub fn verify_farkas(lp: &LinearProgram, y: &[f64], tol: f64) -> bool {
    let mut aty = vec![0.0; lp.n_vars];
    for (row, &yi) in lp.rows.iter().zip(y) {
        for &(j, v) in row {
            aty[j] += v * yi;
        }
    }
    let by: f64 = lp.rhs.iter().zip(y).map(|(b, v)| b * v).sum();
    aty.iter().all(|&v| v <= tol) && by > tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_single_row() {
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(vec![1.0, 0.0]).unwrap();
        lp.add_constraint([(0, 1.0), (1, 1.0)], 1.0).unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 1.0).abs() < 1e-12);
        assert!((s.primal[0] - 1.0).abs() < 1e-12 && s.primal[1].abs() < 1e-12);
        assert!((s.dual_objective(&lp) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_with_certificate() {
        let mut lp = LinearProgram::new(1, Sense::Minimize);
        lp.add_constraint([(0, 1.0)], -1.0).unwrap();
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        let y = s.farkas.unwrap();
        assert!(verify_farkas(&lp, &y, 1e-12));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(vec![1.0, 0.0]).unwrap();
        lp.add_constraint([(0, 1.0), (1, -1.0)], 0.0).unwrap();
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn feasibility_checks() {
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        lp.add_constraint([(0, 1.0), (1, 1.0)], 1.0).unwrap();
        let f = check_feasible(&lp).unwrap();
        assert!(f.feasible);
        assert!(lp.primal_residual(&f.witness.unwrap()) < 1e-12);

        let mut lp = LinearProgram::new(1, Sense::Minimize);
        lp.add_constraint([(0, 1.0)], -1.0).unwrap();
        let f = check_feasible(&lp).unwrap();
        assert!(!f.feasible);
        assert!(verify_farkas(&lp, &f.certificate.unwrap(), 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        assert!(matches!(
            lp.add_constraint([(5, 1.0)], 0.0),
            Err(LpError::DimensionMismatch { .. })
        ));
        assert!(lp.add_constraint([(0, f64::NAN)], 0.0).is_err());
        assert!(lp.set_objective(vec![1.0]).is_err());
        assert!(matches!(
            solve(&LinearProgram::new(0, Sense::Minimize)),
            Err(LpError::Empty)
        ));
    }

    #[test]
    fn redundant_rows_keep_duals_valid() {
        // 2x2 transport with the usual rank deficiency.
        let mut lp = LinearProgram::new(4, Sense::Minimize);
        lp.set_objective(vec![1.0, 3.0, 2.0, 1.0]).unwrap();
        lp.add_constraint([(0, 1.0), (1, 1.0)], 0.5).unwrap();
        lp.add_constraint([(2, 1.0), (3, 1.0)], 0.5).unwrap();
        lp.add_constraint([(0, 1.0), (2, 1.0)], 0.5).unwrap();
        lp.add_constraint([(1, 1.0), (3, 1.0)], 0.5).unwrap();
        let s = solve(&lp).unwrap();
        assert!((s.objective_value - 1.0).abs() < 1e-12);
        assert!(lp.dual_residual(&s.duals) < 1e-12);
        assert!((s.dual_objective(&lp) - 1.0).abs() < 1e-12);
    }
}
