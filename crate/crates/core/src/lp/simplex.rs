use super::lu::Factor;
use super::{LinearProgram, LpError, LpSolution, LpStatus, Sense};

pub const REFACTOR_INTERVAL: usize = 100;

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const DRIVE_OUT_TOL: f64 = 1e-7;
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

pub(crate) struct Simplex {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    b: Vec<f64>,
    flipped: Vec<bool>,
    /// Phase-two costs, already negated for maximization.
    cost: Vec<f64>,
    negate: bool,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    x_b: Vec<f64>,
    factor: Factor,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    pub(crate) fn new(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.n_vars;
        let mut flipped = vec![false; m];
        let mut b = lp.rhs.clone();
        for i in 0..m {
            if b[i] < 0.0 {
                flipped[i] = true;
                b[i] = -b[i];
            }
        }
        let mut counts = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, _) in row {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = col_start.clone();
        let mut col_rows = vec![0; nnz];
        let mut col_vals = vec![0.0; nnz];
        for (i, row) in lp.rows.iter().enumerate() {
            let s = if flipped[i] { -1.0 } else { 1.0 };
            for &(j, v) in row {
                col_rows[fill[j]] = i;
                col_vals[fill[j]] = s * v;
                fill[j] += 1;
            }
        }
        let negate = lp.sense == Sense::Maximize;
        let cost = lp
            .objective
            .iter()
            .map(|&c| if negate { -c } else { c })
            .collect();
        let basis: Vec<usize> = (n..n + m).collect();
        let mut position = vec![None; n + m];
        for (p, &v) in basis.iter().enumerate() {
            position[v] = Some(p);
        }
        Self {
            m,
            n,
            col_start,
            col_rows,
            col_vals,
            x_b: b.clone(),
            b,
            flipped,
            cost,
            negate,
            basis,
            position,
            factor: Factor::identity(m),
            iterations: 0,
            max_iterations: 50 * (n + m) + 1000,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n
    }

    fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        if j >= self.n {
            v[j - self.n] = 1.0;
        } else {
            for k in self.col_start[j]..self.col_start[j + 1] {
                v[self.col_rows[k]] = self.col_vals[k];
            }
        }
        v
    }

    fn column_sparse(&self, j: usize) -> Vec<(usize, f64)> {
        if j >= self.n {
            vec![(j - self.n, 1.0)]
        } else {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| (self.col_rows[k], self.col_vals[k]))
                .collect()
        }
    }

    fn dot_column(&self, y: &[f64], j: usize) -> f64 {
        if j >= self.n {
            y[j - self.n]
        } else {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| y[self.col_rows[k]] * self.col_vals[k])
                .sum()
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let cols: Vec<Vec<(usize, f64)>> =
            self.basis.iter().map(|&j| self.column_sparse(j)).collect();
        self.factor = Factor::new(self.m, &cols)
            .map_err(|_| LpError::NumericBreakdown("singular basis after refactorization".into()))?;
        self.x_b = self.factor.ftran(&self.b);
        Ok(())
    }

    fn phase_cost(&self, phase_one: bool, j: usize) -> f64 {
        if phase_one {
            if self.is_artificial(j) {
                1.0
            } else {
                0.0
            }
        } else if self.is_artificial(j) {
            0.0
        } else {
            self.cost[j]
        }
    }

    fn duals(&self, phase_one: bool) -> Vec<f64> {
        let c_b: Vec<f64> = self
            .basis
            .iter()
            .map(|&j| self.phase_cost(phase_one, j))
            .collect();
        self.factor.btran(&c_b)
    }

    fn pivot(&mut self, q: usize, r: usize, alpha: &[f64], theta: f64) -> Result<(), LpError> {
        for (x, a) in self.x_b.iter_mut().zip(alpha) {
            *x -= theta * a;
        }
        self.x_b[r] = theta;
        let leaving = self.basis[r];
        self.position[leaving] = None;
        self.basis[r] = q;
        self.position[q] = Some(r);
        self.factor.push_eta(r, alpha);
        self.iterations += 1;
        if self.factor.eta_count() >= REFACTOR_INTERVAL {
            self.refactor()?;
        }
        Ok(())
    }

    fn iterate(&mut self, phase_one: bool, pricing: Pricing) -> Result<(Step, bool), LpError> {
        let y = self.duals(phase_one);
        let mut entering: Option<(usize, f64)> = None;
        let limit = if phase_one { self.n + self.m } else { self.n };
        for j in 0..limit {
            if self.position[j].is_some() {
                continue;
            }
            let d = self.phase_cost(phase_one, j) - self.dot_column(&y, j);
            if d < -OPT_TOL {
                match pricing {
                    Pricing::Bland => {
                        entering = Some((j, d));
                        break;
                    }
                    Pricing::Dantzig => {
                        if entering.is_none_or(|(_, best)| d < best) {
                            entering = Some((j, d));
                        }
                    }
                }
            }
        }
        let Some((q, d_q)) = entering else {
            return Ok((Step::Optimal, false));
        };
        let alpha = self.factor.ftran(&self.column_dense(q));

        let mut leave: Option<(usize, f64)> = None;
        for (i, &a) in alpha.iter().enumerate() {
            let basic = self.basis[i];
            let ratio = if !phase_one && self.is_artificial(basic) {
                // Redundant-row artificials are pinned at zero.
                if a.abs() > PIVOT_TOL {
                    0.0
                } else {
                    continue;
                }
            } else if a > PIVOT_TOL {
                self.x_b[i].max(0.0) / a
            } else {
                continue;
            };
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let better = if ratio < best - 1e-12 {
                        true
                    } else if ratio <= best + 1e-12 {
                        match pricing {
                            Pricing::Dantzig => a.abs() > alpha[r].abs(),
                            Pricing::Bland => basic < self.basis[r],
                        }
                    } else {
                        false
                    };
                    if better {
                        Some((i, ratio.min(best)))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, _)) = leave else {
            return Ok((Step::Unbounded, false));
        };
        let theta = if !phase_one && self.is_artificial(self.basis[r]) {
            0.0
        } else {
            self.x_b[r].max(0.0) / alpha[r]
        };
        let degenerate = theta * d_q.abs() <= 1e-14;
        self.pivot(q, r, &alpha, theta)?;
        Ok((Step::Pivoted, degenerate))
    }

    /// Runs simplex iterations until optimality, with a refactorization
    /// check at the end so the reported basis is clean.
    fn run(&mut self, phase_one: bool) -> Result<Step, LpError> {
        let mut pricing = Pricing::Dantzig;
        let mut stall = 0usize;
        let mut confirmations = 0;
        loop {
            if self.iterations > self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let (step, degenerate) = self.iterate(phase_one, pricing)?;
            match step {
                Step::Pivoted => {
                    if degenerate {
                        stall += 1;
                        if stall > STALL_LIMIT {
                            pricing = Pricing::Bland;
                        }
                    } else {
                        stall = 0;
                        pricing = Pricing::Dantzig;
                    }
                }
                Step::Unbounded => return Ok(Step::Unbounded),
                Step::Optimal => {
                    if self.factor.eta_count() == 0 || confirmations >= 3 {
                        return Ok(Step::Optimal);
                    }
                    confirmations += 1;
                    self.refactor()?;
                }
            }
        }
    }

    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let mut e = vec![0.0; self.m];
            e[r] = 1.0;
            let rho = self.factor.btran(&e);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.position[j].is_some() {
                    continue;
                }
                let a = self.dot_column(&rho, j);
                if a.abs() > DRIVE_OUT_TOL && best.is_none_or(|(_, v)| a.abs() > v.abs()) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.factor.ftran(&self.column_dense(q));
                let theta = self.x_b[r] / alpha[r];
                self.pivot(q, r, &alpha, theta)?;
            }
        }
        Ok(())
    }

    fn unflip(&self, y: &mut [f64]) {
        for (v, &f) in y.iter_mut().zip(&self.flipped) {
            if f {
                *v = -*v;
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (p, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.x_b[p].max(0.0);
            }
        }
        x
    }

    pub(crate) fn solve(mut self, phase_two: bool) -> Result<LpSolution, LpError> {
        self.run(true)?;
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.x_b)
            .filter(|(&j, _)| self.is_artificial(j))
            .map(|(_, &x)| x.max(0.0))
            .sum();
        let scale = 1.0 + self.b.iter().sum::<f64>();
        if infeasibility > FEAS_TOL * scale {
            let mut y = self.duals(true);
            self.unflip(&mut y);
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: self.primal(),
                duals: vec![0.0; self.m],
                objective_value: f64::NAN,
                farkas: Some(y),
                iterations: self.iterations,
            });
        }
        self.drive_out_artificials()?;
        if !phase_two {
            self.refactor()?;
            return Ok(LpSolution {
                status: LpStatus::Optimal,
                primal: self.primal(),
                duals: vec![0.0; self.m],
                objective_value: 0.0,
                farkas: None,
                iterations: self.iterations,
            });
        }
        if let Step::Unbounded = self.run(false)? {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                primal: self.primal(),
                duals: vec![0.0; self.m],
                objective_value: if self.negate {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                farkas: None,
                iterations: self.iterations,
            });
        }
        let worst = self.x_b.iter().fold(0.0f64, |w, &x| w.max(-x));
        if worst > FEAS_TOL * scale {
            return Err(LpError::NumericBreakdown(format!(
                "basic solution infeasible by {worst:e} at optimality"
            )));
        }
        let x = self.primal();
        let mut y = self.duals(false);
        self.unflip(&mut y);
        let mut value: f64 = (0..self.n).map(|j| self.cost[j] * x[j]).sum();
        if self.negate {
            value = -value;
            y.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(LpSolution {
            status: LpStatus::Optimal,
            primal: x,
            duals: y,
            objective_value: value,
            farkas: None,
            iterations: self.iterations,
        })
    }
}
