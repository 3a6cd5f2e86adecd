//! One-dimensional Bass martingales from a Dirac start, discretized as exact
//! lattice martingales, and their exit-stopped laws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::GeometrySummary;
use crate::mbb::{Instance, PrimalSolution};
use crate::measure::{quantize_gaussian, DiscreteMeasure, Point};
use crate::tolerance::TAU_LP;
use crate::transport::{mcov_1d, w2};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn require_1d(m: &DiscreteMeasure) -> Result<()> {
    if m.dim() != 1 {
        return Err(Error::UnsupportedDimension(m.dim()));
    }
    Ok(())
}

/// Nondecreasing right-continuous step function pushing `N(0, 1)` to a law.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMap {
    /// `values.len() - 1` sorted thresholds.
    pub thresholds: Vec<f64>,
    /// Increasing atom values.
    pub values: Vec<f64>,
}

impl StepMap {
    pub fn eval(&self, z: f64) -> f64 {
        self.values[self.thresholds.partition_point(|&t| t <= z)]
    }

    /// `E[g(b + sigma Z)]`, exact through the normal distribution function.
    pub fn smoothed(&self, b: f64, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return self.eval(b);
        }
        let n = std_normal();
        let mut prev = 0.0;
        let mut total = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            let cdf = match self.thresholds.get(k) {
                Some(&t) => n.cdf((t - b) / sigma),
                None => 1.0,
            };
            total += v * (cdf - prev);
            prev = cdf;
        }
        total
    }
}

fn sorted_atoms(pi: &DiscreteMeasure) -> (Vec<f64>, Vec<f64>) {
    let mut atoms: Vec<(f64, f64)> = pi.atoms().map(|(p, w)| (p[0], w)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms.into_iter().unzip()
}

/// `g = F^{-1} o Phi` with `g(Z) ~ pi` for standard normal `Z`.
pub fn quantile_map(pi: &DiscreteMeasure) -> Result<StepMap> {
    require_1d(pi)?;
    let (values, weights) = sorted_atoms(pi);
    let n = std_normal();
    let mut cum = 0.0;
    let mut thresholds = Vec::with_capacity(values.len().saturating_sub(1));
    for w in &weights[..weights.len() - 1] {
        cum += w;
        thresholds.push(n.inverse_cdf(cum.min(1.0)));
    }
    Ok(StepMap { thresholds, values })
}

/// Finite-state martingale on times `0 = t_0 < ... < t_m = 1`.
#[derive(Debug, Clone)]
pub struct LatticeMartingale {
    pub x: f64,
    pub times: Vec<f64>,
    /// State values per time; `states[0]` has one entry.
    pub states: Vec<Vec<f64>>,
    /// `transitions[i][s]` lists `(successor, probability)` into `states[i + 1]`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl LatticeMartingale {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial_value(&self) -> f64 {
        self.states[0][0]
    }

    /// Law of the value at time 1.
    pub fn terminal_law(&self) -> Result<DiscreteMeasure> {
        let mut mass = vec![1.0];
        for i in 0..self.steps() {
            mass = self.push_forward(i, &mass, |_| true);
        }
        law_of(&self.states[self.steps()], &mass)
    }

    fn push_forward<F: Fn(f64) -> bool>(&self, i: usize, mass: &[f64], alive: F) -> Vec<f64> {
        let mut next = vec![0.0; self.states[i + 1].len()];
        for (s, &w) in mass.iter().enumerate() {
            if w == 0.0 || !alive(self.states[i][s]) {
                continue;
            }
            for &(t, p) in &self.transitions[i][s] {
                next[t] += w * p;
            }
        }
        next
    }

    /// Largest `|sum_t p_t - 1|` over all rows.
    pub fn stochastic_residual(&self) -> f64 {
        self.rows()
            .map(|(_, _, row)| (row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|E[next | s] - s|` over all rows.
    pub fn martingale_residual(&self) -> f64 {
        self.rows()
            .map(|(i, s, row)| {
                let mean: f64 = row.iter().map(|&(t, p)| p * self.states[i + 1][t]).sum();
                (mean - self.states[i][s]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest one-step move `|s' - s|` out of a state satisfying `from`.
    pub fn max_jump<F: Fn(f64) -> bool>(&self, from: F) -> f64 {
        self.rows()
            .filter(|&(i, s, _)| from(self.states[i][s]))
            .flat_map(|(i, s, row)| {
                let v = self.states[i][s];
                row.iter().map(move |&(t, _)| (self.states[i + 1][t] - v).abs())
            })
            .fold(0.0, f64::max)
    }

    fn rows(&self) -> impl Iterator<Item = (usize, usize, &Vec<(usize, f64)>)> {
        self.transitions
            .iter()
            .enumerate()
            .flat_map(|(i, layer)| layer.iter().enumerate().map(move |(s, row)| (i, s, row)))
    }
}

fn law_of(values: &[f64], mass: &[f64]) -> Result<DiscreteMeasure> {
    let atoms = values
        .iter()
        .zip(mass)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| (Point::scalar(v), w))
        .collect();
    DiscreteMeasure::from_unnormalized(1, atoms)
}

/// Brownian grid cells per `sqrt(dt)`.
const GRID_REFINEMENT: f64 = 4.0;
/// Brownian paths are confined to `|b| <= BROWNIAN_RANGE`.
const BROWNIAN_RANGE: f64 = 7.0;

/// Lattice version of the Bass martingale `M_t = E[g(B_1) | B_t]` started
/// at `x` with terminal law `pi`.
///
/// Brownian increments over the first `m - 1` steps come from the `k`-point
/// Gaussian quantization snapped to a recombining grid. The last step maps
/// each grid point straight onto the atoms of `pi` through Gaussian
/// probabilities, with thresholds tuned so the terminal law is `pi` itself.
/// State values then follow by backward induction, so every row is an exact
/// martingale step.
pub fn bass_lattice(x: f64, pi: &DiscreteMeasure, m: usize, k: usize) -> Result<LatticeMartingale> {
    require_1d(pi)?;
    if m == 0 || k < 2 {
        return Err(Error::InvalidArgument(format!("lattice needs m >= 1 and k >= 2, got m = {m}, k = {k}")));
    }
    let bary = pi.barycenter()[0];
    if (bary - x).abs() > 1e-10 * (1.0 + x.abs()) {
        return Err(Error::Precondition(format!("terminal law has barycenter {bary}, expected {x}")));
    }
    let (values, weights) = sorted_atoms(pi);
    let times: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let sqdt = (1.0 / m as f64).sqrt();
    let cell = sqdt / GRID_REFINEMENT;
    let half = (BROWNIAN_RANGE / cell).ceil() as i64;

    // Merged grid offsets of one quantized increment.
    let xi = quantize_gaussian(1, k)?;
    let mut offsets: Vec<(i64, f64)> = Vec::new();
    for (p, w) in xi.atoms() {
        let o = (p[0] * GRID_REFINEMENT).round() as i64;
        match offsets.iter_mut().find(|(q, _)| *q == o) {
            Some(e) => e.1 += w,
            None => offsets.push((o, w)),
        }
    }
    offsets.sort_by_key(|e| e.0);
    if offsets.len() < 2 {
        return Err(Error::Numeric("quantized increments collapse onto one grid point".into()));
    }

    // Forward pass over grid indices in [-half, half].
    let mut layers: Vec<Vec<i64>> = vec![vec![0]];
    let mut probs: Vec<Vec<f64>> = vec![vec![1.0]];
    let mut grid_rows: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(m);
    for _ in 1..m {
        let cur = layers.last().unwrap();
        let lo = (cur[0] + offsets[0].0).max(-half);
        let hi = (cur[cur.len() - 1] + offsets[offsets.len() - 1].0).min(half);
        let mut reached = vec![false; (hi - lo + 1) as usize];
        let mut rows = Vec::with_capacity(cur.len());
        for &b in cur {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(offsets.len());
            for &(o, w) in &offsets {
                let t = ((b + o).clamp(-half, half) - lo) as usize;
                reached[t] = true;
                match row.iter_mut().find(|e| e.0 == t) {
                    Some(e) => e.1 += w,
                    None => row.push((t, w)),
                }
            }
            rows.push(row);
        }
        // Compact to reached indices.
        let mut index = vec![usize::MAX; reached.len()];
        let mut next = Vec::new();
        for (t, &r) in reached.iter().enumerate() {
            if r {
                index[t] = next.len();
                next.push(lo + t as i64);
            }
        }
        for row in rows.iter_mut() {
            for e in row.iter_mut() {
                e.0 = index[e.0];
            }
        }
        let p_cur = probs.last().unwrap();
        let mut p_next = vec![0.0; next.len()];
        for (s, row) in rows.iter().enumerate() {
            for &(t, p) in row {
                p_next[t] += p_cur[s] * p;
            }
        }
        grid_rows.push(rows);
        layers.push(next);
        probs.push(p_next);
    }

    // Final step: thresholds theta_k with P(B_{m-1} + sqrt(dt) Z < theta_k) = F_k.
    let n = std_normal();
    let last_b: Vec<f64> = layers.last().unwrap().iter().map(|&b| b as f64 * cell).collect();
    let last_p = probs.last().unwrap();
    let mixture_cdf = |theta: f64| -> f64 {
        last_b
            .iter()
            .zip(last_p)
            .map(|(&b, &p)| p * n.cdf((theta - b) / sqdt))
            .sum()
    };
    let mut thresholds = Vec::with_capacity(values.len().saturating_sub(1));
    let mut cum = 0.0;
    for w in &weights[..weights.len() - 1] {
        cum += w;
        let (mut a, mut b) = (-BROWNIAN_RANGE - 10.0, BROWNIAN_RANGE + 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mixture_cdf(mid) < cum {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        thresholds.push(0.5 * (a + b));
    }
    let final_rows: Vec<Vec<(usize, f64)>> = last_b
        .iter()
        .map(|&b| {
            let mut prev = 0.0;
            let mut row = Vec::with_capacity(values.len());
            for k in 0..values.len() {
                let cdf = match thresholds.get(k) {
                    Some(&t) => n.cdf((t - b) / sqdt),
                    None => 1.0,
                };
                if cdf > prev {
                    row.push((k, cdf - prev));
                }
                prev = cdf;
            }
            let total: f64 = row.iter().map(|e| e.1).sum();
            row.iter_mut().for_each(|e| e.1 /= total);
            row
        })
        .collect();
    grid_rows.push(final_rows);

    // Backward induction of state values.
    let mut states = vec![Vec::new(); m + 1];
    states[m] = values;
    for i in (0..m).rev() {
        let (head, tail) = states.split_at_mut(i + 1);
        let next = &tail[0];
        head[i] = grid_rows[i]
            .iter()
            .map(|row| row.iter().map(|&(t, p)| p * next[t]).sum())
            .collect();
    }
    Ok(LatticeMartingale {
        x,
        times,
        states,
        transitions: grid_rows,
    })
}

/// `K^j` restricted to the line: a closed interval, or empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub j: usize,
    pub interval: Option<(f64, f64)>,
}

impl Window {
    pub fn contains(&self, v: f64) -> bool {
        matches!(self.interval, Some((lo, hi)) if lo <= v && v <= hi)
    }

    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }

    /// Distance from `v` to the window; `+inf` when empty.
    pub fn distance(&self, v: f64) -> f64 {
        match self.interval {
            Some((lo, hi)) => (lo - v).max(v - hi).max(0.0),
            None => f64::INFINITY,
        }
    }
}

/// `[max(lo + 1/j, -j), min(hi - 1/j, j)]` for `I = (lo, hi)`.
pub fn kj_window(geo: &GeometrySummary, j: usize) -> Result<Window> {
    let (lo, hi) = geo.interval().ok_or(Error::UnsupportedDimension(geo.dim()))?;
    if hi <= lo {
        return Err(Error::Precondition("relative interior is empty".into()));
    }
    if j == 0 {
        return Err(Error::InvalidArgument("window index starts at 1".into()));
    }
    let jf = j as f64;
    let a = (lo + 1.0 / jf).max(-jf);
    let b = (hi - 1.0 / jf).min(jf);
    Ok(Window {
        j,
        interval: (a <= b).then_some((a, b)),
    })
}

/// Law of the chain stopped on leaving `w` (or at time 1). A start outside
/// `w` returns `delta_x`.
pub fn stopped_law(chain: &LatticeMartingale, w: &Window) -> Result<DiscreteMeasure> {
    if !w.contains(chain.initial_value()) {
        return Ok(DiscreteMeasure::dirac(Point::scalar(chain.x)));
    }
    let mut absorbed: Vec<(f64, f64)> = Vec::new();
    let mut mass = vec![1.0];
    for i in 0..chain.steps() {
        mass = chain.push_forward(i, &mass, |v| w.contains(v));
        for (s, wgt) in mass.iter_mut().enumerate() {
            let v = chain.states[i + 1][s];
            if *wgt > 0.0 && !w.contains(v) {
                absorbed.push((v, *wgt));
                *wgt = 0.0;
            }
        }
    }
    let terminal = chain.states[chain.steps()].iter().copied().zip(mass);
    let atoms = absorbed
        .into_iter()
        .chain(terminal)
        .filter(|&(_, wgt)| wgt > 0.0)
        .map(|(v, wgt)| (Point::scalar(v), wgt))
        .collect();
    DiscreteMeasure::from_unnormalized(1, atoms)
}

/// Mass of paths still inside `w` at time 1.
pub fn survival_mass(chain: &LatticeMartingale, w: &Window) -> f64 {
    if !w.contains(chain.initial_value()) {
        return 0.0;
    }
    let mut mass = vec![1.0];
    for i in 0..chain.steps() {
        mass = chain.push_forward(i, &mass, |v| w.contains(v));
    }
    chain.states[chain.steps()]
        .iter()
        .zip(&mass)
        .filter(|(v, _)| w.contains(**v))
        .map(|(_, m)| m)
        .sum()
}

/// Exact one-dimensional convex order through call prices: equal means and
/// `int (v - s)^+ dmu <= int (v - s)^+ dnu` at every atom `s` of either law.
/// Returns the largest violation (nonpositive when the order holds).
pub fn convex_order_gap_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    require_1d(mu)?;
    require_1d(nu)?;
    let call = |m: &DiscreteMeasure, s: f64| m.atoms().map(|(p, w)| w * (p[0] - s).max(0.0)).sum::<f64>();
    let mut worst = (mu.barycenter()[0] - nu.barycenter()[0]).abs();
    for s in mu.points().iter().chain(nu.points()).map(|p| p[0]) {
        worst = worst.max(call(mu, s) - call(nu, s));
    }
    Ok(worst)
}

/// Lattice parameters and acceptance thresholds for [`lemma2_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Params {
    pub windows: usize,
    pub steps: usize,
    pub increments: usize,
    /// Bound on `W2(pi^J_x, pi_x)`.
    pub w2_tol: f64,
    /// Slack for monotonicity of `mcov` and `W2` in `j`.
    pub chain_tol: f64,
}

impl Default for Lemma2Params {
    fn default() -> Self {
        Self {
            windows: 8,
            steps: 32,
            increments: 32,
            w2_tol: 0.1,
            chain_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lemma2Row {
    pub x: f64,
    pub j: usize,
    pub window: Window,
    /// Dirac absorption when the start lies outside the window.
    pub absorbed_at_start: bool,
    /// Distance of the farthest stopped atom beyond the window.
    pub overshoot: f64,
    /// Allowed overshoot: one lattice move out of the window.
    pub overshoot_slack: f64,
    /// Violation of `pi^j <=_c pi^{j+1}` (or `<=_c pi_x` at `j = J`).
    pub order_gap: f64,
    /// Violation of `pi^j <=_c pi_x`.
    pub order_gap_target: f64,
    pub mcov: f64,
    pub w2: f64,
    pub survival: f64,
    pub barycenter_error: f64,
}

#[derive(Debug, Clone)]
pub struct Lemma2Report {
    pub params: Lemma2Params,
    pub rows: Vec<Lemma2Row>,
    pub chain_martingale_residual: f64,
    pub chain_stochastic_residual: f64,
    /// `mcov(pi_x, gamma)` per atom of `mu`.
    pub target_mcov: Vec<f64>,
    pub failures: Vec<String>,
}

impl Lemma2Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Rows, lattice martingale and stochastic residuals, target mcov and
/// failures for one atom of `mu`.
type PerAtom = (Vec<Lemma2Row>, f64, f64, f64, Vec<String>);

/// Builds `pi^j_x` for `j = 1..J` from lattice Bass martingales and checks
/// supports, the convex-order chain, monotonicity of `mcov(pi^j_x, gamma)`
/// and `W2` convergence towards `pi_x`.
pub fn lemma2_report(inst: &Instance, ps: &PrimalSolution, params: Lemma2Params) -> Result<Lemma2Report> {
    require_1d(&inst.nu)?;
    let tol = TAU_LP.max(params.chain_tol);
    let per_x: Vec<Result<PerAtom>> = (0..inst.mu.len())
        .into_par_iter()
        .map(|i| {
            let x = inst.mu.point(i)[0];
            let target = ps.sbm.kernel(i);
            let bary = target.barycenter()[0];
            let chain = bass_lattice(bary, &target, params.steps, params.increments)?;
            let target_mcov = mcov_1d(&target, &inst.gamma)?;
            let mut laws = Vec::with_capacity(params.windows);
            let mut windows = Vec::with_capacity(params.windows);
            for j in 1..=params.windows {
                let w = kj_window(&inst.geometry, j)?;
                laws.push(stopped_law(&chain, &w)?);
                windows.push(w);
            }
            let mut rows = Vec::with_capacity(params.windows);
            let mut failures = Vec::new();
            for (idx, (law, w)) in laws.iter().zip(&windows).enumerate() {
                let j = idx + 1;
                let absorbed_at_start = !w.contains(chain.initial_value());
                let next = laws.get(idx + 1).unwrap_or(&target);
                let overshoot = law.points().iter().map(|p| w.distance(p[0])).fold(0.0, f64::max);
                let overshoot_slack = if absorbed_at_start {
                    0.0
                } else {
                    chain.max_jump(|v| w.contains(v))
                };
                let row = Lemma2Row {
                    x,
                    j,
                    window: *w,
                    absorbed_at_start,
                    overshoot: if absorbed_at_start { 0.0 } else { overshoot },
                    overshoot_slack,
                    order_gap: convex_order_gap_1d(law, next)?,
                    order_gap_target: convex_order_gap_1d(law, &target)?,
                    mcov: mcov_1d(law, &inst.gamma)?,
                    w2: w2(law, &target)?,
                    survival: survival_mass(&chain, w),
                    barycenter_error: (law.barycenter()[0] - x).abs(),
                };
                let tag = format!("x = {x}, j = {j}");
                if absorbed_at_start && (law.len() != 1 || law.point(0)[0].to_bits() != chain.x.to_bits()) {
                    failures.push(format!("{tag}: start outside the window but law is not delta_x"));
                }
                if row.overshoot > row.overshoot_slack + 1e-12 {
                    failures.push(format!(
                        "{tag}: stopped support exceeds the window by {} (slack {})",
                        row.overshoot, row.overshoot_slack
                    ));
                }
                if row.order_gap > tol || row.order_gap_target > tol {
                    failures.push(format!(
                        "{tag}: convex-order chain violated by {}",
                        row.order_gap.max(row.order_gap_target)
                    ));
                }
                if row.barycenter_error > 1e-10 {
                    failures.push(format!("{tag}: barycenter off by {}", row.barycenter_error));
                }
                rows.push(row);
            }
            for pair in rows.windows(2) {
                let tag = format!("x = {x}, j = {}", pair[1].j);
                if pair[1].mcov < pair[0].mcov - params.chain_tol {
                    failures.push(format!("{tag}: mcov decreased from {} to {}", pair[0].mcov, pair[1].mcov));
                }
                if pair[1].w2 > pair[0].w2 + params.chain_tol {
                    failures.push(format!("{tag}: W2 increased from {} to {}", pair[0].w2, pair[1].w2));
                }
            }
            if let Some(last) = rows.last() {
                if last.mcov > target_mcov + params.chain_tol {
                    failures.push(format!("x = {x}: mcov of the last stopped law exceeds mcov(pi_x, gamma)"));
                }
                if last.w2 > params.w2_tol {
                    failures.push(format!(
                        "x = {x}, j = {}: W2 to pi_x is {} > {}",
                        last.j, last.w2, params.w2_tol
                    ));
                }
            }
            Ok((
                rows,
                chain.martingale_residual(),
                chain.stochastic_residual(),
                target_mcov,
                failures,
            ))
        })
        .collect();
    let mut report = Lemma2Report {
        params,
        rows: Vec::new(),
        chain_martingale_residual: 0.0,
        chain_stochastic_residual: 0.0,
        target_mcov: Vec::new(),
        failures: Vec::new(),
    };
    for r in per_x {
        let (rows, mres, sres, tm, fails) = r?;
        report.rows.extend(rows);
        report.chain_martingale_residual = report.chain_martingale_residual.max(mres);
        report.chain_stochastic_residual = report.chain_stochastic_residual.max(sres);
        report.target_mcov.push(tm);
        report.failures.extend(fails);
    }
    if report.chain_martingale_residual > 1e-12 || report.chain_stochastic_residual > 1e-12 {
        report.failures.push(format!(
            "lattice rows off by {} (martingale) and {} (stochastic)",
            report.chain_martingale_residual, report.chain_stochastic_residual
        ));
    }
    Ok(report)
}

/// Moments of a stopped law estimated by simulation.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub second_moment: f64,
    /// Standard error of `second_moment`.
    pub second_moment_se: f64,
    pub survival: f64,
}

/// Simulates `M_t = E[g(B_1) | B_t]` on `m` equal steps with exact Gaussian
/// increments, stopping on exit from `w`.
pub fn monte_carlo_stopped(g: &StepMap, w: &Window, m: usize, paths: usize, seed: u64) -> MonteCarloEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqdt = (1.0 / m as f64).sqrt();
    let start = g.smoothed(0.0, 1.0);
    let (mut s1, mut s2, mut s4, mut alive_end) = (0.0, 0.0, 0.0, 0usize);
    for _ in 0..paths {
        let mut b = 0.0;
        let mut v = start;
        let mut stopped = !w.contains(v);
        for i in 1..=m {
            if stopped {
                break;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            b += sqdt * z;
            let t = i as f64 / m as f64;
            v = g.smoothed(b, (1.0 - t).max(0.0).sqrt());
            stopped = !w.contains(v);
        }
        if !stopped {
            alive_end += 1;
        }
        s1 += v;
        s2 += v * v;
        s4 += v.powi(4);
    }
    let n = paths as f64;
    let m2 = s2 / n;
    let var = (s4 / n - m2 * m2).max(0.0);
    MonteCarloEstimate {
        mean: s1 / n,
        second_moment: m2,
        second_moment_se: (var / n).sqrt(),
        survival: alive_end as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::check_convex_order;

    fn law(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (Point::scalar(x), w)).collect()).unwrap()
    }

    fn pm1() -> DiscreteMeasure {
        law(&[(-1.0, 0.5), (1.0, 0.5)])
    }

    #[test]
    fn quantile_maps() {
        let g = quantile_map(&DiscreteMeasure::dirac(Point::scalar(2.5))).unwrap();
        assert_eq!(g.eval(-3.0), 2.5);
        assert_eq!(g.eval(3.0), 2.5);
        let g = quantile_map(&pm1()).unwrap();
        assert_eq!(g.thresholds.len(), 1);
        assert!(g.thresholds[0].abs() < 1e-12);
        assert_eq!(g.eval(-0.1), -1.0);
        assert_eq!(g.eval(0.1), 1.0);
        let g = quantile_map(&law(&[(0.0, 0.25), (4.0, 0.75)])).unwrap();
        assert!((g.thresholds[0] + 0.6744897501960817).abs() < 1e-9);
        // Trapezoid rule on the Gaussian density for P(g(Z) = 0).
        let (a, n) = (-10.0, 200_000);
        let hstep = (g.thresholds[0] - a) / n as f64;
        let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mass: f64 = (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n { 0.5 } else { 1.0 };
                c * dens(a + i as f64 * hstep)
            })
            .sum::<f64>()
            * hstep;
        assert!((mass - 0.25).abs() < 1e-8);
        assert!(quantile_map(&DiscreteMeasure::dirac(Point::xy(0.0, 0.0))).is_err());
    }

    #[test]
    fn dirac_target_gives_constant_chain() {
        let c = bass_lattice(0.7, &DiscreteMeasure::dirac(Point::scalar(0.7)), 8, 8).unwrap();
        assert!(c.states.iter().flatten().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn two_point_chain_is_an_exact_martingale_with_the_right_terminal_law() {
        let c = bass_lattice(0.0, &pm1(), 16, 16).unwrap();
        assert!(c.martingale_residual() < 1e-12);
        assert!(c.stochastic_residual() < 1e-12);
        assert!(c.initial_value().abs() < 1e-12);
        let term = c.terminal_law().unwrap();
        assert!(w2(&term, &pm1()).unwrap() < 0.05);
        assert!((term.weight(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lattice_values_track_the_continuous_bass_martingale() {
        let c = bass_lattice(0.0, &pm1(), 32, 32).unwrap();
        let g = quantile_map(&pm1()).unwrap();
        let cell = (1.0f64 / 32.0).sqrt() / GRID_REFINEMENT;
        // The middle layer is symmetric around b = 0.
        let mid = &c.states[16];
        let n = mid.len();
        let b0 = -((n as f64 - 1.0) / 2.0) * cell;
        for (s, &v) in mid.iter().enumerate() {
            let b = b0 + s as f64 * cell;
            if b.abs() < 1.0 {
                assert!((v - g.smoothed(b, 0.5f64.sqrt())).abs() < 0.02, "b = {b}");
            }
        }
    }

    #[test]
    fn windows() {
        let geo = |lo: f64, hi: f64| GeometrySummary::of(&law(&[(lo, 0.5), (hi, 0.5)]));
        assert_eq!(kj_window(&geo(-1.0, 1.0), 2).unwrap().interval, Some((-0.5, 0.5)));
        assert_eq!(kj_window(&geo(-1.0, 1.0), 1).unwrap().interval, Some((0.0, 0.0)));
        assert_eq!(kj_window(&geo(0.0, 10.0), 4).unwrap().interval, Some((0.25, 4.0)));
        assert!(kj_window(&geo(0.0, 1.0), 1).unwrap().is_empty());
        for j in 1..20 {
            let (a, b) = (kj_window(&geo(0.0, 10.0), j).unwrap(), kj_window(&geo(0.0, 10.0), j + 1).unwrap());
            if let Some((lo, hi)) = a.interval {
                assert!(b.contains(lo) && b.contains(hi));
            }
        }
    }

    #[test]
    fn stopping_rules() {
        let c = bass_lattice(0.0, &pm1(), 16, 16).unwrap();
        let all = Window {
            j: 0,
            interval: Some((-2.0, 2.0)),
        };
        let s = stopped_law(&c, &all).unwrap();
        assert!(w2(&s, &c.terminal_law().unwrap()).unwrap() < 1e-12);
        let off = Window {
            j: 0,
            interval: Some((0.5, 2.0)),
        };
        let d = stopped_law(&c, &off).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.point(0)[0].to_bits(), 0.0f64.to_bits());
        let half = Window {
            j: 2,
            interval: Some((-0.5, 0.5)),
        };
        let s = stopped_law(&c, &half).unwrap();
        assert!(s.barycenter()[0].abs() < 1e-12);
        assert!(s.points().iter().all(|p| p[0].abs() <= 1.0));
        let refl = s.reflected();
        let sorted = |m: &DiscreteMeasure| sorted_atoms(m);
        let ((va, wa), (vb, wb)) = (sorted(&s), sorted(&refl));
        assert_eq!(va.len(), vb.len());
        for k in 0..va.len() {
            assert!((va[k] - vb[k]).abs() < 1e-12 && (wa[k] - wb[k]).abs() < 1e-12);
        }
        // Nested windows stop later, hence larger in convex order.
        assert!(convex_order_gap_1d(&s, &stopped_law(&c, &all).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn call_price_order_agrees_with_lp() {
        let a = law(&[(-0.5, 0.5), (0.5, 0.5)]);
        let b = pm1();
        let c = law(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        for (p, q) in [(&a, &b), (&b, &a), (&a, &c), (&c, &b), (&b, &c)] {
            let lp = check_convex_order(p, q).unwrap().holds;
            assert_eq!(lp, convex_order_gap_1d(p, q).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn lattice_matches_simulation() {
        let target = law(&[(-1.0, 0.3), (0.5, 0.4), (1.25, 0.3)]);
        let x = target.barycenter()[0];
        let c = bass_lattice(x, &target, 32, 32).unwrap();
        let w = Window {
            j: 4,
            interval: Some((-0.75, 0.75)),
        };
        let s = stopped_law(&c, &w).unwrap();
        let g = quantile_map(&target).unwrap();
        let mc = monte_carlo_stopped(&g, &w, 32, 100_000, 11);
        assert!((mc.mean - x).abs() < 0.02);
        let lattice_sm = s.second_moment();
        assert!(
            (mc.second_moment - lattice_sm).abs() <= 3.0 * mc.second_moment_se,
            "mc {} +- {}, lattice {}",
            mc.second_moment,
            mc.second_moment_se,
            lattice_sm
        );
    }
}
