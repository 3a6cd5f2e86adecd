//! Dual optimizing sequences `psi_n -> psi_hat` built three ways.

#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::{canonicalize, envelope, Affine, ConvexPL};
use crate::error::{Error, Result};
use crate::geometry::BoundaryGap;
use crate::mbb::Instance;
use crate::measure::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Perturb,
    Entropic,
    Adversarial,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Perturb => "perturb",
            Strategy::Entropic => "entropic",
            Strategy::Adversarial => "adversarial",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perturb" => Ok(Strategy::Perturb),
            "entropic" => Ok(Strategy::Entropic),
            "adversarial" => Ok(Strategy::Adversarial),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Positive schedule decreasing to zero, indexed from `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `first * ratio^(n - 1)`.
    Geometric { first: f64, ratio: f64 },
    /// `first / n`.
    Harmonic { first: f64 },
}

impl Schedule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Schedule::Geometric { first, ratio } => first * ratio.powi(n as i32 - 1),
            Schedule::Harmonic { first } => first / n as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Geometric { first, ratio } => first > 0.0 && ratio > 0.0 && ratio < 1.0,
            Schedule::Harmonic { first } => first > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("schedule {self:?} is not positive and decreasing")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub strategy: Strategy,
    pub len: usize,
    /// Perturbation size, regularization strength or spike height `eta_n`.
    pub schedule: Schedule,
    pub seed: u64,
}

impl SequenceSpec {
    /// Defaults: `h_n = 2^-n` for perturbations, `eps_n = 5 * 10^-n` for the
    /// entropic path, spike height `eta_n = 4^-n / 50`.
    pub fn new(strategy: Strategy, len: usize, seed: u64) -> Self {
        let schedule = match strategy {
            Strategy::Perturb => Schedule::Geometric {
                first: 0.5,
                ratio: 0.5,
            },
            Strategy::Entropic => Schedule::Geometric {
                first: 0.5,
                ratio: 0.1,
            },
            Strategy::Adversarial => Schedule::Geometric {
                first: 0.005,
                ratio: 0.25,
            },
        };
        Self {
            strategy,
            len,
            schedule,
            seed,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }
}

/// Where and how fast an adversarial spike concentrates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeInfo {
    pub gap: BoundaryGap,
    /// Radius `r_n` of the ball around `gap.point` holding the witness.
    pub radii: Vec<f64>,
    /// `b + r_n u`, where `psi_n - psi_hat = 2 (1 + eta_n)`.
    pub witnesses: Vec<Point>,
}

#[derive(Debug, Clone)]
pub struct EntropicStep {
    pub eps: f64,
    /// `sum q <y, z>` of the regularized optimizer.
    pub transport_value: f64,
    pub sweeps: usize,
    /// Joint Newton steps taken after the projection sweeps.
    pub newton_steps: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub spec: SequenceSpec,
    pub psis: Vec<ConvexPL>,
    pub schedule: Vec<f64>,
    pub spike: Option<SpikeInfo>,
    pub entropic: Vec<EntropicStep>,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum SequenceOutcome {
    Generated(Sequence),
    NotApplicable(String),
}

/// Generates `psi_1, ..., psi_len` approaching `psi_hat`, each put in the
/// canonical affine normalization of the instance.
pub fn gen_sequence(spec: &SequenceSpec, inst: &Instance, psi_hat: &ConvexPL) -> Result<SequenceOutcome> {
    if spec.len == 0 {
        return Err(Error::InvalidArgument("sequence length must be positive".into()));
    }
    spec.schedule.validate()?;
    let schedule: Vec<f64> = (1..=spec.len).map(|n| spec.schedule.at(n)).collect();
    let anchor = inst.anchor();
    let grid = inst.nu.points();
    let canon = |psi: &ConvexPL| canonicalize(psi, &anchor, grid).0;
    let mut seq = Sequence {
        spec: spec.clone(),
        psis: Vec::with_capacity(spec.len),
        schedule: schedule.clone(),
        spike: None,
        entropic: Vec::new(),
    };
    match spec.strategy {
        Strategy::Perturb => {
            let g = perturbation_bump(inst, psi_hat, spec.seed);
            for &h in &schedule {
                seq.psis.push(canon(&psi_hat.sum(&g.scale(h))));
            }
        }
        Strategy::Entropic => {
            let steps = entropic_path(inst, &schedule)?;
            for (state, step) in steps {
                let env = envelope(grid, &state)?;
                seq.psis.push(canon(&env));
                seq.entropic.push(step);
            }
        }
        Strategy::Adversarial => {
            let resolution = 1e-6 * inst.geometry.diameter().max(1e-300);
            let Some(gap) = inst.geometry.widest_boundary_gap(&inst.nu, resolution) else {
                return Ok(SequenceOutcome::NotApplicable(
                    "every relative-boundary point of the hull carries mass".into(),
                ));
            };
            // The first ball around b already avoids every atom of nu.
            let clearance = inst
                .nu
                .points()
                .iter()
                .map(|p| p.dist(&gap.point))
                .fold(f64::INFINITY, f64::min);
            let r0 = 0.5 * gap.half_width.min(clearance);
            let mut radii = Vec::with_capacity(spec.len);
            let mut witnesses = Vec::with_capacity(spec.len);
            for (n, &eta) in schedule.iter().enumerate() {
                let r = r0 * 0.5f64.powi(n as i32);
                // Height 2(1 + eta) at the witness keeps the deviation
                // clear of 1 once eta reaches round-off.
                let slope = 2.0 / r;
                let c = gap.offset - eta * r;
                // slope * max(0, <u, y> - c)
                let hinge = ConvexPL::affine(gap.normal.scale(slope), -slope * c)
                    .max(&ConvexPL::constant(inst.dim(), 0.0));
                seq.psis.push(canon(&psi_hat.sum(&hinge)));
                radii.push(r);
                witnesses.push(gap.point.add(&gap.normal.scale(r)));
            }
            seq.spike = Some(SpikeInfo {
                gap,
                radii,
                witnesses,
            });
        }
    }
    Ok(SequenceOutcome::Generated(seq))
}

/// A seeded 1-Lipschitz convex bump `max(0, <s_k, y> - t_k)` vanishing near
/// the anchor and at the atoms where `psi_hat` attains its minimum, so adding
/// it commutes with the canonical normalization and never lowers `psi_hat`.
pub fn perturbation_bump(inst: &Instance, psi_hat: &ConvexPL, seed: u64) -> ConvexPL {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = inst.dim();
    let values = psi_hat.eval_all(inst.nu.points());
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut keep = vec![inst.anchor()];
    for (p, v) in inst.nu.points().iter().zip(&values) {
        if *v <= low + 1e-12 * (1.0 + low.abs()) {
            keep.push(p.clone());
        }
    }
    let margin = 0.05 * inst.geometry.diameter();
    let mut pieces = vec![Affine::new(Point::zeros(dim), 0.0)];
    for _ in 0..4 {
        let r = rng.gen_range(0.5..=1.0);
        let slope = match dim {
            1 => Point::scalar(if rng.gen_bool(0.5) { r } else { -r }),
            _ => {
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::xy(r * t.cos(), r * t.sin())
            }
        };
        let reach = keep.iter().map(|p| slope.dot(p)).fold(f64::NEG_INFINITY, f64::max);
        pieces.push(Affine::new(slope, -(reach + margin * r)));
    }
    ConvexPL::new(dim, pieces).expect("bump pieces share the dimension")
}

/// Hard cap on projection sweeps per regularization level.
pub const MAX_SWEEPS: usize = 10_000;
/// Sweeps hand over to the joint Newton polish once the residual fails to
/// halve over this many of them.
pub const STALL_WINDOW: usize = 25;
/// Cap on joint Newton steps per regularization level.
pub const NEWTON_STEPS: usize = 200;

/// Solves the entropically regularized primal for each `eps` in turn (warm
/// started) by cyclic Bregman projections in log domain. Returns the
/// `psi` multipliers on `spt nu` and diagnostics per level.
pub fn entropic_path(inst: &Instance, eps: &[f64]) -> Result<Vec<(Vec<f64>, EntropicStep)>> {
    let mut solver = Entropic::new(inst);
    let mut out = Vec::with_capacity(eps.len());
    for &e in eps {
        let step = solver.run(e)?;
        out.push((solver.psi.clone(), step));
    }
    Ok(out)
}

struct Entropic<'a> {
    inst: &'a Instance,
    /// `<y_j, z_k>`, row-major in `(j, k)`.
    yz: Vec<f64>,
    psi: Vec<f64>,
    h: Vec<Point>,
    /// `log(mu(x) gamma(z))`.
    log_mass: Vec<f64>,
}

struct Block {
    lse: f64,
    mean: Vec<f64>,
    second: [[f64; 2]; 2],
}

impl<'a> Entropic<'a> {
    fn new(inst: &'a Instance) -> Self {
        let (nu, g) = (&inst.nu, &inst.gamma);
        let mut yz = Vec::with_capacity(nu.len() * g.len());
        for y in nu.points() {
            for z in g.points() {
                yz.push(y.dot(z));
            }
        }
        let mut log_mass = Vec::with_capacity(inst.mu.len() * g.len());
        for &a in inst.mu.weights() {
            for &b in g.weights() {
                log_mass.push((a * b).ln());
            }
        }
        Self {
            inst,
            yz,
            psi: vec![0.0; nu.len()],
            h: vec![Point::zeros(inst.dim()); inst.mu.len()],
            log_mass,
        }
    }

    /// Log-sum-exp over `y` of `(<y, z_k> - psi(y) - <h, y - x>) / eps`
    /// together with the first two moments of `y - x` under the softmax.
    fn block(&self, x: &Point, h: &Point, k: usize, eps: f64, logits: &mut [f64]) -> Block {
        let (nu, ng, d) = (&self.inst.nu, self.inst.gamma.len(), x.dim());
        let mut top = f64::NEG_INFINITY;
        for (j, y) in nu.points().iter().enumerate() {
            let v = (self.yz[j * ng + k] - self.psi[j] - h.dot(&y.sub(x))) / eps;
            logits[j] = v;
            top = top.max(v);
        }
        let mut total = 0.0;
        let mut mean = vec![0.0; d];
        let mut second = [[0.0; 2]; 2];
        for (j, y) in nu.points().iter().enumerate() {
            let w = (logits[j] - top).exp();
            total += w;
            for a in 0..d {
                let da = y[a] - x[a];
                mean[a] += w * da;
                for b in 0..d {
                    second[a][b] += w * da * (y[b] - x[b]);
                }
            }
        }
        for a in 0..d {
            mean[a] /= total;
            for b in 0..d {
                second[a][b] /= total;
            }
        }
        Block {
            lse: top + total.ln(),
            mean,
            second,
        }
    }

    /// `G(h) = eps sum_z gamma(z) LSE(...)`, its gradient and Hessian in `h`.
    fn objective(&self, i: usize, h: &Point, eps: f64, logits: &mut [f64]) -> (f64, Vec<f64>, [[f64; 2]; 2]) {
        let x = self.inst.mu.point(i);
        let d = x.dim();
        let mut g = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = [[0.0; 2]; 2];
        for (k, &w) in self.inst.gamma.weights().iter().enumerate() {
            let b = self.block(x, h, k, eps, logits);
            g += w * eps * b.lse;
            for a in 0..d {
                grad[a] -= w * b.mean[a];
                for c in 0..d {
                    hess[a][c] += w * (b.second[a][c] - b.mean[a] * b.mean[c]) / eps;
                }
            }
        }
        (g, grad, hess)
    }

    /// Projects onto the mixture and martingale rows of atom `i`: chooses
    /// `h(x)` so the tilted kernels have barycenter `x`.
    fn update_h(&mut self, i: usize, eps: f64, target: f64, logits: &mut [f64]) {
        let d = self.inst.dim();
        let weight = self.inst.mu.weight(i);
        let mut h = self.h[i].clone();
        for _ in 0..60 {
            let (g0, grad, hess) = self.objective(i, &h, eps, logits);
            let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if weight * gnorm <= target {
                break;
            }
            let step = newton_direction(d, &grad, &hess);
            let slope: f64 = grad.iter().zip(step.coords()).map(|(a, b)| a * b).sum();
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let trial = h.add(&step.scale(t));
                let (g1, grad1, _) = self.objective(i, &trial, eps, logits);
                let g1norm = grad1.iter().map(|v| v * v).sum::<f64>().sqrt();
                // Accept on sufficient decrease, or on a smaller gradient when
                // the objective change drowns in round-off.
                if g1 <= g0 + 1e-4 * t * slope || (g1 - g0).abs() <= 1e-14 * (1.0 + g0.abs()) && g1norm < gnorm {
                    h = trial;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        self.h[i] = h;
    }

    /// Closed-form projection onto the `nu` rows; returns the largest
    /// violation of those rows before the update.
    fn update_psi(&mut self, eps: f64) -> f64 {
        let (mu, nu, g) = (&self.inst.mu, &self.inst.nu, &self.inst.gamma);
        let (nn, ng) = (nu.len(), g.len());
        // Log of column mass: log sum_{x,z} exp((<y,z> - m - psi - <h, y-x>)/eps)
        // where m is set by the mixture rows.
        let mut logits = vec![0.0; nn];
        let mut cols = vec![f64::NEG_INFINITY; nn];
        for (i, x) in mu.points().iter().enumerate() {
            for k in 0..ng {
                let b = self.block(x, &self.h[i], k, eps, &mut logits);
                // log q(x, y, z) = log(mu gamma) + logits_y - lse
                for j in 0..nn {
                    cols[j] = log_add(cols[j], self.log_mass[i * ng + k] + logits[j] - b.lse);
                }
            }
        }
        let mut worst = 0.0f64;
        for j in 0..nn {
            worst = worst.max((cols[j].exp() - nu.weight(j)).abs());
            self.psi[j] += eps * (cols[j] - nu.weight(j).ln());
        }
        worst
    }

    fn transport_value(&self, eps: f64) -> f64 {
        let (mu, nu, g) = (&self.inst.mu, &self.inst.nu, &self.inst.gamma);
        let (nn, ng) = (nu.len(), g.len());
        let mut logits = vec![0.0; nn];
        let mut total = 0.0;
        for (i, x) in mu.points().iter().enumerate() {
            for k in 0..ng {
                let b = self.block(x, &self.h[i], k, eps, &mut logits);
                let mass = self.log_mass[i * ng + k].exp();
                for j in 0..nn {
                    total += mass * (logits[j] - b.lse).exp() * self.yz[j * ng + k];
                }
            }
        }
        total
    }

    fn run(&mut self, eps: f64) -> Result<EntropicStep> {
        let target = eps / 100.0;
        let nn = self.inst.nu.len();
        let mut logits = vec![0.0; nn];
        let mut sweeps = 0;
        let mut checkpoint = f64::INFINITY;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            for i in 0..self.inst.mu.len() {
                self.update_h(i, eps, target / 10.0, &mut logits);
            }
            let residual = self.update_psi(eps);
            // Projections contract slowly once eps is small next to the cost
            // gaps; the Newton polish below finishes faster from here.
            if sweeps % STALL_WINDOW == 0 {
                if residual > 0.5 * checkpoint {
                    break;
                }
                checkpoint = residual;
            }
            if residual <= target {
                // The psi update disturbed the martingale rows; restore them
                // so the reported state satisfies every family.
                for i in 0..self.inst.mu.len() {
                    self.update_h(i, eps, target / 10.0, &mut logits);
                }
                break;
            }
        }
        let (newton_steps, residual) = self.polish(eps);
        if self.psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("entropic potentials diverged at eps = {eps}")));
        }
        Ok(EntropicStep {
            eps,
            transport_value: self.transport_value(eps),
            sweeps,
            newton_steps,
            residual,
            converged: residual <= target,
        })
    }
}

impl Entropic<'_> {
    /// Dual objective `F(psi, h) = eps sum mu gamma LSE + sum nu psi` with
    /// gradient and Hessian in `(psi, h_1, ..., h_m)`. The gradient entries
    /// are the constraint residuals of the regularized primal.
    fn dual(&self, psi: &[f64], h: &[Point], eps: f64, want_hessian: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (mu, nu, g) = (&self.inst.mu, &self.inst.nu, &self.inst.gamma);
        let (nn, ng, d) = (nu.len(), g.len(), self.inst.dim());
        let n = nn + mu.len() * d;
        let mut value: f64 = nu.weights().iter().zip(psi).map(|(w, p)| w * p).sum();
        let mut grad = DVector::zeros(n);
        grad.rows_mut(0, nn).copy_from_slice(nu.weights());
        let mut hess = DMatrix::zeros(if want_hessian { n } else { 0 }, if want_hessian { n } else { 0 });
        let mut prob = vec![0.0; nn];
        let mut dy = vec![0.0; nn * d];
        for (i, x) in mu.points().iter().enumerate() {
            let off = nn + i * d;
            for (j, y) in nu.points().iter().enumerate() {
                for a in 0..d {
                    dy[j * d + a] = y[a] - x[a];
                }
            }
            for k in 0..ng {
                let mut top = f64::NEG_INFINITY;
                for j in 0..nn {
                    let tilt: f64 = (0..d).map(|a| h[i][a] * dy[j * d + a]).sum();
                    prob[j] = (self.yz[j * ng + k] - psi[j] - tilt) / eps;
                    top = top.max(prob[j]);
                }
                let mut total = 0.0;
                for p in prob.iter_mut() {
                    *p = (*p - top).exp();
                    total += *p;
                }
                let w = mu.weight(i) * g.weight(k);
                value += w * eps * (top + total.ln());
                let mut mean = [0.0; 2];
                for j in 0..nn {
                    prob[j] /= total;
                    grad[j] -= w * prob[j];
                    for a in 0..d {
                        mean[a] += prob[j] * dy[j * d + a];
                    }
                }
                for a in 0..d {
                    grad[off + a] -= w * mean[a];
                }
                if !want_hessian {
                    continue;
                }
                // Covariance of the row vectors (e_j, y_j - x) under prob.
                let c = w / eps;
                for j in 0..nn {
                    let pj = prob[j];
                    hess[(j, j)] += c * pj;
                    for a in 0..d {
                        let v = c * pj * (dy[j * d + a] - mean[a]);
                        hess[(j, off + a)] += v;
                        hess[(off + a, j)] += v;
                        for b in 0..d {
                            hess[(off + a, off + b)] += c * pj * dy[j * d + a] * dy[j * d + b];
                        }
                    }
                    for l in 0..nn {
                        hess[(j, l)] -= c * pj * prob[l];
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        hess[(off + a, off + b)] -= c * mean[a] * mean[b];
                    }
                }
            }
        }
        (value, grad, hess)
    }

    /// Damped Newton on the joint dual, run after the projection sweeps.
    /// The sweeps contract slowly once `eps` is small next to the gaps
    /// between transport costs; Newton converges from their warm start.
    /// Returns the step count and the final constraint residual.
    fn polish(&mut self, eps: f64) -> (usize, f64) {
        let (nn, d) = (self.inst.nu.len(), self.inst.dim());
        let split = |v: &DVector<f64>| -> (Vec<f64>, Vec<Point>) {
            let psi = v.rows(0, nn).iter().copied().collect();
            let h = (0..self.inst.mu.len())
                .map(|i| Point::new(v.rows(nn + i * d, d).iter().copied().collect()))
                .collect();
            (psi, h)
        };
        let mut v = DVector::from_iterator(
            nn + self.h.len() * d,
            self.psi.iter().copied().chain(self.h.iter().flat_map(|p| p.coords().to_vec())),
        );
        let (mut f, mut grad, mut hess) = self.dual(&self.psi, &self.h, eps, true);
        let mut steps = 0;
        // Steps whose objective change is lost in round-off; at tiny eps the
        // residual floor is set by the logits, and such steps only churn.
        let mut flat = 0;
        while steps < NEWTON_STEPS && flat < 5 {
            let gnorm = grad.amax();
            if gnorm <= 1e-14 {
                break;
            }
            // The dual is invariant under adding an affine function to psi,
            // so the Hessian has a (d+1)-dimensional kernel; a small ridge
            // makes the system definite without moving along it.
            let scale = hess.diagonal().amax().max(1e-300);
            let mut ridge = 1e-12 * scale;
            let dir = loop {
                let mut m = hess.clone();
                for r in 0..m.nrows() {
                    m[(r, r)] += ridge;
                }
                if let Some(ch) = m.cholesky() {
                    break Some(-ch.solve(&grad));
                }
                ridge *= 100.0;
                if ridge > scale {
                    break None;
                }
            };
            let Some(dir) = dir else { break };
            let slope = grad.dot(&dir);
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial = &v + &dir * t;
                let (psi, h) = split(&trial);
                let (f1, g1, _) = self.dual(&psi, &h, eps, false);
                let lost = (f1 - f).abs() <= 1e-14 * (1.0 + f.abs());
                if f1 <= f + 1e-4 * t * slope && !lost {
                    flat = 0;
                    accepted = Some(trial);
                    break;
                }
                if lost && g1.amax() < gnorm {
                    flat += 1;
                    accepted = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            let Some(next) = accepted else { break };
            steps += 1;
            v = next;
            let (psi, h) = split(&v);
            (f, grad, hess) = self.dual(&psi, &h, eps, true);
            self.psi = psi;
            self.h = h;
        }
        (steps, grad.amax())
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Solves `hess * step = -grad` in dimension 1 or 2, falling back to the
/// scaled gradient when the Hessian is numerically singular.
fn newton_direction(d: usize, grad: &[f64], hess: &[[f64; 2]; 2]) -> Point {
    let scale = hess[0][0].abs() + if d == 2 { hess[1][1].abs() } else { 0.0 };
    let floor = 1e-14 * scale + 1e-300;
    if d == 1 {
        let hh = hess[0][0].max(floor);
        return Point::scalar(-grad[0] / hh);
    }
    let (a, b, c) = (hess[0][0] + floor, hess[0][1], hess[1][1] + floor);
    let det = a * c - b * b;
    if det > 1e-14 * scale * scale && det.is_finite() {
        Point::xy(-(c * grad[0] - b * grad[1]) / det, -(a * grad[1] - b * grad[0]) / det)
    } else {
        let s = 1.0 / scale.max(1e-300);
        Point::xy(-grad[0] * s, -grad[1] * s)
    }
}
