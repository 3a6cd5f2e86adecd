//! End-to-end checks of dual convergence: metrics in measure and in `L1`,
//! the liminf inequality, localization to windows, and instance generation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;

use crate::convex::ConvexPL;
use crate::dual::{check_optimizing_with, evaluation_grid, l1_metric, measure_metric};
use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::mbb::{extract_dual, irreducibility, solve_primal, DualCertificate, Instance, PrimalSolution};
use crate::measure::{DiscreteMeasure, Point};
use crate::sequence::{gen_sequence, SequenceOutcome, SequenceSpec, SpikeInfo, Strategy};
use crate::tolerance::{Tolerances, TAU_LP};
use crate::transport::MartingaleTransport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Pass,
    Fail,
    NotEvaluated,
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotEvaluated => "NOT-EVALUATED",
            Verdict::NotApplicable => "NOT-APPLICABLE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PASS" => Ok(Verdict::Pass),
            "FAIL" => Ok(Verdict::Fail),
            "NOT-EVALUATED" => Ok(Verdict::NotEvaluated),
            "NOT-APPLICABLE" => Ok(Verdict::NotApplicable),
            other => Err(Error::InvalidArgument(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// Atom of `nu` in the relative interior of `C`.
    InteriorAtom,
    /// Atom of `nu` on the relative boundary of `C`.
    BoundaryAtom,
    /// Lattice point of `C` that is not an atom.
    Lattice,
    /// Point outside `C`.
    Outside,
}

#[derive(Debug, Clone)]
pub struct Probe {
    pub point: Point,
    pub kind: ProbeKind,
}

/// Test points for the liminf inequality: every atom of `nu` (boundary atoms
/// flagged), the evaluation lattice over `C`, and points pushed out of `C`
/// from its vertices.
pub fn liminf_probes(inst: &Instance) -> Vec<Probe> {
    let geo = &inst.geometry;
    let mut out: Vec<Probe> = inst
        .nu
        .points()
        .iter()
        .map(|p| Probe {
            point: p.clone(),
            kind: if geo.classify(p) == Location::Boundary {
                ProbeKind::BoundaryAtom
            } else {
                ProbeKind::InteriorAtom
            },
        })
        .collect();
    for p in evaluation_grid(inst) {
        if inst.nu.find(&p).is_none() {
            out.push(Probe { point: p, kind: ProbeKind::Lattice });
        }
    }
    let centre = inst.nu.barycenter();
    let reach = geo.diameter().max(1.0);
    for v in geo.hull_vertices() {
        let dir = v.sub(&centre);
        let len = dir.norm();
        if len > 0.0 {
            for t in [0.1, 0.5] {
                out.push(Probe {
                    point: v.add(&dir.scale(t * reach / len)),
                    kind: ProbeKind::Outside,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LiminfReport {
    pub points: Vec<Point>,
    /// `min over the last half of (psi_n - psi_hat)(y)` per point.
    pub margins: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl LiminfReport {
    pub fn worst(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Finite-n surrogate of `liminf psi_n(y) >= psi_hat(y)`: the minimum of
/// `psi_n(y) - psi_hat(y)` over the last half of the sequence must be at
/// least `-tol` at every point.
pub fn liminf_check(seq: &[ConvexPL], psi_hat: &ConvexPL, points: &[Point], tol: f64) -> LiminfReport {
    let tail = &seq[seq.len() / 2..];
    let margins: Vec<f64> = points
        .iter()
        .map(|y| {
            let base = psi_hat.eval(y);
            tail.iter().map(|psi| psi.eval(y) - base).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let pass = margins.iter().all(|&m| m >= -tol);
    LiminfReport {
        points: points.to_vec(),
        margins,
        tol,
        pass,
    }
}

/// Per-index quantities of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceRecord {
    pub n: usize,
    /// Optimality gap `e_n`.
    pub gap: f64,
    /// `sum nu min(1, |psi_n - psi_hat|)`.
    pub rho: f64,
    /// `sum nu |psi_n - psi_hat|`.
    pub ell: f64,
}

/// Evidence that pointwise convergence fails near a `nu`-null boundary
/// point while convergence in measure holds.
#[derive(Debug, Clone)]
pub struct Sharpness {
    pub spike: SpikeInfo,
    /// `psi_n - psi_hat` at the witness `b + r_n u`.
    pub deviations: Vec<f64>,
    /// `nu` mass within distance `r_1` of the boundary point.
    pub region_mass: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct SequenceReport {
    pub strategy: Strategy,
    pub not_applicable: Option<String>,
    pub records: Vec<SequenceRecord>,
    pub liminf: Option<LiminfReport>,
    pub optimizing: Verdict,
    pub l0: Verdict,
    pub l1: Verdict,
    pub liminf_verdict: Verdict,
    pub sharpness: Option<Sharpness>,
}

impl SequenceReport {
    fn not_applicable(strategy: Strategy, why: String) -> Self {
        Self {
            strategy,
            not_applicable: Some(why),
            records: Vec::new(),
            liminf: None,
            optimizing: Verdict::NotApplicable,
            l0: Verdict::NotApplicable,
            l1: Verdict::NotApplicable,
            liminf_verdict: Verdict::NotApplicable,
            sharpness: None,
        }
    }

    pub fn final_record(&self) -> Option<&SequenceRecord> {
        self.records.last()
    }

    /// True when no verdict is a failure.
    pub fn passed(&self) -> bool {
        let mut all = vec![self.optimizing, self.l0, self.l1, self.liminf_verdict];
        if let Some(s) = &self.sharpness {
            all.push(s.verdict);
        }
        !all.contains(&Verdict::Fail)
    }
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub tol: Tolerances,
    /// Reject instances that are not irreducible. Turning this off is only
    /// meant for exercising the hypothesis gates.
    pub require_irreducible: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            require_irreducible: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub primal: PrimalSolution,
    pub dual: DualCertificate,
    pub irreducibility_margin: f64,
    /// All atoms of `mu` in the relative interior of `C`.
    pub compactly_contained: bool,
    pub sequences: Vec<SequenceReport>,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.sequences.iter().all(SequenceReport::passed)
    }
}

/// Whether `spt mu` is a compact subset of the relative interior of `C`.
pub fn compactly_contained(inst: &Instance) -> bool {
    inst.mu
        .points()
        .iter()
        .all(|x| inst.geometry.classify(x) == Location::Interior)
}

pub fn theorem1_harness(inst: &Instance, specs: &[SequenceSpec]) -> Result<Theorem1Report> {
    theorem1_harness_with(inst, specs, &HarnessOptions::default())
}

/// Solves the instance, extracts `psi_hat`, then generates and scores each
/// requested sequence.
pub fn theorem1_harness_with(inst: &Instance, specs: &[SequenceSpec], opts: &HarnessOptions) -> Result<Theorem1Report> {
    let irr = irreducibility(inst)?;
    if opts.require_irreducible && irr.margin <= opts.tol.irr {
        return Err(Error::Precondition(format!(
            "instance is not irreducible (margin {:.3e})",
            irr.margin
        )));
    }
    let primal = solve_primal(inst)?;
    let dual = extract_dual(inst, &primal)?;
    let contained = compactly_contained(inst);
    let grid = evaluation_grid(inst);
    let probes: Vec<Point> = liminf_probes(inst).into_iter().map(|p| p.point).collect();
    let sequences = specs
        .iter()
        .map(|spec| score_sequence(inst, &primal, &dual, spec, contained, &grid, &probes, &opts.tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(Theorem1Report {
        primal,
        dual,
        irreducibility_margin: irr.margin,
        compactly_contained: contained,
        sequences,
    })
}

#[allow(clippy::too_many_arguments)]
fn score_sequence(
    inst: &Instance,
    primal: &PrimalSolution,
    dual: &DualCertificate,
    spec: &SequenceSpec,
    contained: bool,
    grid: &[Point],
    probes: &[Point],
    tol: &Tolerances,
) -> Result<SequenceReport> {
    let seq = match gen_sequence(spec, inst, &dual.psi)? {
        SequenceOutcome::Generated(s) => s,
        SequenceOutcome::NotApplicable(why) => return Ok(SequenceReport::not_applicable(spec.strategy, why)),
    };
    let opt = check_optimizing_with(&seq.psis, inst, primal, grid, tol.opt)?;
    let records: Vec<SequenceRecord> = seq
        .psis
        .iter()
        .zip(&opt.gaps)
        .enumerate()
        .map(|(n, (psi, &gap))| SequenceRecord {
            n: n + 1,
            gap,
            rho: measure_metric(psi, &dual.psi, &inst.nu),
            ell: l1_metric(psi, &dual.psi, &inst.nu),
        })
        .collect();
    let rhos: Vec<f64> = records.iter().map(|r| r.rho).collect();
    let last = records.last().expect("nonempty sequence");
    let l0 = Verdict::from_bool(last.rho <= tol.l0 && tail_nonincreasing(&rhos));
    let l1 = if contained {
        Verdict::from_bool(last.ell <= tol.l1)
    } else {
        Verdict::NotEvaluated
    };
    let liminf = liminf_check(&seq.psis, &dual.psi, probes, tol.liminf);
    let sharpness = seq.spike.as_ref().map(|spike| {
        let deviations: Vec<f64> = seq
            .psis
            .iter()
            .zip(&spike.witnesses)
            .map(|(psi, w)| psi.eval(w) - dual.psi.eval(w))
            .collect();
        let r1 = spike.radii[0];
        let region_mass = inst
            .nu
            .atoms()
            .filter(|(p, _)| p.dist(&spike.gap.point) <= r1)
            .map(|(_, w)| w)
            .sum::<f64>();
        let ok = region_mass == 0.0 && deviations.iter().all(|&d| d >= 1.0) && last.rho <= tol.l0;
        Sharpness {
            spike: spike.clone(),
            deviations,
            region_mass,
            verdict: Verdict::from_bool(ok),
        }
    });
    Ok(SequenceReport {
        strategy: spec.strategy,
        not_applicable: None,
        records,
        optimizing: Verdict::from_bool(opt.optimizing),
        l0,
        l1,
        liminf_verdict: Verdict::from_bool(liminf.pass),
        liminf: Some(liminf),
        sharpness,
    })
}

/// Over the final third each value is at most 1.1 times its predecessor,
/// up to `TAU_LP` of absolute noise.
pub fn tail_nonincreasing(values: &[f64]) -> bool {
    let start = values.len() - values.len().div_ceil(3);
    values[start..].windows(2).all(|w| w[1] <= 1.1 * w[0] + TAU_LP)
}

/// A set of atoms of `mu`, typically `K^j intersected with spt mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuWindow {
    pub j: usize,
    pub atoms: Vec<usize>,
}

/// `K^j intersected with spt mu` for `j = 1..=max_j`, dropping empty ones.
pub fn kj_windows(inst: &Instance, max_j: usize) -> Vec<MuWindow> {
    (1..=max_j)
        .map(|j| MuWindow {
            j,
            atoms: (0..inst.mu.len())
                .filter(|&i| inst.geometry.in_kj(inst.mu.point(i), j))
                .collect(),
        })
        .filter(|w| !w.atoms.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct WindowMetrics {
    pub j: usize,
    pub mass: f64,
    /// `nu_j = int mu_j(dx) pi_x`.
    pub nu_j: DiscreteMeasure,
    pub rho: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Lemma4Report {
    pub rho_nu: Vec<f64>,
    pub converged_nu: bool,
    pub windows: Vec<WindowMetrics>,
    pub converged_all_windows: bool,
    /// Both verdicts coincide.
    pub equivalent: bool,
    /// Largest violation of `rho_nu <= sum_j mu(W_j) rho_j` and of
    /// `mu(W_j) rho_j <= rho_nu` over all indices.
    pub decomposition_violation: f64,
    pub tol: f64,
}

/// Compares convergence in measure under `nu` with convergence under each
/// `nu_j` built from the windows.
pub fn lemma4_harness(
    kernel: &MartingaleTransport,
    seq: &[ConvexPL],
    psi_hat: &ConvexPL,
    windows: &[MuWindow],
    tol: f64,
) -> Result<Lemma4Report> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let mu = kernel.mu();
    let mut covered = vec![false; mu.len()];
    for w in windows {
        for &i in &w.atoms {
            if i >= mu.len() {
                return Err(Error::InvalidArgument(format!("window {} names atom {i} out of range", w.j)));
            }
            covered[i] = true;
        }
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::Precondition(format!(
            "windows do not exhaust spt mu: atom {} is missing",
            mu.point(i)
        )));
    }
    let metric = |m: &DiscreteMeasure| -> Vec<f64> { seq.iter().map(|psi| measure_metric(psi, psi_hat, m)).collect() };
    let rho_nu = metric(kernel.nu());
    let converged_nu = *rho_nu.last().unwrap() <= tol;
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let mut atoms = w.atoms.clone();
        atoms.sort_unstable();
        atoms.dedup();
        let mass = mu.mass_of(&atoms);
        let mu_j = mu.restrict(&atoms)?;
        let kernels: Vec<DiscreteMeasure> = atoms.iter().map(|&i| kernel.kernel(i)).collect();
        let nu_j = MartingaleTransport::from_kernels(&mu_j, &kernels)?.nu().clone();
        let rho = metric(&nu_j);
        let converged = *rho.last().unwrap() <= tol;
        out.push(WindowMetrics {
            j: w.j,
            mass,
            nu_j,
            rho,
            converged,
        });
    }
    let mut violation: f64 = 0.0;
    for (n, &r) in rho_nu.iter().enumerate() {
        let bound: f64 = out.iter().map(|w| w.mass * w.rho[n]).sum();
        violation = violation.max(r - bound);
        for w in &out {
            violation = violation.max(w.mass * w.rho[n] - r);
        }
    }
    let converged_all_windows = out.iter().all(|w| w.converged);
    Ok(Lemma4Report {
        rho_nu,
        converged_nu,
        equivalent: converged_nu == converged_all_windows,
        windows: out,
        converged_all_windows,
        decomposition_violation: violation.max(0.0),
        tol,
    })
}

/// Parameters of [`gen_instance`] beyond the sizes and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenOptions {
    pub gauss_points: usize,
    /// Atoms of `nu` are drawn uniformly from `[-half_width, half_width]^d`.
    pub half_width: f64,
    pub max_draws: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            gauss_points: 64,
            half_width: 1.0,
            max_draws: 50,
        }
    }
}

pub fn gen_instance(d: usize, n_mu: usize, n_nu: usize, seed: u64) -> Result<Instance> {
    gen_instance_with(d, n_mu, n_nu, seed, &GenOptions::default())
}

/// Random irreducible instance: `nu` with Dirichlet weights on uniform
/// atoms, `mu` the conditional-mean coarsening of `nu` over a random
/// partition into `n_mu` groups. Redraws until irreducible.
pub fn gen_instance_with(d: usize, n_mu: usize, n_nu: usize, seed: u64, opts: &GenOptions) -> Result<Instance> {
    if d == 0 || d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if n_mu == 0 || n_mu > n_nu {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n_mu <= n_nu, got n_mu = {n_mu}, n_nu = {n_nu}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.max_draws {
        let inst = draw(d, n_mu, n_nu, &mut rng, opts)?;
        if irreducibility(&inst)?.irreducible {
            return Ok(inst);
        }
    }
    Err(Error::GenerationExhausted {
        attempts: opts.max_draws,
    })
}

fn draw(d: usize, n_mu: usize, n_nu: usize, rng: &mut ChaCha8Rng, opts: &GenOptions) -> Result<Instance> {
    let a = opts.half_width;
    let points: Vec<Point> = (0..n_nu)
        .map(|_| Point::new((0..d).map(|_| rng.gen_range(-a..=a)).collect()))
        .collect();
    let weights: Vec<f64> = if n_nu == 1 {
        vec![1.0]
    } else {
        Dirichlet::new_with_size(1.0, n_nu)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng)
    };
    // Random partition into n_mu nonempty groups.
    let mut order: Vec<usize> = (0..n_nu).collect();
    order.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n_nu).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(n_mu - 1).collect();
    cuts.sort_unstable();
    cuts.push(n_nu);
    let mut start = 0;
    let mut mu_atoms = Vec::with_capacity(n_mu);
    for end in cuts {
        let group = &order[start..end];
        let mass: f64 = group.iter().map(|&j| weights[j]).sum();
        let mut bary = Point::zeros(d);
        for &j in group {
            bary = bary.add(&points[j].scale(weights[j] / mass));
        }
        mu_atoms.push((bary, mass));
        start = end;
    }
    let nu = DiscreteMeasure::from_unnormalized(d, points.into_iter().zip(weights).collect())?;
    let mu = DiscreteMeasure::from_unnormalized(d, mu_atoms)?;
    Instance::with_gauss_points(mu, nu, opts.gauss_points)
}

/// Runs [`theorem1_harness_with`] on many instances in parallel, keeping
/// the input order.
pub fn theorem1_batch(
    instances: &[Instance],
    specs: &[SequenceSpec],
    opts: &HarnessOptions,
) -> Vec<Result<Theorem1Report>> {
    instances
        .par_iter()
        .map(|inst| theorem1_harness_with(inst, specs, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::Schedule;

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, atoms.iter().map(|&(x, w)| (Point::scalar(x), w)).collect()).unwrap()
    }

    fn standard() -> Instance {
        Instance::with_gauss_points(line(&[(0.0, 1.0)]), line(&[(-1.0, 0.5), (1.0, 0.5)]), 64).unwrap()
    }

    fn all_specs(len: usize) -> Vec<SequenceSpec> {
        [Strategy::Perturb, Strategy::Entropic, Strategy::Adversarial]
            .into_iter()
            .map(|s| SequenceSpec::new(s, len, 1))
            .collect()
    }

    #[test]
    fn liminf_of_constant_sequence_is_zero() {
        let psi = ConvexPL::affine(Point::scalar(0.5), 0.1);
        let pts = vec![Point::scalar(-1.0), Point::scalar(3.0)];
        let r = liminf_check(&vec![psi.clone(); 6], &psi, &pts, 1e-6);
        assert!(r.pass);
        assert!(r.margins.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn standard_instance_passes() {
        let r = theorem1_harness(&standard(), &all_specs(24)).unwrap();
        assert!(r.compactly_contained);
        let [p, e, a] = &r.sequences[..] else { panic!() };
        for s in [p, e] {
            assert_eq!(s.l0, Verdict::Pass);
            assert_eq!(s.l1, Verdict::Pass);
            assert_eq!(s.liminf_verdict, Verdict::Pass);
            assert_eq!(s.optimizing, Verdict::Pass);
        }
        assert!(a.not_applicable.is_some());
        assert!(r.passed());
    }

    #[test]
    fn harmonic_perturbation_on_the_standard_instance_is_optimizing() {
        let spec = SequenceSpec::new(Strategy::Perturb, 24, 5).with_schedule(Schedule::Harmonic { first: 1.0 });
        let r = theorem1_harness(&standard(), &[spec]).unwrap();
        assert_eq!(r.sequences[0].optimizing, Verdict::Pass);
    }

    #[test]
    fn triangle_adversarial_exhibits_sharpness() {
        let nu = DiscreteMeasure::uniform(
            2,
            vec![
                Point::xy(0.0, 0.0),
                Point::xy(1.0, 0.0),
                Point::xy(0.0, 1.0),
                Point::xy(1.0 / 3.0, 1.0 / 3.0),
            ],
        )
        .unwrap();
        let inst = Instance::with_gauss_points(DiscreteMeasure::dirac(nu.barycenter()), nu, 16).unwrap();
        let specs = vec![SequenceSpec::new(Strategy::Adversarial, 12, 0)];
        let r = theorem1_harness(&inst, &specs).unwrap();
        let s = &r.sequences[0];
        let sharp = s.sharpness.as_ref().unwrap();
        assert_eq!(sharp.verdict, Verdict::Pass, "{sharp:?}");
        assert_eq!(s.l0, Verdict::Pass);
        assert_eq!(s.liminf_verdict, Verdict::Pass, "{:?}", s.liminf);
    }

    #[test]
    fn l1_branch_is_gated_on_containment() {
        // mu charges the boundary atom 1: reducible, so the gate must be off.
        let mu = line(&[(0.0, 0.5), (1.0, 0.5)]);
        let nu = line(&[(-1.0, 0.25), (1.0, 0.75)]);
        let inst = Instance::with_gauss_points(mu, nu, 16).unwrap();
        assert!(theorem1_harness(&inst, &all_specs(8)).is_err());
        let opts = HarnessOptions {
            require_irreducible: false,
            ..HarnessOptions::default()
        };
        let r = theorem1_harness_with(&inst, &[SequenceSpec::new(Strategy::Perturb, 16, 0)], &opts).unwrap();
        assert!(!r.compactly_contained);
        assert_eq!(r.sequences[0].l1, Verdict::NotEvaluated);
        assert_ne!(r.sequences[0].l0, Verdict::NotEvaluated);
    }

    #[test]
    fn generated_instances_are_deterministic_and_in_order() {
        let a = gen_instance(1, 2, 5, 7).unwrap();
        let b = gen_instance(1, 2, 5, 7).unwrap();
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.nu, b.nu);
        assert!(crate::transport::check_convex_order(&a.mu, &a.nu).unwrap().holds);
        let c = gen_instance(2, 1, 5, 3).unwrap();
        assert_eq!(c.mu.len(), 1);
        assert!(c.mu.point(0).dist(&c.nu.barycenter()) < 1e-12);
        assert!(matches!(gen_instance(1, 3, 2, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn window_equivalence_with_controls() {
        let mu = line(&[(-0.25, 0.5), (0.25, 0.5)]);
        let nu = line(&[(-1.0, 0.3), (0.0, 0.4), (1.0, 0.3)]);
        let inst = Instance::with_gauss_points(mu, nu, 16).unwrap();
        let ps = solve_primal(&inst).unwrap();
        let dual = extract_dual(&inst, &ps).unwrap();
        let left = MuWindow { j: 1, atoms: vec![0] };
        let right = MuWindow { j: 2, atoms: vec![1] };
        let windows = vec![left.clone(), right.clone()];
        let perturb = |h: f64| dual.psi.sum(&ConvexPL::affine(Point::scalar(0.0), h).max(&ConvexPL::constant(1, 0.0)));
        let good: Vec<ConvexPL> = (1..=12).map(|n| perturb(0.25f64.powi(n))).collect();
        let r = lemma4_harness(&ps.sbm, &good, &dual.psi, &windows, 1e-4).unwrap();
        assert!(r.converged_nu && r.converged_all_windows && r.equivalent);
        assert!(r.decomposition_violation < 1e-12);
        assert!(lemma4_harness(&ps.sbm, &good, &dual.psi, &[left], 1e-4).is_err());
        // Bump only where the right kernel lives.
        let kernel_right = ps.sbm.kernel(1);
        let far = kernel_right
            .points()
            .iter()
            .find(|p| ps.sbm.kernel(0).find(p).is_none());
        if let Some(y) = far {
            let bump = ConvexPL::affine(Point::scalar(if y[0] > 0.0 { 8.0 } else { -8.0 }), -8.0 * y[0].abs() + 4.0)
                .max(&ConvexPL::constant(1, 0.0));
            let bad: Vec<ConvexPL> = (1..=12).map(|_| dual.psi.sum(&bump)).collect();
            let r = lemma4_harness(&ps.sbm, &bad, &dual.psi, &windows, 1e-4).unwrap();
            assert!(r.windows[0].converged && !r.windows[1].converged);
            assert!(!r.converged_nu && r.equivalent);
        }
    }
}
