//! Report rows for each `verify` suite.

use anyhow::Result;
use mbb_core::bass::{lemma2_report, Lemma2Params};
use mbb_core::convex::ConvexPL;
use mbb_core::dual::{d_of, evaluation_grid};
use mbb_core::harness::{kj_windows, lemma4_harness, theorem1_harness_with, HarnessOptions, MuWindow, Verdict};
use mbb_core::io::ReportRow;
use mbb_core::mbb::{extract_dual, irreducibility, sample_mt, solve_primal, Instance};
use mbb_core::measure::Point;
use mbb_core::sequence::{gen_sequence, SequenceOutcome, SequenceSpec, Strategy};
use mbb_core::tolerance::{Tolerances, TAU_LP};
use mbb_core::transport::{mcov, mean_preserving_split, strassen_extend, verify_mcov_chain, w2sq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Suite;

/// Identity checks are exact up to round-off.
const IDENTITY_TOL: f64 = 1e-8;
const STRASSEN_TOL: f64 = 1e-12;
/// Largest `j` tried when looking for windows that exhaust `spt mu`.
const MAX_WINDOW: usize = 64;

pub struct Context<'a> {
    pub id: &'a str,
    pub strategies: &'a [Strategy],
    pub seq_len: usize,
    pub seed: u64,
    pub tol: Tolerances,
}

struct Rows<'a> {
    id: &'a str,
    out: Vec<ReportRow>,
}

impl Rows<'_> {
    fn push(&mut self, check: impl Into<String>, index: usize, value: f64, threshold: Option<f64>, verdict: Verdict) {
        self.out.push(ReportRow {
            instance_id: self.id.to_string(),
            check_id: check.into(),
            index,
            value,
            threshold,
            verdict,
        });
    }

    /// `value <= threshold` decides the verdict.
    fn at_most(&mut self, check: impl Into<String>, index: usize, value: f64, threshold: f64) {
        self.push(check, index, value, Some(threshold), Verdict::from_bool(value <= threshold));
    }

    fn not_applicable(&mut self, check: impl Into<String>) {
        self.push(check, 0, f64::NAN, None, Verdict::NotApplicable);
    }
}

pub fn run(suite: Suite, inst: &Instance, ctx: &Context<'_>) -> Result<Vec<ReportRow>> {
    let mut rows = Rows { id: ctx.id, out: Vec::new() };
    match suite {
        Suite::Theorem1 => theorem1(inst, ctx, &mut rows)?,
        Suite::Lemma2 => lemma2(inst, &mut rows)?,
        Suite::Lemma3 => lemma3(inst, ctx, &mut rows)?,
        Suite::Lemma4 => lemma4(inst, ctx, &mut rows)?,
        Suite::Identities => identities(inst, ctx, &mut rows)?,
    }
    Ok(rows.out)
}

fn specs(ctx: &Context<'_>) -> Vec<SequenceSpec> {
    ctx.strategies
        .iter()
        .map(|&s| SequenceSpec::new(s, ctx.seq_len, ctx.seed))
        .collect()
}

fn theorem1(inst: &Instance, ctx: &Context<'_>, rows: &mut Rows<'_>) -> Result<()> {
    let irr = irreducibility(inst)?;
    if irr.margin <= ctx.tol.irr {
        rows.push("irreducible", 0, irr.margin, Some(ctx.tol.irr), Verdict::NotApplicable);
        return Ok(());
    }
    let opts = HarnessOptions {
        tol: ctx.tol,
        require_irreducible: true,
    };
    let rep = theorem1_harness_with(inst, &specs(ctx), &opts)?;
    let v = rep.primal.value;
    rows.at_most("duality_gap", 0, (v - rep.dual.value).abs(), ctx.tol.lp * (1.0 + v.abs()));
    for s in &rep.sequences {
        let name = s.strategy.name();
        let Some(last) = s.final_record() else {
            rows.not_applicable(name);
            continue;
        };
        let n = last.n;
        rows.push(format!("{name}.optimizing"), n, last.gap, Some(ctx.tol.opt), s.optimizing);
        rows.push(format!("{name}.l0"), n, last.rho, Some(ctx.tol.l0), s.l0);
        rows.push(format!("{name}.l1"), n, last.ell, Some(ctx.tol.l1), s.l1);
        let worst = s.liminf.as_ref().map_or(f64::NAN, |l| l.worst());
        rows.push(format!("{name}.liminf"), n, worst, Some(-ctx.tol.liminf), s.liminf_verdict);
        if let Some(sh) = &s.sharpness {
            let low = sh.deviations.iter().copied().fold(f64::INFINITY, f64::min);
            rows.push(format!("{name}.sharpness"), n, low, Some(1.0), sh.verdict);
        }
    }
    Ok(())
}

fn lemma2(inst: &Instance, rows: &mut Rows<'_>) -> Result<()> {
    if inst.dim() != 1 {
        rows.not_applicable("lemma2");
        return Ok(());
    }
    let ps = solve_primal(inst)?;
    let params = Lemma2Params::default();
    let rep = lemma2_report(inst, &ps, params)?;
    let order_tol = TAU_LP.max(params.chain_tol);
    for j in 1..=params.windows {
        let at_j = || rep.rows.iter().filter(move |r| r.j == j);
        let max = |f: &dyn Fn(&mbb_core::bass::Lemma2Row) -> f64| at_j().map(f).fold(0.0f64, f64::max);
        rows.at_most("lemma2.order", j, max(&|r| r.order_gap.max(r.order_gap_target)), order_tol);
        rows.at_most("lemma2.support", j, max(&|r| (r.overshoot - r.overshoot_slack).max(0.0)), 1e-12);
        rows.at_most("lemma2.barycenter", j, max(&|r| r.barycenter_error), 1e-10);
        if j > 1 {
            let drop = rep
                .rows
                .windows(2)
                .filter(|p| p[1].j == j && p[0].x.to_bits() == p[1].x.to_bits())
                .map(|p| p[0].mcov - p[1].mcov)
                .fold(0.0f64, f64::max);
            rows.at_most("lemma2.mcov_monotone", j, drop, params.chain_tol);
        }
    }
    let w2_last = rep
        .rows
        .iter()
        .filter(|r| r.j == params.windows)
        .map(|r| r.w2)
        .fold(0.0f64, f64::max);
    rows.at_most("lemma2.w2", params.windows, w2_last, params.w2_tol);
    rows.push(
        "lemma2.all",
        0,
        rep.failures.len() as f64,
        Some(0.0),
        Verdict::from_bool(rep.passed()),
    );
    Ok(())
}

fn lemma3(inst: &Instance, ctx: &Context<'_>, rows: &mut Rows<'_>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut triples = vec![(inst.mu.clone(), inst.nu.clone(), inst.gamma.clone())];
    for _ in 0..4 {
        let beta = mean_preserving_split(&inst.nu, 0.5, &mut rng);
        let zeta = mean_preserving_split(&inst.mu, 1.0, &mut rng);
        triples.push((inst.nu.clone(), beta, zeta));
    }
    for (k, (a, b, z)) in triples.iter().enumerate() {
        let chain = verify_mcov_chain(a, b, z)?;
        let low = chain.gaps().into_iter().fold(f64::INFINITY, f64::min);
        rows.push(
            "lemma3.mcov_chain",
            k,
            low,
            Some(-ctx.tol.lp),
            Verdict::from_bool(chain.holds(ctx.tol.lp)),
        );
    }
    let ps = solve_primal(inst)?;
    let (_, pi2) = mcov(ps.sbm.mu(), &inst.gamma)?;
    let triple = strassen_extend(&ps.sbm, &pi2)?;
    rows.at_most("lemma3.strassen", 0, triple.max_conditional_mean_deviation(), STRASSEN_TOL);
    Ok(())
}

/// The smallest `J` whose windows `K^1, ..., K^J` cover every atom of `mu`.
fn exhausting_windows(inst: &Instance) -> Option<Vec<MuWindow>> {
    (1..=MAX_WINDOW).find_map(|j| {
        let w = kj_windows(inst, j);
        let mut covered = vec![false; inst.mu.len()];
        for win in &w {
            for &i in &win.atoms {
                covered[i] = true;
            }
        }
        covered.iter().all(|&c| c).then_some(w)
    })
}

fn lemma4(inst: &Instance, ctx: &Context<'_>, rows: &mut Rows<'_>) -> Result<()> {
    let Some(windows) = exhausting_windows(inst) else {
        rows.not_applicable("lemma4");
        return Ok(());
    };
    let ps = solve_primal(inst)?;
    let cert = extract_dual(inst, &ps)?;
    for spec in specs(ctx) {
        let name = spec.strategy.name();
        let seq = match gen_sequence(&spec, inst, &cert.psi)? {
            SequenceOutcome::Generated(s) => s,
            SequenceOutcome::NotApplicable(_) => {
                rows.not_applicable(format!("lemma4.{name}"));
                continue;
            }
        };
        let rep = lemma4_harness(&ps.sbm, &seq.psis, &cert.psi, &windows, ctx.tol.l0)?;
        let n = seq.psis.len();
        rows.at_most(format!("lemma4.{name}.decomposition"), n, rep.decomposition_violation, 1e-12);
        let last = *rep.rho_nu.last().expect("nonempty sequence");
        rows.push(
            format!("lemma4.{name}.equivalence"),
            n,
            last,
            Some(ctx.tol.l0),
            Verdict::from_bool(rep.equivalent),
        );
        for w in &rep.windows {
            let rho = *w.rho.last().expect("nonempty sequence");
            rows.push(
                format!("lemma4.{name}.window"),
                w.j,
                rho,
                Some(ctx.tol.l0),
                Verdict::from_bool(w.converged == rep.converged_nu),
            );
        }
    }
    Ok(())
}

fn identities(inst: &Instance, ctx: &Context<'_>, rows: &mut Rows<'_>) -> Result<()> {
    let chain = verify_mcov_chain(&inst.mu, &inst.nu, &inst.gamma)?;
    let low = chain.gaps().into_iter().fold(f64::INFINITY, f64::min);
    rows.push(
        "identities.mcov_chain",
        0,
        low,
        Some(-ctx.tol.lp),
        Verdict::from_bool(chain.holds(ctx.tol.lp)),
    );
    for (k, (p, q)) in [(&inst.mu, &inst.nu), (&inst.nu, &inst.gamma)].into_iter().enumerate() {
        let sq = w2sq(p, q)?;
        rows.at_most("identities.w2", k, (sq.direct - sq.via_mcov).abs(), IDENTITY_TOL);
    }

    let ps = solve_primal(inst)?;
    let cert = extract_dual(inst, &ps)?;
    let grid = evaluation_grid(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let random = ConvexPL::random(inst.dim(), 4, 2.0, &mut rng);
    let transports = (0..3)
        .map(|k| sample_mt(inst, ctx.seed.wrapping_add(k)))
        .collect::<mbb_core::Result<Vec<_>>>()?;
    for (k, psi) in [&cert.psi, &random].into_iter().enumerate() {
        let values = transports
            .iter()
            .map(|pi| d_of(psi, pi, &inst.gamma, &grid))
            .collect::<mbb_core::Result<Vec<f64>>>()?;
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        rows.at_most("identities.pi_independence", k, hi - lo, IDENTITY_TOL);

        let slope = Point::new((0..inst.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let shifted = d_of(&psi.add_affine(&slope, rng.gen_range(-2.0..2.0)), &transports[0], &inst.gamma, &grid)?;
        rows.at_most("identities.affine", k, (shifted - values[0]).abs(), IDENTITY_TOL);
    }
    Ok(())
}
