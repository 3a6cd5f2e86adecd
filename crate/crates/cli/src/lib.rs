//! Command-line front end: `mbb solve`, `mbb verify` and `mbb gen`.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mbb_core::dual::evaluation_grid;
use mbb_core::error::Error;
use mbb_core::harness::{gen_instance_with, GenOptions, Verdict};
use mbb_core::io::{sort_rows, write_atomic, write_report, FileError, InstanceFile, ReportRow};
use mbb_core::mbb::{extract_dual, solve_primal, Instance};
use mbb_core::measure::Point;
use mbb_core::sequence::{gen_sequence, SequenceOutcome, SequenceSpec, Strategy};
use mbb_core::tolerance::Tolerances;
use rayon::prelude::*;

pub mod plot;
pub mod suites;

pub const EXIT_FAIL_ROWS: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_NOT_IN_ORDER: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_EXHAUSTED: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "mbb", version, about = "Martingale Benamou-Brenier laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance and write the primal value and dual potentials.
    Solve(SolveArgs),
    /// Run a verification suite and write a CSV report.
    Verify(VerifyArgs),
    /// Generate random irreducible instances.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance file (TOML).
    pub instance: PathBuf,
    #[arg(long, default_value = "mbb-out")]
    pub out: PathBuf,
    /// Write `plot.svg` with psi_hat and the last three sequence elements (1D only).
    #[arg(long)]
    pub emit_plot: bool,
    #[arg(long, value_enum, default_value = "perturb")]
    pub seq_strategy: StrategyArg,
    #[arg(long, default_value_t = 24)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian quantization size; overrides the file.
    #[arg(long)]
    pub gauss_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Theorem1,
    Lemma2,
    Lemma3,
    Lemma4,
    Identities,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Lemma2 => "lemma2",
            Suite::Lemma3 => "lemma3",
            Suite::Lemma4 => "lemma4",
            Suite::Identities => "identities",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Perturb,
    Entropic,
    Adversarial,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Perturb => Strategy::Perturb,
            StrategyArg::Entropic => Strategy::Entropic,
            StrategyArg::Adversarial => Strategy::Adversarial,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Instance file; omit when using `--gen`.
    #[arg(required_unless_present = "gen", conflicts_with = "gen")]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Generate instances instead of reading one: `DIM:N_MU:N_NU`.
    #[arg(long, value_name = "DIM:N_MU:N_NU")]
    pub gen: Option<String>,
    /// Number of generated instances, with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// First generator seed, also the seed of random sequence parts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub gauss_points: Option<usize>,
    /// Sequence strategies, comma separated; all three when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub seq_strategy: Vec<StrategyArg>,
    #[arg(long, default_value_t = 24)]
    pub seq_len: usize,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[arg(long, default_value = "mbb-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long)]
    pub n_mu: usize,
    #[arg(long)]
    pub n_nu: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub gauss_points: usize,
    #[arg(long, default_value = "mbb-out")]
    pub out: PathBuf,
}

/// A flag value clap accepted but the command cannot use.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Maps a failure to its exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<FileError>() {
            return match e {
                FileError::Syntax { .. } | FileError::Field { .. } => EXIT_PARSE,
                FileError::Instance(inner) => core_code(inner),
                FileError::Io(_) | FileError::Csv(_) => EXIT_FAIL_ROWS,
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_PARSE;
        }
    }
    EXIT_FAIL_ROWS
}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::NotInConvexOrder { .. } => EXIT_NOT_IN_ORDER,
        Error::GenerationExhausted { .. } => EXIT_EXHAUSTED,
        Error::InvalidMeasure(_) | Error::DimensionMismatch { .. } | Error::UnsupportedDimension(_) => EXIT_PARSE,
        _ => EXIT_NUMERIC,
    }
}

/// Caps the rayon pool at `MBB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MBB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("MBB_THREADS must be a positive integer, got {raw:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs a parsed command. `Ok` carries the exit code: 0, or 1 when a
/// report contains FAIL rows.
pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Verify(a) => verify(&a),
        Command::Gen(a) => gen(&a),
    }
}

fn load(path: &Path, gauss_points: Option<usize>) -> Result<(InstanceFile, Instance)> {
    let mut file = InstanceFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(n) = gauss_points {
        file.gaussian_points = n;
    }
    match file.instance() {
        Ok(inst) => Ok((file, inst)),
        Err(Error::NotInConvexOrder { certificate }) => {
            let summary = farkas_summary(&file, &certificate);
            Err(anyhow::Error::new(Error::NotInConvexOrder { certificate })
                .context(summary)
                .context(format!("{} is infeasible", path.display())))
        }
        Err(e) => Err(anyhow::Error::new(e).context(format!("{} is not a valid instance", path.display()))),
    }
}

/// The certificate `y` separates: its row and column blocks are the
/// multipliers of the `mu` and `nu` marginals, the rest those of the drift.
fn farkas_summary(file: &InstanceFile, y: &[f64]) -> String {
    let (n, m, d) = (file.mu.len(), file.nu.len(), file.dimension);
    let norm = |s: &[f64]| s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (rows, rest) = y.split_at(n.min(y.len()));
    let (cols, drift) = rest.split_at(m.min(rest.len()));
    let bary_gap = file.mu.barycenter().sub(&file.nu.barycenter()).norm();
    format!(
        "Farkas certificate: {} multipliers (max |y| {:.3e} on mu rows, {:.3e} on nu columns, {:.3e} on {} drift rows); barycenters differ by {:.3e}",
        y.len(),
        norm(rows),
        norm(cols),
        norm(drift),
        n * d,
        bary_gap
    )
}

fn csv_bytes(header: &[String], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:?}")))?;
    }
    w.into_inner().context("flushing csv")
}

fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("{prefix}{k}")).collect()
}

fn with_coords(p: &Point, tail: &[f64]) -> Vec<f64> {
    p.coords().iter().chain(tail).copied().collect()
}

fn solve(a: &SolveArgs) -> Result<u8> {
    let (_, inst) = load(&a.instance, a.gauss_points)?;
    let ps = solve_primal(&inst).context("solving the primal")?;
    let cert = extract_dual(&inst, &ps).context("extracting the dual")?;
    let d = inst.dim();
    let grid = evaluation_grid(&inst);

    let summary = format!(
        "dimension = {d}\nmu_atoms = {}\nnu_atoms = {}\ngaussian_points = {}\nprimal_value = {:?}\ndual_value = {:?}\nduality_gap = {:?}\n",
        inst.mu.len(),
        inst.nu.len(),
        inst.gamma.len(),
        ps.value,
        cert.value,
        (ps.value - cert.value).abs()
    );
    write_atomic(&a.out.join("solution.toml"), summary.as_bytes())?;

    let mut header = coord_header("y", d);
    header.push("psi".into());
    let rows: Vec<Vec<f64>> = grid.iter().map(|y| with_coords(y, &[cert.psi.eval(y)])).collect();
    write_atomic(&a.out.join("psi_grid.csv"), &csv_bytes(&header, &rows)?)?;

    let mut header = coord_header("y", d);
    header.extend(["weight".into(), "psi".into()]);
    let rows: Vec<Vec<f64>> = inst
        .nu
        .atoms()
        .zip(&cert.psi_hat)
        .map(|((y, w), &v)| with_coords(y, &[w, v]))
        .collect();
    write_atomic(&a.out.join("nu.csv"), &csv_bytes(&header, &rows)?)?;

    let mut header = coord_header("x", d);
    header.extend(["weight".into(), "phi".into(), "mcov".into()]);
    let rows: Vec<Vec<f64>> = inst
        .mu
        .atoms()
        .enumerate()
        .map(|(i, (x, w))| with_coords(x, &[w, cert.phi_hat[i], ps.per_x_mcov[i]]))
        .collect();
    write_atomic(&a.out.join("mu.csv"), &csv_bytes(&header, &rows)?)?;

    if a.emit_plot {
        if d == 1 {
            let spec = SequenceSpec::new(a.seq_strategy.into(), a.seq_len, a.seed);
            let tail = match gen_sequence(&spec, &inst, &cert.psi)? {
                SequenceOutcome::Generated(seq) => {
                    let k = seq.psis.len();
                    (k.saturating_sub(3)..k).map(|n| (n + 1, seq.psis[n].clone())).collect()
                }
                SequenceOutcome::NotApplicable(why) => {
                    eprintln!("plot: no {} sequence ({why}); drawing psi_hat only", spec.strategy.name());
                    Vec::new()
                }
            };
            let svg = plot::render(&inst, &cert.psi, &tail);
            write_atomic(&a.out.join("plot.svg"), svg.as_bytes())?;
        } else {
            eprintln!("plot: skipped, plots are one-dimensional only");
        }
    }
    println!("primal value {:.12}", ps.value);
    println!("dual value   {:.12}", cert.value);
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || UsageError(format!("--gen expects DIM:N_MU:N_NU, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((n[0], n[1], n[2]))
}

fn tolerances(base: Tolerances, overrides: &[String]) -> Result<Tolerances> {
    let mut t = base;
    for o in overrides {
        let (name, value) = o
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--tol expects NAME=VALUE, got {o:?}")))?;
        let v: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| *v > 0.0 && v.is_finite())
            .ok_or_else(|| UsageError(format!("--tol {name}: {value:?} is not a positive number")))?;
        if !t.set(name.trim(), v) {
            return Err(UsageError(format!("--tol: unknown tolerance {name:?}")).into());
        }
    }
    Ok(t)
}

fn verify(a: &VerifyArgs) -> Result<u8> {
    let mut jobs: Vec<(String, Instance, Tolerances)> = Vec::new();
    if let Some(path) = &a.instance {
        let (file, inst) = load(path, a.gauss_points)?;
        let id = path.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned());
        jobs.push((id, inst, tolerances(file.tolerances(), &a.tol)?));
    } else {
        let (d, n_mu, n_nu) = parse_shape(a.gen.as_deref().unwrap_or_default())?;
        let tol = tolerances(Tolerances::default(), &a.tol)?;
        let opts = GenOptions {
            gauss_points: a.gauss_points.unwrap_or(GenOptions::default().gauss_points),
            ..GenOptions::default()
        };
        let seeds: Vec<u64> = (0..a.count as u64).map(|k| a.seed + k).collect();
        let generated = seeds
            .par_iter()
            .map(|&s| gen_instance_with(d, n_mu, n_nu, s, &opts).with_context(|| format!("generating seed {s}")))
            .collect::<Result<Vec<_>>>()?;
        for (s, inst) in seeds.into_iter().zip(generated) {
            jobs.push((format!("gen-d{d}-s{s:06}"), inst, tol));
        }
    }
    let strategies: Vec<Strategy> = if a.seq_strategy.is_empty() {
        vec![Strategy::Perturb, Strategy::Entropic, Strategy::Adversarial]
    } else {
        a.seq_strategy.iter().map(|&s| s.into()).collect()
    };
    let rows = jobs
        .par_iter()
        .map(|(id, inst, tol)| {
            let ctx = suites::Context {
                id,
                strategies: &strategies,
                seq_len: a.seq_len,
                seed: a.seed,
                tol: *tol,
            };
            suites::run(a.suite, inst, &ctx).with_context(|| format!("{} suite on {id}", a.suite.name()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ReportRow> = rows.into_iter().flatten().collect();
    sort_rows(&mut rows);
    let path = a.out.join(format!("report-{}.csv", a.suite.name()));
    write_report(&path, &rows)?;
    let count = |v: Verdict| rows.iter().filter(|r| r.verdict == v).count();
    let failed = count(Verdict::Fail);
    println!(
        "{}: {} rows, {} PASS, {failed} FAIL, {} NOT-EVALUATED, {} NOT-APPLICABLE",
        a.suite.name(),
        rows.len(),
        count(Verdict::Pass),
        count(Verdict::NotEvaluated),
        count(Verdict::NotApplicable)
    );
    for r in rows.iter().filter(|r| r.verdict == Verdict::Fail).take(10) {
        println!("  FAIL {} {} [{}] value {:e}", r.instance_id, r.check_id, r.index, r.value);
    }
    println!("wrote {}", path.display());
    Ok(if failed > 0 { EXIT_FAIL_ROWS } else { 0 })
}

fn gen(a: &GenArgs) -> Result<u8> {
    let opts = GenOptions {
        gauss_points: a.gauss_points,
        ..GenOptions::default()
    };
    for k in 0..a.count as u64 {
        let seed = a.seed + k;
        let inst = gen_instance_with(a.dim, a.n_mu, a.n_nu, seed, &opts)
            .with_context(|| format!("generating seed {seed}"))?;
        let mut file = InstanceFile::from_instance(&inst, Some(seed));
        file.gaussian_points = a.gauss_points;
        let path = a.out.join(format!("instance-d{}-s{seed:06}.toml", a.dim));
        file.write(&path)?;
        println!("{}", path.display());
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_parse() {
        assert_eq!(parse_shape("2:1:5").unwrap(), (2, 1, 5));
        assert!(parse_shape("2:1").is_err());
        assert!(parse_shape("a:1:5").is_err());
    }

    #[test]
    fn tolerance_overrides_apply_in_order() {
        let t = tolerances(Tolerances::default(), &["l0=1e-3".into(), "l0 = 2e-3".into()]).unwrap();
        assert_eq!(t.l0, 2e-3);
        for bad in ["l0", "l0=-1", "nope=1"] {
            let err = tolerances(Tolerances::default(), &[bad.into()]).unwrap_err();
            assert_eq!(exit_code(&err), EXIT_PARSE, "{bad}");
        }
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let code = |e: Error| exit_code(&anyhow::Error::new(e).context("outer"));
        assert_eq!(code(Error::NotInConvexOrder { certificate: vec![] }), EXIT_NOT_IN_ORDER);
        assert_eq!(code(Error::GenerationExhausted { attempts: 50 }), EXIT_EXHAUSTED);
        assert_eq!(code(Error::Numeric("x".into())), EXIT_NUMERIC);
        assert_eq!(code(Error::InvalidMeasure("x".into())), EXIT_PARSE);
        let file = FileError::Field {
            field: "f".into(),
            message: "m".into(),
        };
        assert_eq!(exit_code(&anyhow::Error::new(file)), EXIT_PARSE);
    }
}
