use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mbb_core::harness::Verdict;
use mbb_core::io::{read_report, InstanceFile};
use mbb_core::transport::{check_convex_order, mcov_value};

fn mbb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbb"))
        .args(args)
        .env_remove("MBB_THREADS")
        .output()
        .expect("spawn mbb")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn sample(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../instances")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn out_dir(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn solution_value(dir: &Path, key: &str) -> f64 {
    let text = std::fs::read_to_string(dir.join("solution.toml")).unwrap();
    let table: toml::Table = text.parse().unwrap();
    table[key].as_float().unwrap()
}

#[test]
fn solve_matches_the_transport_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "s");
    let o = mbb(&["solve", &sample("standard-1d.toml"), "--out", &out, "--emit-plot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = InstanceFile::read(Path::new(&sample("standard-1d.toml"))).unwrap();
    let inst = file.instance().unwrap();
    let expect = mcov_value(&inst.nu, &inst.gamma).unwrap();
    let value = solution_value(Path::new(&out), "primal_value");
    assert!((value - expect).abs() <= 1e-8 * (1.0 + expect.abs()), "{value} vs {expect}");
    for f in ["psi_grid.csv", "nu.csv", "mu.csv"] {
        assert!(Path::new(&out).join(f).exists(), "{f}");
    }
    let svg = std::fs::read_to_string(Path::new(&out).join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn plot_is_skipped_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "s");
    let o = mbb(&["solve", &sample("triangle-2d.toml"), "--out", &out, "--emit-plot"]);
    assert_eq!(code(&o), 0);
    assert!(!Path::new(&out).join("plot.svg").exists());
}

#[test]
fn mean_mismatch_exits_with_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        &dir,
        "bad.toml",
        "dimension = 1\n[[mu_atoms]]\nweight = 1.0\ncoords = [0.5]\n[[nu_atoms]]\nweight = 0.5\ncoords = [-1.0]\n[[nu_atoms]]\nweight = 0.5\ncoords = [1.0]\n",
    );
    let o = mbb(&["solve", &f, "--out", &out_dir(&dir, "s")]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Farkas certificate"), "{err}");
    assert!(err.contains("barycenters differ by 5.000e-1"), "{err}");
}

#[test]
fn malformed_weight_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        &dir,
        "bad.toml",
        "dimension = 1\n[[mu_atoms]]\nweight = \"abc\"\ncoords = [0.0]\n[[nu_atoms]]\nweight = 1.0\ncoords = [0.0]\n",
    );
    let o = mbb(&["solve", &f]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu_atoms[0].weight"));
}

#[test]
fn syntax_errors_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(&dir, "bad.toml", "dimension = 1\nmu_atoms = = 3\n");
    let o = mbb(&["verify", &f, "--suite", "identities"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = mbb(&["verify", &sample("standard-1d.toml"), "--suite", "identities", "--tol", "bogus=1"]);
    assert_eq!(code(&o), 2);
    let o = mbb(&["verify", "--gen", "1:2", "--suite", "identities"]);
    assert_eq!(code(&o), 2);
    let o = mbb(&["verify", &sample("standard-1d.toml"), "--suite", "nonsense"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lemma2_is_not_applicable_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "v");
    let o = mbb(&["verify", &sample("triangle-2d.toml"), "--suite", "lemma2", "--out", &out]);
    assert_eq!(code(&o), 0);
    let rows = read_report(&Path::new(&out).join("report-lemma2.csv")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.verdict == Verdict::NotApplicable));
}

#[test]
fn theorem1_on_the_triangle_reports_sharpness() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "v");
    let o = mbb(&["verify", &sample("triangle-2d.toml"), "--suite", "theorem1", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = read_report(&Path::new(&out).join("report-theorem1.csv")).unwrap();
    let verdict = |check: &str| rows.iter().find(|r| r.check_id == check).map(|r| r.verdict);
    for check in ["perturb.l0", "perturb.liminf", "entropic.l0", "entropic.liminf", "adversarial.l0"] {
        assert_eq!(verdict(check), Some(Verdict::Pass), "{check}");
    }
    assert_eq!(verdict("adversarial.sharpness"), Some(Verdict::Pass));
}

#[test]
fn identities_hold_on_fifty_generated_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "v");
    let o = mbb(&["verify", "--gen", "1:2:6", "--count", "50", "--suite", "identities", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = read_report(&Path::new(&out).join("report-identities.csv")).unwrap();
    let ids: std::collections::BTreeSet<_> = rows.iter().map(|r| r.instance_id.clone()).collect();
    assert_eq!(ids.len(), 50);
    assert!(rows.iter().all(|r| r.verdict == Verdict::Pass));
}

#[test]
fn fail_rows_never_exit_zero() {
    // The final-window W2 bound is out of reach on this instance.
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "v");
    let o = mbb(&["verify", "--gen", "1:2:6", "--seed", "0", "--suite", "lemma2", "--out", &out]);
    let rows = read_report(&Path::new(&out).join("report-lemma2.csv")).unwrap();
    assert!(rows.iter().any(|r| r.verdict == Verdict::Fail));
    assert_eq!(code(&o), 1);
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (k, threads) in ["1", "4"].into_iter().enumerate() {
        let out = out_dir(&dir, &format!("r{k}"));
        let o = Command::new(env!("CARGO_BIN_EXE_mbb"))
            .args(["verify", "--gen", "2:1:5", "--count", "3", "--seed", "11", "--suite", "lemma4", "--out", &out])
            .env("MBB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(PathBuf::from(out).join("report-lemma4.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_mbb"))
        .args(["verify", &sample("standard-1d.toml"), "--suite", "identities"])
        .env("MBB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_is_deterministic_and_in_convex_order() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (out_dir(&dir, "a"), out_dir(&dir, "b"));
    for out in [&a, &b] {
        let o = mbb(&["gen", "--dim", "1", "--n-mu", "2", "--n-nu", "5", "--seed", "7", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    let name = "instance-d1-s000007.toml";
    let fa = std::fs::read(Path::new(&a).join(name)).unwrap();
    assert_eq!(fa, std::fs::read(Path::new(&b).join(name)).unwrap());
    let file = InstanceFile::read(&Path::new(&a).join(name)).unwrap();
    assert_eq!(file.seed, Some(7));
    assert!(check_convex_order(&file.mu, &file.nu).unwrap().holds);
}

#[test]
fn single_source_atom_sits_at_the_target_barycenter() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(&dir, "g");
    let o = mbb(&["gen", "--dim", "2", "--n-mu", "1", "--n-nu", "4", "--seed", "3", "--out", &out]);
    assert_eq!(code(&o), 0);
    let file = InstanceFile::read(&Path::new(&out).join("instance-d2-s000003.toml")).unwrap();
    assert_eq!(file.mu.len(), 1);
    assert!(file.mu.point(0).dist(&file.nu.barycenter()) <= 1e-12);
}

#[test]
fn exhausted_generation_exits_5() {
    // mu = nu admits only the identity transport, which is never irreducible.
    let o = mbb(&["gen", "--dim", "1", "--n-mu", "3", "--n-nu", "3", "--seed", "1", "--out", "unused"]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}
