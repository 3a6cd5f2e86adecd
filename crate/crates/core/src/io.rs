//! Instance files (TOML) and verdict reports (CSV).
//!
//! An instance file looks like
//!
//! ```toml
//! dimension = 1
//! gaussian_points = 64
//! seed = 7
//!
//! [[mu_atoms]]
//! weight = 1.0
//! coords = [0.0]
//!
//! [[nu_atoms]]
//! weight = 0.5
//! coords = [-1.0]
//!
//! [[nu_atoms]]
//! weight = 0.5
//! coords = [1.0]
//!
//! [tolerances]
//! lp = 1e-8
//! ```
//!
//! `seed` and `[tolerances]` are optional; tolerance names are those of
//! [`Tolerances::set`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::error::Error;
use crate::harness::Verdict;
use crate::mbb::Instance;
use crate::measure::{DiscreteMeasure, Point};
use crate::tolerance::Tolerances;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Instance(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> FileError {
    FileError::Field {
        field: field.into(),
        message: message.into(),
    }
}

/// Parsed contents of an instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub dimension: usize,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub gaussian_points: usize,
    pub seed: Option<u64>,
    /// Explicit tolerance overrides, by name.
    pub tolerances: BTreeMap<String, f64>,
}

pub const DEFAULT_GAUSSIAN_POINTS: usize = 64;

impl InstanceFile {
    pub fn from_instance(inst: &Instance, seed: Option<u64>) -> Self {
        Self {
            dimension: inst.dim(),
            mu: inst.mu.clone(),
            nu: inst.nu.clone(),
            gaussian_points: inst.gamma.len(),
            seed,
            tolerances: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, FileError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            FileError::Syntax {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        for key in table.keys() {
            if !["dimension", "gaussian_points", "seed", "mu_atoms", "nu_atoms", "tolerances"].contains(&key.as_str()) {
                return Err(field_err(key, "unknown field"));
            }
        }
        let dimension = match table.get("dimension") {
            Some(v) => as_count(v, "dimension")?,
            None => return Err(field_err("dimension", "missing")),
        };
        if !(1..=2).contains(&dimension) {
            return Err(field_err("dimension", format!("must be 1 or 2, got {dimension}")));
        }
        let gaussian_points = match table.get("gaussian_points") {
            Some(v) => as_count(v, "gaussian_points")?,
            None => DEFAULT_GAUSSIAN_POINTS,
        };
        let seed = table
            .get("seed")
            .map(|v| as_count(v, "seed").map(|s| s as u64))
            .transpose()?;
        let mu = parse_atoms(&table, "mu_atoms", dimension)?;
        let nu = parse_atoms(&table, "nu_atoms", dimension)?;
        let mut tolerances = BTreeMap::new();
        if let Some(v) = table.get("tolerances") {
            let t = v
                .as_table()
                .ok_or_else(|| field_err("tolerances", "expected a table"))?;
            let mut probe = Tolerances::default();
            for (name, value) in t {
                let field = format!("tolerances.{name}");
                let x = as_number(value, &field)?;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(field_err(field, "must be positive"));
                }
                if !probe.set(name, x) {
                    return Err(field_err(field, "unknown tolerance"));
                }
                tolerances.insert(name.clone(), x);
            }
        }
        Ok(Self {
            dimension,
            mu,
            nu,
            gaussian_points,
            seed,
            tolerances,
        })
    }

    pub fn read(path: &Path) -> Result<Self, FileError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Canonical text: fixed key order, renormalized merged weights.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dimension = {}", self.dimension);
        let _ = writeln!(out, "gaussian_points = {}", self.gaussian_points);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        for (name, m) in [("mu_atoms", &self.mu), ("nu_atoms", &self.nu)] {
            for (p, w) in m.atoms() {
                let coords: Vec<String> = p.coords().iter().map(|c| float(*c)).collect();
                let _ = write!(
                    out,
                    "\n[[{name}]]\nweight = {}\ncoords = [{}]\n",
                    float(w),
                    coords.join(", ")
                );
            }
        }
        if !self.tolerances.is_empty() {
            out.push_str("\n[tolerances]\n");
            for (k, v) in &self.tolerances {
                let _ = writeln!(out, "{k} = {}", float(*v));
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), FileError> {
        write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        for (k, v) in &self.tolerances {
            t.set(k, *v);
        }
        t
    }

    pub fn instance(&self) -> Result<Instance, Error> {
        Instance::with_gauss_points(self.mu.clone(), self.nu.clone(), self.gaussian_points)
    }
}

/// Shortest round-trip decimal that TOML reads as a float.
fn float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn describe(v: &Value) -> String {
    match v {
        Value::String(s) => format!("string {s:?}"),
        other => format!("{} {other}", other.type_str()),
    }
}

fn as_number(v: &Value, field: &str) -> Result<f64, FileError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(field_err(field, format!("expected a number, got {}", describe(other)))),
    }
}

fn as_count(v: &Value, field: &str) -> Result<usize, FileError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(field_err(
            field,
            format!("expected a nonnegative integer, got {}", describe(other)),
        )),
    }
}

fn parse_atoms(table: &Table, name: &str, dim: usize) -> Result<DiscreteMeasure, FileError> {
    let list = table
        .get(name)
        .ok_or_else(|| field_err(name, "missing"))?
        .as_array()
        .ok_or_else(|| field_err(name, "expected an array of tables"))?;
    if list.is_empty() {
        return Err(field_err(name, "needs at least one atom"));
    }
    let mut atoms = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let at = |key: &str| format!("{name}[{i}].{key}");
        let t = entry
            .as_table()
            .ok_or_else(|| field_err(format!("{name}[{i}]"), "expected a table"))?;
        for key in t.keys() {
            if key != "weight" && key != "coords" {
                return Err(field_err(at(key), "unknown field"));
            }
        }
        let weight = as_number(t.get("weight").ok_or_else(|| field_err(at("weight"), "missing"))?, &at("weight"))?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(field_err(at("weight"), format!("must be positive and finite, got {weight}")));
        }
        let coords = t
            .get("coords")
            .ok_or_else(|| field_err(at("coords"), "missing"))?
            .as_array()
            .ok_or_else(|| field_err(at("coords"), "expected an array of numbers"))?;
        if coords.len() != dim {
            return Err(field_err(
                at("coords"),
                format!("expected {dim} coordinates, got {}", coords.len()),
            ));
        }
        let xs = coords
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let x = as_number(c, &format!("{}[{k}]", at("coords")))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(field_err(format!("{}[{k}]", at("coords")), "must be finite"))
                }
            })
            .collect::<Result<Vec<f64>, FileError>>()?;
        atoms.push((Point::new(xs), weight));
    }
    DiscreteMeasure::from_unnormalized(dim, atoms).map_err(|e| field_err(name, e.to_string()))
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One row of a verdict report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub instance_id: String,
    pub check_id: String,
    /// Sequence index `n` or window index `j`; 0 when not indexed.
    pub index: usize,
    pub value: f64,
    pub threshold: Option<f64>,
    pub verdict: Verdict,
}

pub const REPORT_HEADER: [&str; 6] = ["instance_id", "check_id", "n_or_j", "value", "threshold", "verdict"];

/// Sorts rows by `(instance_id, check_id, index)`; the sort is stable so
/// rows sharing a key keep their insertion order.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        (a.instance_id.as_str(), a.check_id.as_str(), a.index).cmp(&(b.instance_id.as_str(), b.check_id.as_str(), b.index))
    });
}

pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>, FileError> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.instance_id.clone(),
            r.check_id.clone(),
            r.index.to_string(),
            format!("{:e}", r.value),
            r.threshold.map(|t| format!("{t:e}")).unwrap_or_default(),
            r.verdict.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| FileError::Io(e.into_error()))
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), FileError> {
    write_atomic(path, &report_csv(rows)?)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, FileError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let row = i + 2;
        let num = |k: usize| -> Result<f64, FileError> {
            get(k)
                .parse()
                .map_err(|_| field_err(format!("row {row}, {}", REPORT_HEADER[k]), format!("bad number {:?}", get(k))))
        };
        out.push(ReportRow {
            instance_id: get(0).to_string(),
            check_id: get(1).to_string(),
            index: get(2)
                .parse()
                .map_err(|_| field_err(format!("row {row}, n_or_j"), format!("bad index {:?}", get(2))))?,
            value: num(3)?,
            threshold: if get(4).is_empty() { None } else { Some(num(4)?) },
            verdict: get(5)
                .parse()
                .map_err(|e: Error| field_err(format!("row {row}, verdict"), e.to_string()))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STANDARD: &str = "dimension = 1\ngaussian_points = 16\n\n[[mu_atoms]]\nweight = 1\ncoords = [0]\n\n[[nu_atoms]]\nweight = 1\ncoords = [-1.0]\n\n[[nu_atoms]]\nweight = 1\ncoords = [1.0]\n";

    #[test]
    fn parses_and_round_trips() {
        let f = InstanceFile::parse(STANDARD).unwrap();
        assert_eq!(f.dimension, 1);
        assert_eq!(f.nu.weights(), &[0.5, 0.5]);
        let text = f.to_toml();
        let g = InstanceFile::parse(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(text, g.to_toml());
        assert!(f.instance().is_ok());
    }

    #[test]
    fn duplicates_merge() {
        let text = STANDARD.replace("coords = [1.0]", "coords = [-1.0]").replace("coords = [0]", "coords = [-1]");
        let f = InstanceFile::parse(&text).unwrap();
        assert_eq!(f.nu.len(), 1);
    }

    #[test]
    fn field_precise_errors() {
        let bad = STANDARD.replacen("weight = 1\ncoords = [-1.0]", "weight = \"abc\"\ncoords = [-1.0]", 1);
        let e = InstanceFile::parse(&bad).unwrap_err().to_string();
        assert!(e.contains("nu_atoms[0].weight") && e.contains("abc"), "{e}");
        let e = InstanceFile::parse("dimension = 3").unwrap_err().to_string();
        assert!(e.contains("dimension"), "{e}");
        let e = InstanceFile::parse("dimension = 1\nmu_atoms = = 3\n").unwrap_err();
        assert!(matches!(e, FileError::Syntax { line: 2, .. }), "{e}");
        let e = InstanceFile::parse(&format!("{STANDARD}\n[tolerances]\nfoo = 1.0\n")).unwrap_err().to_string();
        assert!(e.contains("tolerances.foo"), "{e}");
        let e = InstanceFile::parse(&STANDARD.replace("coords = [0]", "coords = [0, 1]")).unwrap_err().to_string();
        assert!(e.contains("mu_atoms[0].coords"), "{e}");
    }

    #[test]
    fn report_rows_are_sorted_and_round_trip() {
        let row = |i: &str, c: &str, n: usize| ReportRow {
            instance_id: i.into(),
            check_id: c.into(),
            index: n,
            value: 0.1 * n as f64,
            threshold: if n == 0 { None } else { Some(1e-4) },
            verdict: Verdict::Pass,
        };
        let rows = vec![row("b", "x", 1), row("a", "y", 2), row("a", "x", 10), row("a", "x", 0)];
        let bytes = report_csv(&rows).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "instance_id,check_id,n_or_j,value,threshold,verdict");
        assert!(lines[1].starts_with("a,x,0,"));
        assert!(lines[2].starts_with("a,x,10,"));
        let dir = std::env::temp_dir().join(format!("mbb-io-{}", std::process::id()));
        let path = dir.join("r.csv");
        write_report(&path, &rows).unwrap();
        let back = read_report(&path).unwrap();
        let mut sorted = rows.clone();
        sort_rows(&mut sorted);
        assert_eq!(back, sorted);
        fs::remove_dir_all(dir).unwrap();
    }
}
