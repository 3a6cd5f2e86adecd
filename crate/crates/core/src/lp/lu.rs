//! Dense-workspace LU factorization of a simplex basis, plus the product-form
//! eta file that absorbs basis changes between refactorizations.
//!
//! The basis columns are indexed by basis position; rows by constraint index.
//! Factorization records the elimination as a sequence of `(row, position)`
//! pivots so that both `B x = v` and `B^T y = v` can be solved in place.

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct Step {
    row: usize,
    col: usize,
    pivot: f64,
    /// Multipliers `(row, l)` applied as `w[row] -= l * w[self.row]`.
    lower: Vec<(usize, f64)>,
    /// Off-pivot entries `(position, u)` of the pivot row at elimination time.
    upper: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    steps: Vec<Step>,
    etas: Vec<Eta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular;

impl Factor {
    /// Factorizes the `m x m` matrix whose `k`-th column is `columns[k]`.
    pub(crate) fn new(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut w = vec![0.0; m * m];
        let mut row_count = vec![0usize; m];
        for (k, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                w[i * m + k] += v;
                row_count[i] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&k| (columns[k].len(), k));

        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut steps = Vec::with_capacity(m);
        let mut prow_nz: Vec<usize> = Vec::with_capacity(m);
        let mut col_rows: Vec<usize> = Vec::with_capacity(m);

        for &c in &order {
            col_rows.clear();
            let mut max_abs = 0.0f64;
            for i in 0..m {
                if row_done[i] {
                    continue;
                }
                let a = w[i * m + c];
                if a != 0.0 {
                    col_rows.push(i);
                    max_abs = max_abs.max(a.abs());
                }
            }
            if max_abs < SINGULAR_TOL {
                return Err(Singular);
            }
            let mut r = usize::MAX;
            for &i in &col_rows {
                if w[i * m + c].abs() >= PIVOT_THRESHOLD * max_abs
                    && (r == usize::MAX || row_count[i] < row_count[r])
                {
                    r = i;
                }
            }
            let pivot = w[r * m + c];

            prow_nz.clear();
            for j in 0..m {
                if j != c && !col_done[j] && w[r * m + j] != 0.0 {
                    prow_nz.push(j);
                }
            }
            let mut lower = Vec::new();
            for &i in &col_rows {
                if i == r {
                    continue;
                }
                let l = w[i * m + c] / pivot;
                w[i * m + c] = 0.0;
                for &j in &prow_nz {
                    w[i * m + j] -= l * w[r * m + j];
                }
                lower.push((i, l));
            }
            let upper = prow_nz.iter().map(|&j| (j, w[r * m + j])).collect();
            row_done[r] = true;
            col_done[c] = true;
            steps.push(Step {
                row: r,
                col: c,
                pivot,
                lower,
                upper,
            });
        }
        Ok(Self {
            m,
            steps,
            etas: Vec::new(),
        })
    }

    pub(crate) fn identity(m: usize) -> Self {
        let steps = (0..m)
            .map(|i| Step {
                row: i,
                col: i,
                pivot: 1.0,
                lower: Vec::new(),
                upper: Vec::new(),
            })
            .collect();
        Self {
            m,
            steps,
            etas: Vec::new(),
        }
    }

    pub(crate) fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = v`. `v` is indexed by row; the result by basis position.
    pub(crate) fn ftran(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for s in &self.steps {
            let wr = w[s.row];
            if wr != 0.0 {
                for &(i, l) in &s.lower {
                    w[i] -= l * wr;
                }
            }
        }
        let mut x = vec![0.0; self.m];
        for s in self.steps.iter().rev() {
            let mut acc = w[s.row];
            for &(j, u) in &s.upper {
                acc -= u * x[j];
            }
            x[s.col] = acc / s.pivot;
        }
        for e in &self.etas {
            let xr = x[e.pos] / e.pivot;
            if xr != 0.0 {
                for &(i, a) in &e.entries {
                    x[i] -= a * xr;
                }
            }
            x[e.pos] = xr;
        }
        x
    }

    /// Solves `B^T y = v`. `v` is indexed by basis position; the result by row.
    pub(crate) fn btran(&self, v: &[f64]) -> Vec<f64> {
        let mut acc = v.to_vec();
        for e in self.etas.iter().rev() {
            let mut s = acc[e.pos];
            for &(i, a) in &e.entries {
                s -= a * acc[i];
            }
            acc[e.pos] = s / e.pivot;
        }
        let mut z = vec![0.0; self.m];
        for s in &self.steps {
            let zr = acc[s.col] / s.pivot;
            z[s.row] = zr;
            if zr != 0.0 {
                for &(j, u) in &s.upper {
                    acc[j] -= zr * u;
                }
            }
        }
        for s in self.steps.iter().rev() {
            let mut t = z[s.row];
            for &(i, l) in &s.lower {
                t -= l * z[i];
            }
            z[s.row] = t;
        }
        z
    }

    /// Records the replacement of the column at `pos` by a column whose
    /// FTRAN image is `alpha`.
    pub(crate) fn push_eta(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|k| {
                (0..m)
                    .filter(|&i| a[i][k] != 0.0)
                    .map(|i| (i, a[i][k]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
            .collect()
    }

    #[test]
    fn solves_both_systems() {
        let a = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 1.0, 4.0, 1.0],
            vec![0.0, 0.0, 1.0, 5.0],
        ];
        let f = Factor::new(4, &dense_cols(&a)).unwrap();
        let v = vec![1.0, -2.0, 0.5, 3.0];
        let x = f.ftran(&v);
        let back = matvec(&a, &x);
        for (p, q) in back.iter().zip(&v) {
            assert!((p - q).abs() < 1e-12);
        }
        let y = f.btran(&v);
        let at: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| a[j][i]).collect()).collect();
        let back = matvec(&at, &y);
        for (p, q) in back.iter().zip(&v) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_update_matches_refactor() {
        let mut a = vec![
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 3.0],
            vec![4.0, 0.0, 1.0],
        ];
        let mut f = Factor::new(3, &dense_cols(&a)).unwrap();
        let new_col = vec![1.0, 1.0, 1.0];
        let alpha = f.ftran(&new_col);
        f.push_eta(1, &alpha);
        for i in 0..3 {
            a[i][1] = new_col[i];
        }
        let g = Factor::new(3, &dense_cols(&a)).unwrap();
        let v = vec![0.3, -1.0, 2.0];
        for (p, q) in f.ftran(&v).iter().zip(g.ftran(&v)) {
            assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in f.btran(&v).iter().zip(g.btran(&v)) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(Factor::new(2, &dense_cols(&a)).is_err());
    }
}
