use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::LinearMap;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Text dump format: a header line `rows cols nnz`, then one `i j value`
/// line per stored entry, 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros are kept.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Precondition(
                "matrix dimensions must be positive".into(),
            ));
        }
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::Domain(format!(
                    "triplet ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).1.iter().map(|v| v * v).sum())
            .collect()
    }

    pub fn is_nonneg(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_triplet_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz()).unwrap();
        for (i, j, v) in self.triplets() {
            writeln!(s, "{i} {j} {v:e}").unwrap();
        }
        s
    }

    pub fn from_triplet_str(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("missing header line")?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| format!("bad header token {t:?}: {e}"))
            })
            .collect::<std::result::Result<_, _>>()?;
        let [rows, cols, nnz] = head[..] else {
            return Err(format!("header must be `rows cols nnz`, got {header:?}"));
        };
        let mut triplets = Vec::with_capacity(nnz);
        for (lineno, line) in lines.enumerate() {
            let mut tok = line.split_whitespace();
            let parse_err = || format!("malformed entry on line {}: {line:?}", lineno + 2);
            let i: usize = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            let j: usize = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            let v: f64 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(parse_err)?;
            triplets.push((i, j, v));
        }
        if triplets.len() != nnz {
            return Err(format!(
                "header declares {nnz} entries, found {}",
                triplets.len()
            ));
        }
        CsrMatrix::from_triplets(rows, cols, &triplets).map_err(|e| e.to_string())
    }

    pub fn save_triplets(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_triplet_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_triplets(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CsrMatrix::from_triplet_str(&text).map_err(|message| Error::Parse {
            path: path.to_owned(),
            message,
        })
    }
}

impl LinearMap for CsrMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&j, a)| a * v[j]).sum();
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, a) in cols.iter().zip(vals) {
                out[j] += a * vi;
            }
        }
    }
}
