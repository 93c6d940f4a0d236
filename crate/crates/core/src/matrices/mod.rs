//! Binary sensing matrices.
//!
//! A [`SensingMatrix`] is an immutable 0/1 array with cached row and column
//! weights. Matrices come from four places: the shipped stage-2 designs
//! ([`builtin_matrix`]), random draws matching a [`WeightProfile`]
//! ([`profile_sample`]), Kirkman triple systems ([`construct_kirkman`]), and
//! text files ([`load_matrix`]).

mod builtin;
mod io;
mod kirkman;
mod profile;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{builtin_matrix, design_profile, design_seed, BUILD_SEED, DESIGN_SIZES};
pub use io::{load_matrix, parse_matrix, save_matrix, to_text};
pub use kirkman::{construct_kirkman, verify_kirkman, KirkmanParams, KirkmanReport};
pub use profile::{profile_sample, verify_profile, ProfileReport, WeightProfile, DEFAULT_MAX_ATTEMPTS};

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<u8>,
    row_weights: Vec<usize>,
    col_weights: Vec<usize>,
}

impl SensingMatrix {
    /// Builds a matrix from row-major 0/1 entries.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::invalid("sensing matrix must have at least one row and one column"));
        }
        let mut entries = Vec::with_capacity(m * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Self::from_flat(m, n, entries)
    }

    pub fn from_flat(rows: usize, cols: usize, entries: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| e > 1) {
            return Err(Error::invalid(format!("sensing matrix entries must be 0 or 1, found {bad}")));
        }
        let row_weights: Vec<usize> = entries
            .chunks(cols)
            .map(|r| r.iter().map(|&e| e as usize).sum())
            .collect();
        let mut col_weights = vec![0usize; cols];
        for r in entries.chunks(cols) {
            for (w, &e) in col_weights.iter_mut().zip(r) {
                *w += e as usize;
            }
        }
        debug_assert_eq!(
            row_weights.iter().sum::<usize>(),
            col_weights.iter().sum::<usize>()
        );
        Ok(Self {
            rows,
            cols,
            entries,
            row_weights,
            col_weights,
        })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::from_flat(rows, cols, vec![1; rows * cols]).expect("non-empty all-ones matrix")
    }

    pub fn identity(n: usize) -> Self {
        let mut e = vec![0u8; n * n];
        for i in 0..n {
            e[i * n + i] = 1;
        }
        Self::from_flat(n, n, e).expect("non-empty identity")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j] == 1
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        (0..self.rows).map(|i| self.entries[i * self.cols + j]).collect()
    }

    /// Rows in which column `j` is active.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.get(i, j)).collect()
    }

    /// Columns active in row `i`.
    pub fn row_support(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &e)| e == 1)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn row_weights(&self) -> &[usize] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[usize] {
        &self.col_weights
    }

    pub fn total_ones(&self) -> usize {
        self.row_weights.iter().sum()
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must match column count");
        self.entries
            .chunks(self.cols)
            .map(|r| r.iter().zip(x).filter(|(&a, _)| a == 1).map(|(_, v)| v).sum())
            .collect()
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &SensingMatrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::invalid(format!(
                "cannot stack {} columns on {}",
                other.cols, self.cols
            )));
        }
        let mut e = self.entries.clone();
        e.extend_from_slice(&other.entries);
        Self::from_flat(self.rows + other.rows, self.cols, e)
    }

    /// Sub-matrix on the given rows and columns, in the given order.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<u8>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self.entries[i * self.cols + j]).collect())
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.cols).map(<[u8]>::to_vec).collect()
    }

    pub(crate) fn entries(&self) -> &[u8] {
        &self.entries
    }
}

impl fmt::Debug for SensingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SensingMatrix {}x{}", self.rows, self.cols)?;
        for r in self.entries.chunks(self.cols) {
            let line: String = r.iter().map(|&e| if e == 1 { '1' } else { '.' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: Vec<String>,
}

impl From<SensingMatrix> for MatrixRepr {
    fn from(m: SensingMatrix) -> Self {
        MatrixRepr {
            rows: m
                .entries
                .chunks(m.cols)
                .map(|r| r.iter().map(|&e| if e == 1 { '1' } else { '0' }).collect())
                .collect(),
        }
    }
}

impl TryFrom<MatrixRepr> for SensingMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        let rows = r
            .rows
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| match c {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        other => Err(Error::invalid(format!("bad matrix character {other:?}"))),
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        SensingMatrix::from_rows(rows)
    }
}
