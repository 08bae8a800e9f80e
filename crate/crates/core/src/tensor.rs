//! Small dense-matrix helpers and a symmetric-friendly rank-3 tensor.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Dense `m × m × m` array indexed `(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<Vec<f64>>>", try_from = "Vec<Vec<Vec<f64>>>")]
pub struct Tensor3 {
    m: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(m: usize) -> Self {
        Tensor3 {
            m,
            data: vec![0.0; m * m * m],
        }
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    t.data[(i * m + j) * m + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.m + j) * self.m + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.m + j) * self.m + k] = v;
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        Tensor3 {
            m: self.m,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }
}

impl From<Tensor3> for Vec<Vec<Vec<f64>>> {
    fn from(t: Tensor3) -> Self {
        (0..t.m)
            .map(|i| {
                (0..t.m)
                    .map(|j| (0..t.m).map(|k| t.get(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for Tensor3 {
    type Error = String;

    fn try_from(v: Vec<Vec<Vec<f64>>>) -> Result<Self, Self::Error> {
        let m = v.len();
        if v.iter().any(|r| r.len() != m || r.iter().any(|c| c.len() != m)) {
            return Err("tensor must be cubic".into());
        }
        Ok(Tensor3 {
            m,
            data: v.into_iter().flatten().flatten().collect(),
        })
    }
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part; `+∞` for an empty matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvector of the smallest eigenvalue of the symmetric part.
pub fn min_eigenvector(a: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    eig.eigenvectors.column(idx).iter().copied().collect()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix, with its condition number.
pub fn symmetric_pinv(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 1.0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = largest * 1e-12 * n as f64;
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let inv = DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .filter(|&k| eig.eigenvalues[k].abs() > cutoff)
            .map(|k| eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)] / eig.eigenvalues[k])
            .sum()
    });
    let cond = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
    (inv, cond)
}

/// Block-diagonal assembly.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}
