//! Dense and sparse-symmetric matrix primitives.
//!
//! Every reduction runs in a fixed left-to-right order so results are
//! bit-reproducible. Row-parallel kernels compute each output row with the
//! exact same sequence of operations as the sequential path.

use rayon::prelude::*;

use crate::error::{dim_mismatch, CcgcError, Result};

/// Below this many multiply-adds a product stays on the calling thread.
const PARALLEL_WORK: usize = 1 << 18;

/// Row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CcgcError::InvalidMatrix(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(CcgcError::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(CcgcError::InvalidMatrix(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Column-wise mean; zero vector for an empty matrix.
    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        acc
    }

    pub fn scaled(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self + c * other`, elementwise.
    pub fn add_scaled(&self, other: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(dim_mismatch(
                "add_scaled",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs `f(row_index, out_row)` over every output row, in parallel when the
/// product is large enough to pay for it.
fn fill_rows<F>(out: &mut DenseMatrix, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let cols = out.cols;
    if cols == 0 {
        return;
    }
    if work >= PARALLEL_WORK && out.rows > 1 {
        out.data
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        out.data
            .chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Standard product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(dim_mismatch(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    let n = b.cols;
    fill_rows(&mut out, a.rows * a.cols * n, |i, orow| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    });
    Ok(out)
}

/// `aᵀ * b` without materializing the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(dim_mismatch(
            "matmul_tn",
            format!("{:?}ᵀ x {:?}", a.shape(), b.shape()),
        ));
    }
    let at = a.transpose();
    matmul(&at, b)
}

/// `a * bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(dim_mismatch(
            "matmul_nt",
            format!("{:?} x {:?}ᵀ", a.shape(), b.shape()),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    fill_rows(&mut out, a.rows * a.cols * b.rows, |i, orow| {
        let arow = a.row(i);
        for (j, o) in orow.iter_mut().enumerate() {
            *o = dot(arow, b.row(j));
        }
    });
    Ok(out)
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[inline]
pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cosine similarity. Returns 0 whenever either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine of unequal-length vectors");
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Divides each row by its ℓ2 norm. Zero rows stay zero.
pub fn row_l2_normalize(m: &DenseMatrix) -> DenseMatrix {
    row_l2_normalize_with_norms(m).0
}

/// Like [`row_l2_normalize`], also returning the per-row norms (0 for zero rows).
pub fn row_l2_normalize_with_norms(m: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let row = out.row_mut(r);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
        norms.push(n);
    }
    (out, norms)
}

/// Symmetric sparse matrix in CSR form with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from `(row, col, value)` triples in any order. Both triangles
    /// must be present.
    pub fn from_triples(dim: usize, mut triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triples {
            if r >= dim || c >= dim {
                return Err(CcgcError::InvalidMatrix(format!(
                    "entry ({r}, {c}) outside {dim}x{dim}"
                )));
            }
            if !v.is_finite() {
                return Err(CcgcError::InvalidMatrix(format!(
                    "non-finite entry at ({r}, {c})"
                )));
            }
        }
        triples.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in triples.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(CcgcError::InvalidMatrix(format!(
                    "duplicate entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &triples {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = triples.iter().map(|t| t.1).collect();
        let values: Vec<f64> = triples.iter().map(|t| t.2).collect();
        let m = Self {
            dim,
            row_ptr,
            col_idx,
            values,
        };
        for (r, c, v) in m.entries() {
            if m.value(c, r) != Some(v) {
                return Err(CcgcError::InvalidMatrix(format!(
                    "entry ({r}, {c}) has no symmetric counterpart"
                )));
            }
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries in canonical `(row, col)` order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn value(&self, r: usize, c: usize) -> Option<f64> {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&c)
            .ok()
            .map(|k| self.values[self.row_ptr[r] + k])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            out.set(r, c, v);
        }
        out
    }

    /// Sparse-dense product `self * m`.
    pub fn spmm(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if self.dim != m.rows() {
            return Err(dim_mismatch(
                "spmm",
                format!("{0}x{0} x {1:?}", self.dim, m.shape()),
            ));
        }
        let mut out = DenseMatrix::zeros(self.dim, m.cols());
        let n = m.cols();
        fill_rows(&mut out, self.nnz() * n, |i, orow| {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[k];
                for (o, x) in orow.iter_mut().zip(m.row(self.col_idx[k])) {
                    *o += v * x;
                }
            }
        });
        Ok(out)
    }
}
