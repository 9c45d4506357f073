//! Compressed sparse row storage.
//!
//! Every matrix produced by this module is canonical: row offsets are
//! non-decreasing, and within a row the column indices are strictly
//! increasing. Duplicate `(row, col)` entries supplied during assembly are
//! merged by summation. Explicit zeros are allowed and kept.

use super::vector::{check_len, DenseVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, rejecting anything non-canonical.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != values.len() {
            return Err(Error::InvalidStructure(format!(
                "{} column indices, {} values, row_offsets ends at {}",
                col_indices.len(),
                values.len(),
                row_offsets[n_rows]
            )));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(Error::InvalidStructure(format!(
                        "column index {c} out of bounds for {n_cols} columns (row {i})"
                    )));
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Ok(Self::from_sorted_entries(n_rows, n_cols, &entries))
    }

    fn from_sorted_entries(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("merged entry has a predecessor") += v;
                continue;
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Dense row-major input; exact zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            check_len("dense row", n_cols, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] += v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Stored value at `(i, j)`, or 0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over all stored `(row, col, value)` entries in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(c, v)| (i, c, v)))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = M x`
    pub fn spmv(&self, x: &[f64]) -> Result<DenseVector> {
        check_len(
            "spmv (matrix columns vs vector length)",
            self.n_cols,
            x.len(),
        )?;
        let mut y = DenseVector::zeros(self.n_rows);
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked kernel; `x.len() == n_cols` and `y.len() == n_rows` must hold.
    pub(crate) fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    /// `y = Mᵀ x` without forming the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<DenseVector> {
        check_len("transposed spmv", self.n_rows, x.len())?;
        let mut y = DenseVector::zeros(self.n_cols);
        for (i, &xi) in x.iter().enumerate() {
            for (c, v) in self.row(i) {
                y[c] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in order, so each transposed row comes out sorted.
        for i in 0..self.n_rows {
            for (c, v) in self.row(i) {
                let dst = next[c];
                col_indices[dst] = i;
                values[dst] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Main diagonal; unstored entries read as 0.
    pub fn extract_diagonal(&self) -> Result<DenseVector> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        Ok(DenseVector::from_fn(self.n_rows, |i| self.get(i, i)))
    }

    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= a;
        }
        out
    }

    /// `diag(d) · M`
    pub fn scale_rows(&self, d: &[f64]) -> Result<CsrMatrix> {
        check_len("row scaling", self.n_rows, d.len())?;
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for k in out.row_offsets[i]..out.row_offsets[i + 1] {
                out.values[k] *= di;
            }
        }
        Ok(out)
    }

    /// Re-sorts and merges duplicates. A no-op on matrices built by this
    /// module; exposed so externally produced arrays can be normalised.
    pub fn canonicalized(&self) -> CsrMatrix {
        let entries: Vec<_> = self.triplets().collect();
        let mut entries = entries;
        entries.sort_by_key(|&(r, c, _)| (r, c));
        Self::from_sorted_entries(self.n_rows, self.n_cols, &entries)
    }

    /// Sparse product `self · other` (row-wise Gustavson with a dense accumulator).
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        check_len("matrix product inner dimension", self.n_cols, other.n_rows)?;
        let p = other.n_cols;
        let mut acc = vec![0.0; p];
        let mut marker = vec![usize::MAX; p];
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: p,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetric_part(&self) -> Result<CsrMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        add_scaled(self, 0.5, &self.transpose(), 0.5)
    }

    /// Largest entrywise deviation `|self - other|` over the union of both patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> Result<f64> {
        let d = add_scaled(self, 1.0, other, -1.0)?;
        Ok(d.max_abs())
    }

    /// Assembles the 2×2 block matrix `[a b; c d]`.
    pub fn from_blocks(
        a: &CsrMatrix,
        b: &CsrMatrix,
        c: &CsrMatrix,
        d: &CsrMatrix,
    ) -> Result<CsrMatrix> {
        check_len("block rows (A vs B)", a.n_rows, b.n_rows)?;
        check_len("block rows (C vs D)", c.n_rows, d.n_rows)?;
        check_len("block columns (A vs C)", a.n_cols, c.n_cols)?;
        check_len("block columns (B vs D)", b.n_cols, d.n_cols)?;
        let (nu, nv) = (a.n_cols, b.n_cols);
        let n_rows = a.n_rows + c.n_rows;
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(a.nnz() + b.nnz() + c.nnz() + d.nnz());
        let mut values = Vec::with_capacity(col_indices.capacity());
        for (left, right) in [(a, b), (c, d)] {
            for i in 0..left.n_rows {
                for (cidx, v) in left.row(i) {
                    col_indices.push(cidx);
                    values.push(v);
                }
                for (cidx, v) in right.row(i) {
                    col_indices.push(nu + cidx);
                    values.push(v);
                }
                row_offsets.push(col_indices.len());
            }
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols: nu + nv,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `(lower, upper)` bandwidth of the stored pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for (i, j, _) in self.triplets() {
            if j < i {
                lo = lo.max(i - j);
            } else {
                up = up.max(j - i);
            }
        }
        (lo, up)
    }

    /// Symmetric permutation `P M Pᵀ` where `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Result<CsrMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        check_len("permutation", self.n_rows, perm.len())?;
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let trip = self.triplets().map(|(i, j, v)| (inv[i], inv[j], v));
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, trip)
    }
}

/// `a·M1 + b·M2` in canonical form.
pub fn add_scaled(m1: &CsrMatrix, a: f64, m2: &CsrMatrix, b: f64) -> Result<CsrMatrix> {
    check_len("matrix sum rows", m1.n_rows, m2.n_rows)?;
    check_len("matrix sum columns", m1.n_cols, m2.n_cols)?;
    let mut row_offsets = Vec::with_capacity(m1.n_rows + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::with_capacity(m1.nnz() + m2.nnz());
    let mut values = Vec::with_capacity(m1.nnz() + m2.nnz());
    for i in 0..m1.n_rows {
        let (mut p, p_end) = (m1.row_offsets[i], m1.row_offsets[i + 1]);
        let (mut q, q_end) = (m2.row_offsets[i], m2.row_offsets[i + 1]);
        while p < p_end || q < q_end {
            let cp = if p < p_end {
                m1.col_indices[p]
            } else {
                usize::MAX
            };
            let cq = if q < q_end {
                m2.col_indices[q]
            } else {
                usize::MAX
            };
            if cp == cq {
                col_indices.push(cp);
                values.push(a * m1.values[p] + b * m2.values[q]);
                p += 1;
                q += 1;
            } else if cp < cq {
                col_indices.push(cp);
                values.push(a * m1.values[p]);
                p += 1;
            } else {
                col_indices.push(cq);
                values.push(b * m2.values[q]);
                q += 1;
            }
        }
        row_offsets.push(col_indices.len());
    }
    Ok(CsrMatrix {
        n_rows: m1.n_rows,
        n_cols: m1.n_cols,
        row_offsets,
        col_indices,
        values,
    })
}

/// `B · diag(dinv) · C`, the kernel behind every partial-Jacobi Schur approximation.
pub fn triple_product_diag(b: &CsrMatrix, dinv: &[f64], c: &CsrMatrix) -> Result<CsrMatrix> {
    check_len(
        "triple product (B columns vs diagonal)",
        b.n_cols,
        dinv.len(),
    )?;
    check_len("triple product (diagonal vs C rows)", dinv.len(), c.n_rows)?;
    if let Some((index, &value)) = dinv
        .iter()
        .enumerate()
        .find(|(_, v)| **v == 0.0 || !v.is_finite())
    {
        return Err(Error::SingularApproximation { index, value });
    }
    b.matmul(&c.scale_rows(dinv)?)
}

pub fn spmv(m: &CsrMatrix, x: &[f64]) -> Result<DenseVector> {
    m.spmv(x)
}

pub fn extract_diagonal(m: &CsrMatrix) -> Result<DenseVector> {
    m.extract_diagonal()
}
