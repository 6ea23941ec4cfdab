use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Immutable compressed-sparse-row matrix.
///
/// Construction validates that indices are in range, that no `(row, col)`
/// pair repeats and that every weight is finite. Within a row, column
/// indices are strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, w) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Construction(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !w.is_finite() {
                return Err(Error::Construction(format!(
                    "non-finite weight at ({r}, {c})"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::Construction(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut indptr = vec![0usize; rows + 1];
        for &(r, _, _) in &entries {
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from triplets that may repeat; repeated coordinates are summed
    /// in input order.
    pub fn from_triplets_summed(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        // stable sort keeps the accumulation order deterministic
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += w,
                _ => merged.push((r, c, w)),
            }
        }
        Self::from_triplets(rows, cols, merged)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), entries).expect("dense source is well formed")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column indices and weights of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    /// All entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, w)| (r, c, w)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> Self {
        let entries = self.iter().map(|(r, c, w)| (c, r, w)).collect();
        Self::from_triplets(self.cols, self.rows, entries).expect("transpose of a valid matrix")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, w) in self.iter() {
            out.set(r, c, w);
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, w)| w).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for (_, c, w) in self.iter() {
            sums[c] += w;
        }
        sums
    }

    /// Applies `f(row, col, weight)` to every stored entry, dropping the
    /// entries for which it returns zero.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let entries = self
            .iter()
            .map(|(r, c, w)| (r, c, f(r, c, w)))
            .filter(|e| e.2 != 0.0)
            .collect();
        Self::from_triplets(self.rows, self.cols, entries).expect("mapped matrix is well formed")
    }

    pub fn without_diagonal(&self) -> Self {
        self.map_entries(|r, c, w| if r == c { 0.0 } else { w })
    }

    /// Exact sparse-dense product `self · x`.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != x.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    x.rows(),
                    x.cols()
                ),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for (c, w) in self.row(r) {
                for (d, &v) in dst.iter_mut().zip(x.row(c)) {
                    *d += w * v;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`, used by the backward pass of [`spmm`](Self::spmm).
    pub fn t_spmm(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != g.rows() {
            return Err(Error::shape("t_spmm", "row count mismatch"));
        }
        let mut out = DenseMatrix::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            let src = g.row(r);
            for (c, w) in self.row(r) {
                for (d, &v) in out.row_mut(c).iter_mut().zip(src) {
                    *d += w * v;
                }
            }
        }
        Ok(out)
    }
}
