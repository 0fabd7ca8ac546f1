//! CSR sparse matrices and the propagation primitive `A * X`.

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::scalar::Scalar;
use crate::numerics::threading;

/// Compressed sparse row matrix with non-negative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    /// Matrix with no stored entries.
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Build from (row, col, value) triplets. Entries are sorted per row;
    /// duplicate coordinates are rejected. Adjacency weights must be
    /// non-negative; use [`Self::from_triplets_signed`] for raw score storage.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, S)]) -> Result<Self> {
        for &(r, c, v) in triplets {
            if v < S::zero() {
                return Err(Error::Numeric(format!("negative sparse weight at ({r},{c})")));
            }
        }
        Self::from_triplets_signed(rows, cols, triplets)
    }

    /// Like [`Self::from_triplets`] but allows negative values.
    pub fn from_triplets_signed(rows: usize, cols: usize, triplets: &[(usize, usize, S)]) -> Result<Self> {
        let mut counts = vec![0usize; rows];
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Shape(format!(
                    "entry ({r},{c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite sparse value at ({r},{c})")));
            }
            counts[r] += 1;
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for r in 0..rows {
            row_ptr[r + 1] = row_ptr[r] + counts[r];
        }
        let nnz = row_ptr[rows];
        let mut col_idx = vec![0usize; nnz];
        let mut vals = vec![S::zero(); nnz];
        let mut cursor = row_ptr.clone();
        for &(r, c, v) in triplets {
            col_idx[cursor[r]] = c;
            vals[cursor[r]] = v;
            cursor[r] += 1;
        }
        for r in 0..rows {
            let span = row_ptr[r]..row_ptr[r + 1];
            let mut order: Vec<usize> = (span.clone()).collect();
            order.sort_by_key(|&i| col_idx[i]);
            let sorted_cols: Vec<usize> = order.iter().map(|&i| col_idx[i]).collect();
            let sorted_vals: Vec<S> = order.iter().map(|&i| vals[i]).collect();
            if sorted_cols.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Data(format!("duplicate sparse entry in row {r}")));
            }
            col_idx[span.clone()].copy_from_slice(&sorted_cols);
            vals[span].copy_from_slice(&sorted_vals);
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_entries(&self, r: usize) -> (&[usize], &[S]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row_entries(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Sparse-dense product `self * x`; rows without entries yield zero rows.
    pub fn spmm(&self, x: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        if self.cols != x.rows() {
            return Err(Error::Shape(format!(
                "spmm: {}x{} * {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        let n = x.cols();
        let (row_ptr, col_idx, vals) = (&self.row_ptr, &self.col_idx, &self.vals);
        threading::for_each_row(out.data_mut(), n, |r, out_row| {
            for e in row_ptr[r]..row_ptr[r + 1] {
                let w = vals[e];
                let x_row = x.row(col_idx[e]);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += w * xv;
                }
            }
        });
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<(usize, usize, S)> =
            self.iter_entries().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets_signed(self.cols, self.rows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn to_dense(&self) -> DenseMatrix<S> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter_entries() {
            out.set(r, c, v);
        }
        out
    }
}
