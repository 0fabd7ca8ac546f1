//! Row-major dense matrices.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::threading;

/// Row-major dense matrix of real values.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "dense data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dense matrix contains non-finite values".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from nested row slices; rows must share one length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows in dense constructor".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{op}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: S, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * *b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&mut self, alpha: S) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: S) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// Element-wise dot product over the whole matrix.
    pub fn frob_dot(&self, other: &Self) -> Result<S> {
        self.check_same_shape(other, "frob_dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).sum())
    }

    pub fn squared_norm(&self) -> S {
        self.data.iter().map(|v| *v * *v).sum()
    }

    /// Column sums as a 1 x cols matrix.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (o, v) in out.data.iter_mut().zip(row) {
                *o += *v;
            }
        }
        out
    }

    /// `self * other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let (lhs, rhs, k, n) = (&self.data, &other.data, self.cols, other.cols);
        threading::for_each_row(&mut out.data, n, |r, out_row| {
            let a_row = &lhs[r * k..(r + 1) * k];
            for (j, &a) in a_row.iter().enumerate() {
                if a == S::zero() {
                    continue;
                }
                let b_row = &rhs[j * n..(j + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        });
        Ok(out)
    }

    /// `self^T * other`
    pub fn matmul_transpose_self(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "matmul_transpose_self: {}x{} ^T * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        // out[i][j] = sum_r self[r][i] * other[r][j]; accumulate row by row so
        // the summation order is independent of the worker count.
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == S::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`
    pub fn matmul_transpose_other(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul_transpose_other: {}x{} * {}x{} ^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        let (lhs, rhs, k, n) = (&self.data, &other.data, self.cols, other.rows);
        threading::for_each_row(&mut out.data, n, |r, out_row| {
            let a_row = &lhs[r * k..(r + 1) * k];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &rhs[j * k..(j + 1) * k];
                *o = a_row.iter().zip(b_row).map(|(&a, &b)| a * b).sum();
            }
        });
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Copy the row range `[start, start+len)` into a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Self {
        Self {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        }
    }

    /// Gather the listed rows into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (r, &src) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(src));
        }
        out
    }

    /// `self[dst[r]] += src[r]` for every gathered row.
    pub fn scatter_add_rows(&mut self, idx: &[usize], src: &Self) {
        for (r, &dst) in idx.iter().enumerate() {
            for (a, b) in self.row_mut(dst).iter_mut().zip(src.row(r)) {
                *a += *b;
            }
        }
    }

    /// Divide each row by `max(||row||_2, eps)`; zero rows stay zero.
    pub fn row_l2_normalize(&self, eps: S) -> Self {
        let mut out = self.clone();
        for r in 0..out.rows {
            let norm = row_norm(out.row(r));
            let denom = norm.max(eps);
            for v in out.row_mut(r) {
                *v /= denom;
            }
        }
        out
    }

    /// Backward pass of [`Self::row_l2_normalize`]: given the pre-normalization
    /// input `self` and upstream gradient `grad_out`, return the gradient
    /// with respect to the input.
    pub fn row_l2_normalize_backward(&self, grad_out: &Self, eps: S) -> Result<Self> {
        self.check_same_shape(grad_out, "row_l2_normalize_backward")?;
        let mut grad_in = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let x = self.row(r);
            let g = grad_out.row(r);
            let out_row = grad_in.row_mut(r);
            let norm = row_norm(x);
            if norm > eps {
                // y = x / ||x||, dx = (g - (y . g) y) / ||x||
                let inv = S::one() / norm;
                let y_dot_g: S = x.iter().zip(g).map(|(&xi, &gi)| xi * inv * gi).sum();
                for ((o, &xi), &gi) in out_row.iter_mut().zip(x).zip(g) {
                    *o = (gi - y_dot_g * xi * inv) * inv;
                }
            } else {
                // y = x / eps is linear below the guard
                for (o, &gi) in out_row.iter_mut().zip(g) {
                    *o = gi / eps;
                }
            }
        }
        Ok(grad_in)
    }
}

fn row_norm<S: Scalar>(row: &[S]) -> S {
    row.iter().map(|v| *v * *v).sum::<S>().sqrt()
}

/// Cosine similarity with a zero-norm guard: either row below `eps` yields 0.
pub fn cosine<S: Scalar>(a: &[S], b: &[S], eps: S) -> S {
    let na = row_norm(a);
    let nb = row_norm(b);
    if na <= eps || nb <= eps {
        return S::zero();
    }
    let dot: S = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    dot / (na * nb)
}
