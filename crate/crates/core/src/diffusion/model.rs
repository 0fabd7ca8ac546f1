//! Per-modality denoiser: a one-hidden-layer MLP over the corrupted
//! interaction row concatenated with a sinusoidal step embedding.

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::params::ParamStore;
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;

/// Sinusoidal embedding of step `t` at dimension `dim`:
/// pairs `(sin, cos)` of `t / 10000^(2i/dim)`.
pub fn step_embedding<S: Scalar>(t: usize, dim: usize) -> Vec<S> {
    let mut out = vec![S::zero(); dim];
    let mut i = 0;
    while i < dim {
        let freq = 1.0 / 10000f64.powf(i as f64 / dim as f64);
        let angle = t as f64 * freq;
        out[i] = S::from_f64(angle.sin());
        if i + 1 < dim {
            out[i + 1] = S::from_f64(angle.cos());
        }
        i += 2;
    }
    out
}

/// Shape and parameter naming of one modality's denoiser. Weights live in a
/// [`ParamStore`] under `denoise.<modality>.{w1,b1,w2,b2}`.
#[derive(Clone, Debug)]
pub struct DenoiserModel {
    prefix: String,
    n_items: usize,
    step_dim: usize,
    hidden_dim: usize,
}

/// Forward-pass intermediates kept for the backward pass.
pub struct DenoiserCache<S: Scalar> {
    input: DenseMatrix<S>,  // B x (I + step_dim)
    hidden: DenseMatrix<S>, // B x hidden_dim, post-tanh
}

impl DenoiserModel {
    pub fn new(modality: &str, n_items: usize, step_dim: usize, hidden_dim: usize) -> Self {
        Self {
            prefix: format!("denoise.{modality}"),
            n_items,
            step_dim,
            hidden_dim,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn param_names(&self) -> [String; 4] {
        [
            format!("{}.w1", self.prefix),
            format!("{}.b1", self.prefix),
            format!("{}.w2", self.prefix),
            format!("{}.b2", self.prefix),
        ]
    }

    /// Register Xavier-initialized weights and zero biases.
    pub fn init_params<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut SeededRng) -> Result<()> {
        let [w1, b1, w2, b2] = self.param_names();
        let in_dim = self.n_items + self.step_dim;
        store.register_xavier(&w1, in_dim, self.hidden_dim, rng)?;
        store.register(&b1, DenseMatrix::zeros(1, self.hidden_dim))?;
        store.register_xavier(&w2, self.hidden_dim, self.n_items, rng)?;
        store.register(&b2, DenseMatrix::zeros(1, self.n_items))?;
        Ok(())
    }

    /// Predict clean interaction rows from corrupted rows and per-row steps.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        alpha_t: &DenseMatrix<S>,
        steps: &[usize],
    ) -> Result<(DenseMatrix<S>, DenoiserCache<S>)> {
        if alpha_t.cols() != self.n_items {
            return Err(Error::Shape(format!(
                "denoiser expects {} items, got {}",
                self.n_items,
                alpha_t.cols()
            )));
        }
        if alpha_t.rows() != steps.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} step labels",
                alpha_t.rows(),
                steps.len()
            )));
        }
        let [w1n, b1n, w2n, b2n] = self.param_names();
        let w1 = store.get(&w1n)?;
        let b1 = store.get(&b1n)?;
        let w2 = store.get(&w2n)?;
        let b2 = store.get(&b2n)?;

        let batch = alpha_t.rows();
        let in_dim = self.n_items + self.step_dim;
        let mut input = DenseMatrix::zeros(batch, in_dim);
        for r in 0..batch {
            let row = input.row_mut(r);
            row[..self.n_items].copy_from_slice(alpha_t.row(r));
            row[self.n_items..].copy_from_slice(&step_embedding::<S>(steps[r], self.step_dim));
        }

        let mut hidden = input.matmul(w1)?;
        for r in 0..batch {
            for (h, b) in hidden.row_mut(r).iter_mut().zip(b1.row(0)) {
                *h = (*h + *b).tanh();
            }
        }
        let mut out = hidden.matmul(w2)?;
        for r in 0..batch {
            for (o, b) in out.row_mut(r).iter_mut().zip(b2.row(0)) {
                *o += *b;
            }
        }
        Ok((out, DenoiserCache { input, hidden }))
    }

    /// Accumulate parameter gradients given the upstream gradient of the
    /// prediction. The gradient with respect to the input is not needed
    /// anywhere (the corrupted rows are data), so it is not computed.
    pub fn backward<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        cache: &DenoiserCache<S>,
        grad_out: &DenseMatrix<S>,
    ) -> Result<()> {
        let [w1n, b1n, w2n, b2n] = self.param_names();
        let w2 = store.get(&w2n)?.clone();

        let grad_w2 = cache.hidden.matmul_transpose_self(grad_out)?;
        let grad_b2 = grad_out.col_sums();
        let grad_hidden = grad_out.matmul_transpose_other(&w2)?;

        // through tanh: dpre = dh * (1 - h^2)
        let mut grad_pre = grad_hidden;
        for (g, h) in grad_pre.data_mut().iter_mut().zip(cache.hidden.data()) {
            *g *= S::one() - *h * *h;
        }
        let grad_w1 = cache.input.matmul_transpose_self(&grad_pre)?;
        let grad_b1 = grad_pre.col_sums();

        store.accumulate_grad(&w1n, S::one(), &grad_w1)?;
        store.accumulate_grad(&b1n, S::one(), &grad_b1)?;
        store.accumulate_grad(&w2n, S::one(), &grad_w2)?;
        store.accumulate_grad(&b2n, S::one(), &grad_b2)?;
        Ok(())
    }
}
