//! Raw modality feature alignment and modality-aware contrastive views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{stack_blocks, GeneratedGraph, StackedOperator};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::params::ParamStore;
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;

/// Guard used by every row normalization in the model.
pub const NORM_EPS: f64 = 1e-12;

/// Raw per-item feature matrix for one modality.
#[derive(Clone, Debug)]
pub struct ModalityFeatures<S: Scalar> {
    pub name: String,
    pub raw: DenseMatrix<S>,
}

impl<S: Scalar> ModalityFeatures<S> {
    pub fn new(name: &str, raw: DenseMatrix<S>) -> Result<Self> {
        if !raw.is_finite() {
            return Err(Error::Numeric(format!("modality '{name}' has non-finite features")));
        }
        Ok(Self {
            name: name.to_string(),
            raw,
        })
    }

    pub fn dim(&self) -> usize {
        self.raw.cols()
    }
}

/// How raw features map into the shared embedding space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignerMode {
    /// Pure matrix multiply, bias-free.
    ParametricMatrix,
    /// Affine map with bias.
    Linear,
}

/// Maps raw `d_m`-dimensional features to row-normalized `d`-dimensional
/// embeddings. Weights live in a [`ParamStore`] under
/// `align.<modality>.weight` (and `.bias` in linear mode).
#[derive(Clone, Debug)]
pub struct FeatureAligner {
    prefix: String,
    mode: AlignerMode,
    in_dim: usize,
    out_dim: usize,
}

/// Pre-normalization activations kept for the backward pass.
pub struct AlignerCache<S: Scalar> {
    pre_norm: DenseMatrix<S>,
}

impl FeatureAligner {
    pub fn new(modality: &str, mode: AlignerMode, in_dim: usize, out_dim: usize) -> Self {
        Self {
            prefix: format!("align.{modality}"),
            mode,
            in_dim,
            out_dim,
        }
    }

    pub fn mode(&self) -> AlignerMode {
        self.mode
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec![format!("{}.weight", self.prefix)];
        if self.mode == AlignerMode::Linear {
            names.push(format!("{}.bias", self.prefix));
        }
        names
    }

    pub fn init_params<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut SeededRng) -> Result<()> {
        store.register_xavier(&format!("{}.weight", self.prefix), self.in_dim, self.out_dim, rng)?;
        if self.mode == AlignerMode::Linear {
            store.register(&format!("{}.bias", self.prefix), DenseMatrix::zeros(1, self.out_dim))?;
        }
        Ok(())
    }

    /// `E = rownorm(raw * W (+ bias))`
    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        raw: &DenseMatrix<S>,
    ) -> Result<(DenseMatrix<S>, AlignerCache<S>)> {
        if raw.cols() != self.in_dim {
            return Err(Error::Shape(format!(
                "aligner expects {} feature dims, got {}",
                self.in_dim,
                raw.cols()
            )));
        }
        let weight = store.get(&format!("{}.weight", self.prefix))?;
        let mut pre_norm = raw.matmul(weight)?;
        if self.mode == AlignerMode::Linear {
            let bias = store.get(&format!("{}.bias", self.prefix))?;
            for r in 0..pre_norm.rows() {
                for (v, b) in pre_norm.row_mut(r).iter_mut().zip(bias.row(0)) {
                    *v += *b;
                }
            }
        }
        let aligned = pre_norm.row_l2_normalize(S::from_f64(NORM_EPS));
        Ok((aligned, AlignerCache { pre_norm }))
    }

    /// Accumulate weight (and bias) gradients from the gradient of the
    /// aligned output.
    pub fn backward<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        raw: &DenseMatrix<S>,
        cache: &AlignerCache<S>,
        grad_aligned: &DenseMatrix<S>,
    ) -> Result<()> {
        let grad_pre = cache
            .pre_norm
            .row_l2_normalize_backward(grad_aligned, S::from_f64(NORM_EPS))?;
        let grad_weight = raw.matmul_transpose_self(&grad_pre)?;
        store.accumulate_grad(&format!("{}.weight", self.prefix), S::one(), &grad_weight)?;
        if self.mode == AlignerMode::Linear {
            let grad_bias = grad_pre.col_sums();
            store.accumulate_grad(&format!("{}.bias", self.prefix), S::one(), &grad_bias)?;
        }
        Ok(())
    }
}

/// Base contrastive view from the generated modality graph: the user block
/// aggregates aligned item features, the item block aggregates user
/// id-embeddings.
pub fn modality_view_base<S: Scalar>(
    gen: &GeneratedGraph<S>,
    user_emb: &DenseMatrix<S>,
    aligned_items: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    let users = gen.norm().spmm(aligned_items)?;
    let items = gen.norm_t().spmm(user_emb)?;
    stack_blocks(&users, &items)
}

/// Backward of [`modality_view_base`]: split the stacked gradient and push
/// each block through the transposed operator.
pub fn modality_view_base_backward<S: Scalar>(
    gen: &GeneratedGraph<S>,
    grad_view: &DenseMatrix<S>,
) -> Result<(DenseMatrix<S>, DenseMatrix<S>)> {
    let n_users = gen.n_users();
    let grad_users = grad_view.slice_rows(0, n_users);
    let grad_items = grad_view.slice_rows(n_users, gen.n_items());
    let grad_user_emb = gen.norm().spmm(&grad_items)?;
    let grad_aligned = gen.norm_t().spmm(&grad_users)?;
    Ok((grad_user_emb, grad_aligned))
}

/// Sum-pooled high-order propagation on the observed graph:
/// `Z_{l+1} = op(Z_l)`, output `sum_{l=0..L} Z_l`.
pub fn modality_view_highorder<S: Scalar>(
    op: &StackedOperator<S>,
    z0: &DenseMatrix<S>,
    layers: usize,
) -> Result<DenseMatrix<S>> {
    let mut total = z0.clone();
    let mut current = z0.clone();
    for _ in 0..layers {
        current = op.apply(&current)?;
        total.add_assign(&current)?;
    }
    Ok(total)
}

/// Backward of [`modality_view_highorder`]: the operator is symmetric, so
/// `d z0 = sum_{l=0..L} op^l (d out)`.
pub fn modality_view_highorder_backward<S: Scalar>(
    op: &StackedOperator<S>,
    grad_out: &DenseMatrix<S>,
    layers: usize,
) -> Result<DenseMatrix<S>> {
    let mut acc = grad_out.clone();
    for _ in 0..layers {
        let mut next = op.apply(&acc)?;
        next.add_assign(grad_out)?;
        acc = next;
    }
    Ok(acc)
}
