//! Multi-modal graph aggregation: per-modality representations, weighted
//! fusion, residual-normalized propagation, and score prediction.

use crate::error::{Error, Result};
use crate::graph::{stack_blocks, GeneratedGraph, InteractionGraph, StackedOperator};
use crate::modality::NORM_EPS;
use crate::numerics::dense::DenseMatrix;
use crate::numerics::scalar::Scalar;

/// Per-modality aggregated representation over the observed and generated
/// graphs. User block: `norm*E_mod + norm*(norm^T*E_u) + gen*E_mod`;
/// item block: `norm^T*E_u + norm^T*(norm*E_i) + gen^T*E_u`.
pub fn modal_representation<S: Scalar>(
    obs: &InteractionGraph<S>,
    gen: &GeneratedGraph<S>,
    user_emb: &DenseMatrix<S>,
    item_emb: &DenseMatrix<S>,
    aligned_items: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    let mut users = obs.norm().spmm(aligned_items)?;
    users.add_assign(&obs.norm().spmm(&obs.norm_t().spmm(user_emb)?)?)?;
    users.add_assign(&gen.norm().spmm(aligned_items)?)?;

    let mut items = obs.norm_t().spmm(user_emb)?;
    items.add_assign(&obs.norm_t().spmm(&obs.norm().spmm(item_emb)?)?)?;
    items.add_assign(&gen.norm_t().spmm(user_emb)?)?;

    stack_blocks(&users, &items)
}

/// Gradients of [`modal_representation`] with respect to the three
/// embedding inputs.
pub fn modal_representation_backward<S: Scalar>(
    obs: &InteractionGraph<S>,
    gen: &GeneratedGraph<S>,
    grad: &DenseMatrix<S>,
) -> Result<(DenseMatrix<S>, DenseMatrix<S>, DenseMatrix<S>)> {
    let n_users = obs.n_users();
    let grad_users = grad.slice_rows(0, n_users);
    let grad_items = grad.slice_rows(n_users, obs.n_items());

    // user block terms
    let mut grad_aligned = obs.norm_t().spmm(&grad_users)?;
    let mut grad_user_emb = obs.norm().spmm(&obs.norm_t().spmm(&grad_users)?)?;
    grad_aligned.add_assign(&gen.norm_t().spmm(&grad_users)?)?;

    // item block terms
    grad_user_emb.add_assign(&obs.norm().spmm(&grad_items)?)?;
    let grad_item_emb = obs.norm_t().spmm(&obs.norm().spmm(&grad_items)?)?;
    grad_user_emb.add_assign(&gen.norm().spmm(&grad_items)?)?;

    Ok((grad_user_emb, grad_item_emb, grad_aligned))
}

/// Learnable per-modality weights, either one scalar per modality or one
/// vector of the embedding width per modality (rows of `kappa`).
pub fn fuse_modalities<S: Scalar>(
    reps: &[DenseMatrix<S>],
    kappa: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    if reps.is_empty() {
        return Err(Error::Config("fusion requires at least one modality".into()));
    }
    if kappa.rows() != reps.len() {
        return Err(Error::Config(format!(
            "kappa has {} rows for {} modalities",
            kappa.rows(),
            reps.len()
        )));
    }
    let shape = (reps[0].rows(), reps[0].cols());
    let mut out = DenseMatrix::zeros(shape.0, shape.1);
    for (m, rep) in reps.iter().enumerate() {
        if (rep.rows(), rep.cols()) != shape {
            return Err(Error::Config("modality representation shapes differ".into()));
        }
        match kappa.cols() {
            1 => out.axpy(kappa.get(m, 0), rep)?,
            c if c == rep.cols() => {
                for r in 0..rep.rows() {
                    let out_row = &mut out.data_mut()[r * shape.1..(r + 1) * shape.1];
                    for ((o, &v), &k) in out_row.iter_mut().zip(rep.row(r)).zip(kappa.row(m)) {
                        *o += k * v;
                    }
                }
            }
            c => {
                return Err(Error::Config(format!(
                    "kappa width {c} matches neither 1 nor embedding dim {}",
                    rep.cols()
                )))
            }
        }
    }
    Ok(out)
}

/// Gradients of [`fuse_modalities`] with respect to kappa and each
/// modality representation.
pub fn fuse_modalities_backward<S: Scalar>(
    reps: &[DenseMatrix<S>],
    kappa: &DenseMatrix<S>,
    grad_out: &DenseMatrix<S>,
) -> Result<(DenseMatrix<S>, Vec<DenseMatrix<S>>)> {
    let mut grad_kappa = DenseMatrix::zeros(kappa.rows(), kappa.cols());
    let mut grad_reps = Vec::with_capacity(reps.len());
    for (m, rep) in reps.iter().enumerate() {
        if kappa.cols() == 1 {
            grad_kappa.set(m, 0, rep.frob_dot(grad_out)?);
            grad_reps.push(grad_out.scaled(kappa.get(m, 0)));
        } else {
            let mut grad_rep = DenseMatrix::zeros(rep.rows(), rep.cols());
            for r in 0..rep.rows() {
                for c in 0..rep.cols() {
                    let g = grad_out.get(r, c);
                    grad_kappa.set(m, c, grad_kappa.get(m, c) + rep.get(r, c) * g);
                    grad_rep.set(r, c, kappa.get(m, c) * g);
                }
            }
            grad_reps.push(grad_rep);
        }
    }
    Ok((grad_kappa, grad_reps))
}

/// Forward cache of [`final_embeddings`].
pub struct FinalEmbeddingsCache<S: Scalar> {
    h0: DenseMatrix<S>,
    layers: usize,
    omega: S,
}

/// Sum-pooled propagation with a normalized residual:
/// `H_{l+1} = op(H_l)`, output `sum_{l=0..L} H_l + omega * rownorm(H_0)`.
pub fn final_embeddings<S: Scalar>(
    op: &StackedOperator<S>,
    h0: &DenseMatrix<S>,
    layers: usize,
    omega: S,
) -> Result<(DenseMatrix<S>, FinalEmbeddingsCache<S>)> {
    let mut total = h0.clone();
    let mut current = h0.clone();
    for _ in 0..layers {
        current = op.apply(&current)?;
        total.add_assign(&current)?;
    }
    if omega != S::zero() {
        total.axpy(omega, &h0.row_l2_normalize(S::from_f64(NORM_EPS)))?;
    }
    Ok((
        total,
        FinalEmbeddingsCache {
            h0: h0.clone(),
            layers,
            omega,
        },
    ))
}

/// Gradient of [`final_embeddings`] with respect to `H_0`.
pub fn final_embeddings_backward<S: Scalar>(
    op: &StackedOperator<S>,
    cache: &FinalEmbeddingsCache<S>,
    grad_out: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    // sum-pooled propagation: d H_0 = sum_{l=0..L} op^l (d out)
    let mut grad_h0 = grad_out.clone();
    for _ in 0..cache.layers {
        let mut next = op.apply(&grad_h0)?;
        next.add_assign(grad_out)?;
        grad_h0 = next;
    }
    if cache.omega != S::zero() {
        let grad_residual = cache
            .h0
            .row_l2_normalize_backward(&grad_out.scaled(cache.omega), S::from_f64(NORM_EPS))?;
        grad_h0.add_assign(&grad_residual)?;
    }
    Ok(grad_h0)
}

/// Inner-product scores for explicit (user, item) pairs against stacked
/// final embeddings.
pub fn score_pairs<S: Scalar>(
    hbar: &DenseMatrix<S>,
    n_users: usize,
    pairs: &[(usize, usize)],
) -> Vec<S> {
    pairs
        .iter()
        .map(|&(u, i)| {
            hbar.row(u)
                .iter()
                .zip(hbar.row(n_users + i))
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect()
}

/// Full user-by-item score matrix `H_user * H_item^T`.
pub fn predict_scores<S: Scalar>(
    hbar: &DenseMatrix<S>,
    n_users: usize,
    n_items: usize,
) -> Result<DenseMatrix<S>> {
    let users = hbar.slice_rows(0, n_users);
    let items = hbar.slice_rows(n_users, n_items);
    users.matmul_transpose_other(&items)
}
