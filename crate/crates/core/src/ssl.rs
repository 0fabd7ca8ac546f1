//! Cross-modal contrastive losses under both anchor paradigms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dense::{cosine, DenseMatrix};
use crate::numerics::scalar::Scalar;

/// Which embedding table anchors the contrastive pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Contrast every ordered pair of modality views.
    ModalityView,
    /// Contrast the main-task embeddings against each modality view.
    MainView,
}

/// Which rows serve as negatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScope {
    /// The batch rows themselves.
    InBatch,
    /// Every row of the candidate table.
    Full,
}

/// Contrastive loss configuration.
#[derive(Clone, Debug)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub anchor_mode: AnchorMode,
    pub negative_scope: NegativeScope,
}

const GUARD: f64 = 1e-12;

/// InfoNCE over cosine similarities: mean over anchors of
/// `-log( exp(cos(a_r, c_{pos_idx[r]}) / tau) / sum_v exp(cos(a_r, c_v) / tau) )`.
///
/// The candidate table supplies both the positives (row `pos_idx[r]` for
/// anchor `r`) and the negatives (all rows). Returns the loss plus gradients
/// for the anchor and candidate tables.
pub fn infonce<S: Scalar>(
    anchors: &DenseMatrix<S>,
    candidates: &DenseMatrix<S>,
    pos_idx: &[usize],
    temperature: f64,
) -> Result<(S, DenseMatrix<S>, DenseMatrix<S>)> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if anchors.cols() != candidates.cols() {
        return Err(Error::Shape("infonce: embedding widths differ".into()));
    }
    if pos_idx.len() != anchors.rows() {
        return Err(Error::Shape("infonce: one positive index per anchor required".into()));
    }
    if pos_idx.iter().any(|&p| p >= candidates.rows()) {
        return Err(Error::Shape("infonce: positive index out of range".into()));
    }
    let n_anchors = anchors.rows();
    let n_cands = candidates.rows();
    let tau = S::from_f64(temperature);
    let eps = S::from_f64(GUARD);
    let inv_n = S::one() / S::from_usize(n_anchors.max(1));

    let mut loss = S::zero();
    let mut grad_anchors = DenseMatrix::zeros(n_anchors, anchors.cols());
    let mut grad_cands = DenseMatrix::zeros(n_cands, candidates.cols());

    for r in 0..n_anchors {
        let a = anchors.row(r);
        // scaled similarities with a stable log-sum-exp
        let sims: Vec<S> = (0..n_cands).map(|v| cosine(a, candidates.row(v), eps) / tau).collect();
        let max_sim = sims.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut denom = S::zero();
        for &s in &sims {
            denom += (s - max_sim).exp();
        }
        let log_denom = denom.ln() + max_sim;
        loss += (log_denom - sims[pos_idx[r]]) * inv_n;

        // d loss / d sim_v = (softmax_v - [v == pos]) / (n * tau)
        for v in 0..n_cands {
            let p = (sims[v] - log_denom).exp();
            let mut coeff = p * inv_n / tau;
            if v == pos_idx[r] {
                coeff -= inv_n / tau;
            }
            if coeff == S::zero() {
                continue;
            }
            accumulate_cosine_grad(a, candidates.row(v), eps, coeff, grad_anchors.row_mut(r), grad_cands.row_mut(v));
        }
    }
    Ok((loss, grad_anchors, grad_cands))
}

/// Add `coeff * d cos(a, b)` into the gradient rows of both sides.
fn accumulate_cosine_grad<S: Scalar>(
    a: &[S],
    b: &[S],
    eps: S,
    coeff: S,
    grad_a: &mut [S],
    grad_b: &mut [S],
) {
    let na = a.iter().map(|v| *v * *v).sum::<S>().sqrt();
    let nb = b.iter().map(|v| *v * *v).sum::<S>().sqrt();
    if na <= eps || nb <= eps {
        return; // guarded similarity is the constant 0
    }
    let dot: S = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let inv = S::one() / (na * nb);
    let cos = dot * inv;
    for ((ga, &ai), &bi) in grad_a.iter_mut().zip(a).zip(b) {
        *ga += coeff * (bi * inv - cos * ai / (na * na));
    }
    for ((gb, &bi), &ai) in grad_b.iter_mut().zip(b).zip(a) {
        *gb += coeff * (ai * inv - cos * bi / (nb * nb));
    }
}

/// One side (user or item block) of the cross-modal loss: anchor rows are
/// gathered by `anchor_rows` from the anchor table, candidates by
/// `candidate_rows` from the candidate table, positives pair up by position.
pub struct ContrastiveSide<'a, S: Scalar> {
    pub anchor_table: &'a DenseMatrix<S>,
    pub candidate_table: &'a DenseMatrix<S>,
    pub anchor_rows: &'a [usize],
    pub candidate_rows: &'a [usize],
    pub pos_idx: &'a [usize],
}

/// Evaluate one gathered InfoNCE term and scatter its gradients back into
/// full-table gradient buffers.
pub fn infonce_gathered<S: Scalar>(
    side: &ContrastiveSide<'_, S>,
    temperature: f64,
    grad_anchor_table: &mut DenseMatrix<S>,
    grad_candidate_table: &mut DenseMatrix<S>,
) -> Result<S> {
    let anchors = side.anchor_table.gather_rows(side.anchor_rows);
    let candidates = side.candidate_table.gather_rows(side.candidate_rows);
    let (loss, grad_a, grad_c) = infonce(&anchors, &candidates, side.pos_idx, temperature)?;
    grad_anchor_table.scatter_add_rows(side.anchor_rows, &grad_a);
    grad_candidate_table.scatter_add_rows(side.candidate_rows, &grad_c);
    Ok(loss)
}

/// Gradients of the full cross-modal loss with respect to the stacked view
/// tables and the main-task embeddings.
pub struct ClGrads<S: Scalar> {
    pub views: Vec<DenseMatrix<S>>,
    pub hbar: DenseMatrix<S>,
}

/// Cross-modal contrastive loss over the user and item blocks of the stacked
/// view embeddings.
///
/// * `ModalityView`: one InfoNCE term per ordered pair of distinct modality
///   views, per side.
/// * `MainView`: one term per modality with the main-task embeddings
///   anchoring, per side.
pub fn cl_loss<S: Scalar>(
    config: &ContrastiveConfig,
    views: &[DenseMatrix<S>],
    hbar: &DenseMatrix<S>,
    n_users: usize,
    batch_users: &[usize],
    batch_items: &[usize],
) -> Result<(S, ClGrads<S>)> {
    let n_items = hbar.rows() - n_users;
    for view in views {
        if view.rows() != hbar.rows() || view.cols() != hbar.cols() {
            return Err(Error::Shape("cl_loss: view and main embeddings disagree".into()));
        }
    }
    match config.anchor_mode {
        AnchorMode::ModalityView if views.len() < 2 => {
            return Err(Error::Config(
                "modality-view anchoring needs at least two modalities".into(),
            ))
        }
        AnchorMode::MainView if views.is_empty() => {
            return Err(Error::Config("main-view anchoring needs at least one modality".into()))
        }
        _ => {}
    }

    let user_anchor_rows: Vec<usize> = batch_users.to_vec();
    let item_anchor_rows: Vec<usize> = batch_items.iter().map(|&i| n_users + i).collect();
    let (user_cand_rows, user_pos): (Vec<usize>, Vec<usize>) = match config.negative_scope {
        NegativeScope::InBatch => (user_anchor_rows.clone(), (0..batch_users.len()).collect()),
        NegativeScope::Full => ((0..n_users).collect(), batch_users.to_vec()),
    };
    let (item_cand_rows, item_pos): (Vec<usize>, Vec<usize>) = match config.negative_scope {
        NegativeScope::InBatch => (item_anchor_rows.clone(), (0..batch_items.len()).collect()),
        NegativeScope::Full => (
            (n_users..n_users + n_items).collect(),
            batch_items.to_vec(),
        ),
    };

    let mut total = S::zero();
    let mut grads = ClGrads {
        views: views
            .iter()
            .map(|v| DenseMatrix::zeros(v.rows(), v.cols()))
            .collect(),
        hbar: DenseMatrix::zeros(hbar.rows(), hbar.cols()),
    };

    let run_side = |anchor_m: Option<usize>,
                        cand_m: usize,
                        anchor_rows: &[usize],
                        cand_rows: &[usize],
                        pos: &[usize],
                        grads: &mut ClGrads<S>|
     -> Result<S> {
        let anchor_table = match anchor_m {
            Some(m) => &views[m],
            None => hbar,
        };
        let side = ContrastiveSide {
            anchor_table,
            candidate_table: &views[cand_m],
            anchor_rows,
            candidate_rows: cand_rows,
            pos_idx: pos,
        };
        // anchor gradients go through a scratch buffer; anchor and candidate
        // gradient targets live in the same Vec
        let mut grad_anchor = DenseMatrix::zeros(anchor_table.rows(), anchor_table.cols());
        let loss = {
            let grad_cand = &mut grads.views[cand_m];
            infonce_gathered(&side, config.temperature, &mut grad_anchor, grad_cand)?
        };
        match anchor_m {
            Some(m) => grads.views[m].add_assign(&grad_anchor)?,
            None => grads.hbar.add_assign(&grad_anchor)?,
        }
        Ok(loss)
    };

    match config.anchor_mode {
        AnchorMode::ModalityView => {
            for m1 in 0..views.len() {
                for m2 in 0..views.len() {
                    if m1 == m2 {
                        continue;
                    }
                    total += run_side(Some(m1), m2, &user_anchor_rows, &user_cand_rows, &user_pos, &mut grads)?;
                    total += run_side(Some(m1), m2, &item_anchor_rows, &item_cand_rows, &item_pos, &mut grads)?;
                }
            }
        }
        AnchorMode::MainView => {
            for m in 0..views.len() {
                total += run_side(None, m, &user_anchor_rows, &user_cand_rows, &user_pos, &mut grads)?;
                total += run_side(None, m, &item_anchor_rows, &item_cand_rows, &item_pos, &mut grads)?;
            }
        }
    }
    Ok((total, grads))
}
