//! Modality-aware graph diffusion: forward corruption, denoiser training
//! losses, deterministic inference, and top-k graph rebuild.

pub mod model;
pub mod schedule;

pub use model::{step_embedding, DenoiserCache, DenoiserModel};
pub use schedule::NoiseSchedule;

use crate::error::{Error, Result};
use crate::graph::GeneratedGraph;
use crate::modality::FeatureAligner;
use crate::numerics::dense::DenseMatrix;
use crate::numerics::params::ParamStore;
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;

/// One training batch of user interaction rows with sampled steps, noise,
/// and the corrupted rows.
#[derive(Clone, Debug)]
pub struct DiffusionBatch<S: Scalar> {
    pub users: Vec<usize>,
    pub alpha0: DenseMatrix<S>,
    pub steps: Vec<usize>,
    pub alpha_t: DenseMatrix<S>,
}

impl<S: Scalar> DiffusionBatch<S> {
    /// Sample `t ~ U{1..T}` and Gaussian noise per row, then corrupt.
    pub fn sample(
        sched: &NoiseSchedule<S>,
        users: Vec<usize>,
        alpha0: DenseMatrix<S>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let batch = alpha0.rows();
        let steps: Vec<usize> = (0..batch).map(|_| rng.uniform_usize(sched.steps()) + 1).collect();
        let noise = rng.gaussian_matrix::<S>(batch, alpha0.cols());
        let alpha_t = q_sample(sched, &alpha0, &steps, &noise)?;
        Ok(Self {
            users,
            alpha0,
            steps,
            alpha_t,
        })
    }
}

/// Forward corruption `alpha_t = sqrt(gamma_bar_t) * alpha_0 + sqrt(1 - gamma_bar_t) * eps`
/// with a per-row step.
pub fn q_sample<S: Scalar>(
    sched: &NoiseSchedule<S>,
    alpha0: &DenseMatrix<S>,
    steps: &[usize],
    noise: &DenseMatrix<S>,
) -> Result<DenseMatrix<S>> {
    if !alpha0.same_shape(noise) {
        return Err(Error::Shape("q_sample: alpha0 and noise shapes differ".into()));
    }
    if steps.len() != alpha0.rows() {
        return Err(Error::Shape("q_sample: one step per row required".into()));
    }
    for &t in steps {
        if t == 0 || t > sched.steps() {
            return Err(Error::Config(format!("q_sample step {t} outside 1..={}", sched.steps())));
        }
    }
    let mut out = alpha0.clone();
    for r in 0..out.rows() {
        let gb = sched.gamma_bar(steps[r]);
        let signal = gb.sqrt();
        let sigma = (S::one() - gb).sqrt();
        for (o, e) in out.row_mut(r).iter_mut().zip(noise.row(r)) {
            *o = signal * *o + sigma * *e;
        }
    }
    Ok(out)
}

/// Mean and variance of the reverse posterior `q(alpha_{t-1} | alpha_t, alpha_0)`.
pub fn posterior_mean_var<S: Scalar>(
    sched: &NoiseSchedule<S>,
    alpha_t: &DenseMatrix<S>,
    alpha0: &DenseMatrix<S>,
    t: usize,
) -> Result<(DenseMatrix<S>, S)> {
    if !alpha_t.same_shape(alpha0) {
        return Err(Error::Shape("posterior: alpha_t and alpha_0 shapes differ".into()));
    }
    let (coef_t, coef_0, var) = sched.posterior_coefficients(t)?;
    let mut mean = DenseMatrix::zeros(alpha_t.rows(), alpha_t.cols());
    for ((m, &at), &a0) in mean.data_mut().iter_mut().zip(alpha_t.data()).zip(alpha0.data()) {
        *m = coef_t * at + coef_0 * a0;
    }
    Ok((mean, var))
}

/// Mean squared reconstruction loss over the batch, optionally reweighted by
/// the per-step SNR difference. Returns the loss and its gradient with
/// respect to the prediction.
pub fn elbo_loss<S: Scalar>(
    sched: &NoiseSchedule<S>,
    pred: &DenseMatrix<S>,
    alpha0: &DenseMatrix<S>,
    steps: &[usize],
    snr_weighted: bool,
) -> Result<(S, DenseMatrix<S>)> {
    if !pred.same_shape(alpha0) {
        return Err(Error::Shape("elbo: prediction and target shapes differ".into()));
    }
    let batch = S::from_usize(pred.rows().max(1));
    let mut loss = S::zero();
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    let two = S::from_f64(2.0);
    for r in 0..pred.rows() {
        let w = if snr_weighted { sched.snr_weight(steps[r])? } else { S::one() };
        let mut row_sq = S::zero();
        for ((g, &p), &a) in grad.row_mut(r).iter_mut().zip(pred.row(r)).zip(alpha0.row(r)) {
            let d = p - a;
            row_sq += d * d;
            *g = two * w * d / batch;
        }
        loss += w * row_sq / batch;
    }
    Ok((loss, grad))
}

/// Gradients of the modality-signal loss with respect to its differentiable
/// inputs.
pub struct MsiGrads<S: Scalar> {
    /// d loss / d predicted interaction rows (B x I)
    pub pred: DenseMatrix<S>,
    /// d loss / d aligned modality embeddings (I x d)
    pub modality_emb: DenseMatrix<S>,
    /// d loss / d item id-embeddings (I x d); applied only when the
    /// stop-gradient default is disabled
    pub item_emb: DenseMatrix<S>,
}

/// Modality-signal loss: mean over the batch of
/// `|| pred * E_mod - alpha_0 * E_id ||^2`, each term a length-d aggregated
/// embedding per user.
pub fn msi_loss<S: Scalar>(
    pred: &DenseMatrix<S>,
    alpha0: &DenseMatrix<S>,
    modality_emb: &DenseMatrix<S>,
    item_emb: &DenseMatrix<S>,
) -> Result<(S, MsiGrads<S>)> {
    if !pred.same_shape(alpha0) {
        return Err(Error::Shape("msi: prediction and target shapes differ".into()));
    }
    if modality_emb.rows() != pred.cols() || item_emb.rows() != pred.cols() {
        return Err(Error::Shape(format!(
            "msi: embeddings must have {} rows",
            pred.cols()
        )));
    }
    if modality_emb.cols() != item_emb.cols() {
        return Err(Error::Shape("msi: embedding dims differ".into()));
    }
    let batch = S::from_usize(pred.rows().max(1));
    let agg_pred = pred.matmul(modality_emb)?; // B x d
    let agg_obs = alpha0.matmul(item_emb)?; // B x d
    let diff = agg_pred.sub(&agg_obs)?;
    let loss = diff.squared_norm() / batch;

    let scaled = diff.scaled(S::from_f64(2.0) / batch); // B x d
    let grad_pred = scaled.matmul_transpose_other(modality_emb)?; // B x I
    let grad_mod = pred.matmul_transpose_self(&scaled)?; // I x d
    let mut grad_item = alpha0.matmul_transpose_self(&scaled)?; // I x d
    grad_item.scale(-S::one());
    Ok((
        loss,
        MsiGrads {
            pred: grad_pred,
            modality_emb: grad_mod,
            item_emb: grad_item,
        },
    ))
}

/// Knobs of one diffusion optimization step.
pub struct DiffusionStepConfig {
    pub lambda0: f64,
    pub snr_weighted: bool,
    /// Let the modality-signal loss update the item id-embeddings too
    /// (default off: they are treated as constants in this phase).
    pub msi_item_grad: bool,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

/// One optimization step of `L_elbo + lambda0 * L_msi` through the denoiser
/// and the modality aligner. Returns both loss values.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_train_step<S: Scalar>(
    model: &DenoiserModel,
    aligner: &FeatureAligner,
    sched: &NoiseSchedule<S>,
    batch: &DiffusionBatch<S>,
    raw_features: &DenseMatrix<S>,
    store: &mut ParamStore<S>,
    cfg: &DiffusionStepConfig,
) -> Result<(S, S)> {
    store.zero_grads();
    let (pred, denoise_cache) = model.forward(store, &batch.alpha_t, &batch.steps)?;
    let (l_elbo, mut grad_pred) = elbo_loss(sched, &pred, &batch.alpha0, &batch.steps, cfg.snr_weighted)?;

    let (aligned, align_cache) = aligner.forward(store, raw_features)?;
    let item_emb = store.get("item_emb")?.clone();
    let (l_msi, msi_grads) = msi_loss(&pred, &batch.alpha0, &aligned, &item_emb)?;

    let lambda0 = S::from_f64(cfg.lambda0);
    let mut param_names: Vec<String> = model.param_names().to_vec();
    param_names.extend(aligner.param_names());
    if cfg.lambda0 != 0.0 {
        grad_pred.axpy(lambda0, &msi_grads.pred)?;
        aligner.backward(store, raw_features, &align_cache, &msi_grads.modality_emb.scaled(lambda0))?;
        if cfg.msi_item_grad {
            store.accumulate_grad("item_emb", lambda0, &msi_grads.item_emb)?;
            param_names.push("item_emb".to_string());
        }
    } else {
        // keep the aligner in the optimizer step with zero gradients so the
        // lambda0 = 0 run is the exact pure-reconstruction ablation
        for name in aligner.param_names() {
            store.grad_mut(&name)?;
        }
    }
    model.backward(store, &denoise_cache, &grad_pred)?;

    let refs: Vec<&str> = param_names.iter().map(String::as_str).collect();
    store.adam_step_names(&refs, cfg.lr, cfg.betas, cfg.eps)?;
    if !l_elbo.is_finite() || !l_msi.is_finite() {
        return Err(Error::Numeric("diffusion loss diverged".into()));
    }
    Ok((l_elbo, l_msi))
}

/// Anything that can predict clean rows from corrupted rows; implemented by
/// the trained denoiser and by test oracles.
pub trait DenoiseFn<S: Scalar> {
    fn predict(&self, alpha_t: &DenseMatrix<S>, steps: &[usize]) -> Result<DenseMatrix<S>>;
}

/// A denoiser model bound to the store holding its weights.
pub struct BoundDenoiser<'a, S: Scalar> {
    pub model: &'a DenoiserModel,
    pub store: &'a ParamStore<S>,
}

impl<S: Scalar> DenoiseFn<S> for BoundDenoiser<'_, S> {
    fn predict(&self, alpha_t: &DenseMatrix<S>, steps: &[usize]) -> Result<DenseMatrix<S>> {
        self.model.forward(self.store, alpha_t, steps).map(|(out, _)| out)
    }
}

/// Deterministic inference: corrupt the rows with one jump to step
/// `t_prime` (0 means no corruption), then run the full reverse chain using
/// the posterior mean only.
pub fn infer_interactions<S: Scalar>(
    denoise: &dyn DenoiseFn<S>,
    sched: &NoiseSchedule<S>,
    alpha0: &DenseMatrix<S>,
    t_prime: usize,
    rng: &mut SeededRng,
) -> Result<DenseMatrix<S>> {
    if t_prime > sched.steps() {
        return Err(Error::Config(format!(
            "inference corruption step {t_prime} exceeds T = {}",
            sched.steps()
        )));
    }
    let batch = alpha0.rows();
    let mut current = if t_prime == 0 {
        alpha0.clone()
    } else {
        let noise = rng.gaussian_matrix::<S>(batch, alpha0.cols());
        q_sample(sched, alpha0, &vec![t_prime; batch], &noise)?
    };
    for t in (1..=sched.steps()).rev() {
        let pred = denoise.predict(&current, &vec![t; batch])?;
        let (coef_t, coef_0, _) = sched.posterior_coefficients(t)?;
        for (c, &p) in current.data_mut().iter_mut().zip(pred.data()) {
            *c = coef_t * *c + coef_0 * p;
        }
    }
    Ok(current)
}

/// Keep the `k` highest-scoring items per user (ties to the smaller item
/// index) and rebuild the degree-normalized modality graph.
pub fn rebuild_topk_graph<S: Scalar>(scores: &DenseMatrix<S>, k: usize) -> Result<GeneratedGraph<S>> {
    let n_items = scores.cols();
    if k == 0 || k > n_items {
        return Err(Error::Config(format!("top-k {k} outside 1..={n_items}")));
    }
    if !scores.is_finite() {
        return Err(Error::Numeric("top-k rebuild on non-finite scores".into()));
    }
    let mut selections = Vec::with_capacity(scores.rows());
    for u in 0..scores.rows() {
        let row = scores.row(u);
        let mut order: Vec<usize> = (0..n_items).collect();
        order.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).expect("finite scores").then(a.cmp(&b))
        });
        let sel: Vec<(usize, S)> = order[..k].iter().map(|&i| (i, row[i])).collect();
        selections.push(sel);
    }
    GeneratedGraph::from_selections(scores.rows(), n_items, k, &selections)
}
