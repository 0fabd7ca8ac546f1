//! Joint training: per-modality diffusion phases, periodic graph
//! regeneration, and the BPR + contrastive recommendation phase.

pub mod checkpoint;
pub mod config;

pub use config::TrainConfig;

use crate::dataio::DatasetBundle;
use crate::diffusion::{
    diffusion_train_step, infer_interactions, rebuild_topk_graph, BoundDenoiser, DenoiserModel,
    DiffusionBatch, DiffusionStepConfig, NoiseSchedule,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, metrics_at_k, rank_all, EvalReport, MetricsAtK};
use crate::fusion::{
    final_embeddings, final_embeddings_backward, fuse_modalities, fuse_modalities_backward,
    modal_representation, modal_representation_backward, predict_scores, score_pairs,
};
use crate::graph::{GeneratedGraph, InteractionGraph, StackedOperator};
use crate::modality::{
    modality_view_base, modality_view_base_backward, modality_view_highorder,
    modality_view_highorder_backward, FeatureAligner,
};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::params::{ParamStore, ADAM_BETAS, ADAM_EPS};
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;
use crate::ssl::{cl_loss, ContrastiveConfig};

/// One BPR training triple: a user with an observed and an unobserved item.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

const NEGATIVE_RETRIES: usize = 200;

/// Draw `n` triples: user uniform, positive uniform over the user's train
/// items, negative uniform with rejection against the train edges.
pub fn sample_bpr_triples(
    train_items: &[Vec<usize>],
    n_items: usize,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Vec<BprTriple>> {
    let trainable: Vec<usize> = (0..train_items.len()).filter(|&u| !train_items[u].is_empty()).collect();
    if trainable.is_empty() {
        return Err(Error::State("no users with train interactions".into()));
    }
    let mut triples = Vec::with_capacity(n);
    for _ in 0..n {
        let user = trainable[rng.uniform_usize(trainable.len())];
        let items = &train_items[user];
        let pos = items[rng.uniform_usize(items.len())];
        let mut neg = None;
        for _ in 0..NEGATIVE_RETRIES {
            let cand = rng.uniform_usize(n_items);
            if items.binary_search(&cand).is_err() {
                neg = Some(cand);
                break;
            }
        }
        let neg = neg.ok_or_else(|| {
            Error::State(format!("user {user} has no negative items after bounded retries"))
        })?;
        triples.push(BprTriple { user, pos, neg });
    }
    Ok(triples)
}

/// Pairwise ranking loss: mean of `-log sigmoid(pos - neg)`. Returns the
/// loss and the per-triple gradient with respect to the positive score (the
/// negative score gets its negation).
pub fn bpr_loss<S: Scalar>(pos_scores: &[S], neg_scores: &[S]) -> Result<(S, Vec<S>)> {
    if pos_scores.len() != neg_scores.len() {
        return Err(Error::Shape("bpr: score lists differ in length".into()));
    }
    let n = S::from_usize(pos_scores.len().max(1));
    let mut loss = S::zero();
    let mut grads = Vec::with_capacity(pos_scores.len());
    for (&p, &q) in pos_scores.iter().zip(neg_scores) {
        let x = p - q;
        // -log sigmoid(x) = softplus(-x), stable at both tails
        let softplus = if x > S::zero() {
            (S::one() + (-x).exp()).ln()
        } else {
            -x + (S::one() + x.exp()).ln()
        };
        loss += softplus / n;
        // d/dp = sigmoid(x) - 1
        let sig = S::one() / (S::one() + (-x).exp());
        grads.push((sig - S::one()) / n);
    }
    Ok((loss, grads))
}

/// Joint recommendation objective `bpr + lambda1 * cl + lambda2 * ||params||^2`.
pub fn rec_loss<S: Scalar>(bpr: S, cl: S, param_sq_norm: S, lambda1: f64, lambda2: f64) -> S {
    bpr + S::from_f64(lambda1) * cl + S::from_f64(lambda2) * param_sq_norm
}

/// Everything trainable plus the current generated graphs.
pub struct ModelState<S: Scalar> {
    pub config: TrainConfig,
    pub store: ParamStore<S>,
    pub modalities: Vec<String>,
    pub denoisers: Vec<DenoiserModel>,
    pub aligners: Vec<FeatureAligner>,
    pub schedule: NoiseSchedule<S>,
    pub generated: Vec<GeneratedGraph<S>>,
    /// Bumped whenever the generated graphs are rebuilt.
    pub graph_version: u64,
}

impl<S: Scalar> ModelState<S> {
    /// Fresh Xavier-initialized state for a dataset.
    pub fn init(config: &TrainConfig, bundle: &DatasetBundle<S>) -> Result<Self> {
        config.validate(bundle.n_items)?;
        bundle.validate()?;
        let mut rng = SeededRng::new(config.seed).derive(1);
        let mut store = ParamStore::new();
        store.register_xavier("user_emb", bundle.n_users, config.embed_dim, &mut rng)?;
        store.register_xavier("item_emb", bundle.n_items, config.embed_dim, &mut rng)?;
        let n_mods = bundle.modalities.len();
        let kappa_cols = if config.kappa_per_dim { config.embed_dim } else { 1 };
        let mut kappa = DenseMatrix::zeros(n_mods, kappa_cols);
        kappa.fill(S::one() / S::from_usize(n_mods));
        store.register("kappa", kappa)?;

        let mut denoisers = Vec::new();
        let mut aligners = Vec::new();
        for m in &bundle.modalities {
            let denoiser = DenoiserModel::new(&m.name, bundle.n_items, config.step_embed_dim, config.hidden_dim);
            denoiser.init_params(&mut store, &mut rng)?;
            let aligner = FeatureAligner::new(&m.name, config.aligner_mode, m.dim(), config.embed_dim);
            aligner.init_params(&mut store, &mut rng)?;
            denoisers.push(denoiser);
            aligners.push(aligner);
        }
        let schedule = NoiseSchedule::build(
            config.diffusion_steps,
            config.noise_scale,
            config.noise_min,
            config.noise_max,
        )?;
        Ok(Self {
            config: config.clone(),
            store,
            modalities: bundle.modality_names(),
            denoisers,
            aligners,
            schedule,
            generated: bundle
                .modalities
                .iter()
                .map(|_| GeneratedGraph::empty(bundle.n_users, bundle.n_items))
                .collect(),
            graph_version: 0,
        })
    }

    /// Rebuild model wiring around a parameter store loaded from a
    /// checkpoint, verifying shapes against the dataset.
    pub fn from_store(config: &TrainConfig, bundle: &DatasetBundle<S>, store: ParamStore<S>) -> Result<Self> {
        config.validate(bundle.n_items)?;
        bundle.validate()?;
        let mut denoisers = Vec::new();
        let mut aligners = Vec::new();
        for m in &bundle.modalities {
            denoisers.push(DenoiserModel::new(
                &m.name,
                bundle.n_items,
                config.step_embed_dim,
                config.hidden_dim,
            ));
            aligners.push(FeatureAligner::new(&m.name, config.aligner_mode, m.dim(), config.embed_dim));
        }
        let state = Self {
            config: config.clone(),
            store,
            modalities: bundle.modality_names(),
            denoisers,
            aligners,
            schedule: NoiseSchedule::build(
                config.diffusion_steps,
                config.noise_scale,
                config.noise_min,
                config.noise_max,
            )?,
            generated: bundle
                .modalities
                .iter()
                .map(|_| GeneratedGraph::empty(bundle.n_users, bundle.n_items))
                .collect(),
            graph_version: 0,
        };
        state.check_store(bundle)?;
        Ok(state)
    }

    fn check_store(&self, bundle: &DatasetBundle<S>) -> Result<()> {
        let expect = |name: &str, rows: usize, cols: usize| -> Result<()> {
            let m = self
                .store
                .get(name)
                .map_err(|_| Error::Data(format!("checkpoint is missing parameter '{name}'")))?;
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::Data(format!(
                    "parameter '{name}' is {}x{}, dataset/config implies {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
            Ok(())
        };
        expect("user_emb", bundle.n_users, self.config.embed_dim)?;
        expect("item_emb", bundle.n_items, self.config.embed_dim)?;
        let kappa_cols = if self.config.kappa_per_dim { self.config.embed_dim } else { 1 };
        expect("kappa", bundle.modalities.len(), kappa_cols)?;
        for (m, feats) in bundle.modalities.iter().enumerate() {
            for name in self.denoisers[m].param_names() {
                self.store
                    .get(&name)
                    .map_err(|_| Error::Data(format!("checkpoint is missing parameter '{name}'")))?;
            }
            expect(
                &format!("align.{}.weight", feats.name),
                feats.dim(),
                self.config.embed_dim,
            )?;
        }
        Ok(())
    }

    /// Names of the parameters updated (and regularized) by the
    /// recommendation phase: embeddings, aligners, and modality weights.
    /// Denoiser weights belong to the diffusion phase only.
    pub fn rec_param_names(&self) -> Vec<String> {
        let mut names = vec!["user_emb".to_string(), "item_emb".to_string(), "kappa".to_string()];
        for aligner in &self.aligners {
            names.extend(aligner.param_names());
        }
        names
    }

    /// Denoised interaction scores for every user under one modality's
    /// denoiser, batched over user rows.
    pub fn generate_scores(
        &self,
        train: &InteractionGraph<S>,
        modality: usize,
        rng: &mut SeededRng,
    ) -> Result<DenseMatrix<S>> {
        let n_users = train.n_users();
        let all_users: Vec<usize> = (0..n_users).collect();
        let chunk = self.config.batch_size.max(1);
        let mut scores = DenseMatrix::zeros(n_users, train.n_items());
        for start in (0..n_users).step_by(chunk) {
            let users = &all_users[start..(start + chunk).min(n_users)];
            let alpha0 = train.interaction_rows(users);
            let denoiser = BoundDenoiser {
                model: &self.denoisers[modality],
                store: &self.store,
            };
            let recon = infer_interactions(
                &denoiser,
                &self.schedule,
                &alpha0,
                self.config.inference_steps,
                rng,
            )?;
            for (r, &u) in users.iter().enumerate() {
                scores.row_mut(u).copy_from_slice(recon.row(r));
            }
        }
        Ok(scores)
    }

    /// Regenerate every modality graph from the current denoisers.
    pub fn regenerate_graphs(&mut self, train: &InteractionGraph<S>, rng: &mut SeededRng) -> Result<()> {
        for m in 0..self.modalities.len() {
            let mut m_rng = rng.derive(m as u64);
            let scores = self.generate_scores(train, m, &mut m_rng)?;
            self.generated[m] = rebuild_topk_graph(&scores, self.config.topk)?;
        }
        self.graph_version += 1;
        Ok(())
    }

    /// Random stream used when a loaded checkpoint has to rebuild its
    /// generated graphs outside the training loop.
    pub fn serving_rng(&self) -> SeededRng {
        SeededRng::new(self.config.seed).derive(SERVE_REGEN_TAG)
    }

    /// Rebuild the generated graphs deterministically for a checkpoint
    /// loaded outside training (evaluation, export).
    pub fn regenerate_for_serving(&mut self, train: &InteractionGraph<S>) -> Result<()> {
        let mut rng = self.serving_rng();
        self.regenerate_graphs(train, &mut rng)
    }
}

/// Stream tag for serving-time graph regeneration.
pub const SERVE_REGEN_TAG: u64 = 0x5EED_6E4A;

/// Forward intermediates of the recommendation pipeline.
pub struct RecForward<S: Scalar> {
    pub aligned: Vec<DenseMatrix<S>>,
    align_caches: Vec<crate::modality::AlignerCache<S>>,
    /// Sum-pooled contrastive views per modality.
    pub views: Vec<DenseMatrix<S>>,
    reps: Vec<DenseMatrix<S>>,
    pub hbar: DenseMatrix<S>,
    final_cache: crate::fusion::FinalEmbeddingsCache<S>,
}

/// Forward pass shared by training, validation, and serving: aligners,
/// contrastive views, per-modality aggregation, fusion, propagation.
pub fn rec_forward<S: Scalar>(
    state: &ModelState<S>,
    bundle: &DatasetBundle<S>,
    obs: &InteractionGraph<S>,
    op: &StackedOperator<S>,
) -> Result<RecForward<S>> {
    let user_emb = state.store.get("user_emb")?;
    let item_emb = state.store.get("item_emb")?;
    let kappa = state.store.get("kappa")?;

    let mut aligned = Vec::new();
    let mut align_caches = Vec::new();
    let mut views = Vec::new();
    let mut reps = Vec::new();
    for m in 0..state.modalities.len() {
        let (e_mod, cache) = state.aligners[m].forward(&state.store, &bundle.modalities[m].raw)?;
        let z0 = modality_view_base(&state.generated[m], user_emb, &e_mod)?;
        views.push(modality_view_highorder(op, &z0, state.config.layers)?);
        reps.push(modal_representation(
            obs,
            &state.generated[m],
            user_emb,
            item_emb,
            &e_mod,
        )?);
        aligned.push(e_mod);
        align_caches.push(cache);
    }
    let h0 = fuse_modalities(&reps, kappa)?;
    let (hbar, final_cache) = final_embeddings(op, &h0, state.config.layers, S::from_f64(state.config.omega))?;
    Ok(RecForward {
        aligned,
        align_caches,
        views,
        reps,
        hbar,
        final_cache,
    })
}

/// Backward pass of the recommendation pipeline: push `grad_hbar` (and
/// optional per-view gradients) into the parameter gradients.
pub fn rec_backward<S: Scalar>(
    state: &mut ModelState<S>,
    bundle: &DatasetBundle<S>,
    obs: &InteractionGraph<S>,
    op: &StackedOperator<S>,
    fwd: &RecForward<S>,
    grad_hbar: &DenseMatrix<S>,
    grad_views: Option<&[DenseMatrix<S>]>,
) -> Result<()> {
    let kappa = state.store.get("kappa")?.clone();
    let grad_h0 = final_embeddings_backward(op, &fwd.final_cache, grad_hbar)?;
    let (grad_kappa, grad_reps) = fuse_modalities_backward(&fwd.reps, &kappa, &grad_h0)?;
    state.store.accumulate_grad("kappa", S::one(), &grad_kappa)?;

    for m in 0..state.modalities.len() {
        let (mut grad_user, grad_item, mut grad_aligned) =
            modal_representation_backward(obs, &state.generated[m], &grad_reps[m])?;
        if let Some(gv) = grad_views {
            let grad_z0 = modality_view_highorder_backward(op, &gv[m], state.config.layers)?;
            let (gu, ga) = modality_view_base_backward(&state.generated[m], &grad_z0)?;
            grad_user.add_assign(&gu)?;
            grad_aligned.add_assign(&ga)?;
        }
        state.store.accumulate_grad("user_emb", S::one(), &grad_user)?;
        state.store.accumulate_grad("item_emb", S::one(), &grad_item)?;
        state.aligners[m].backward(
            &mut state.store,
            &bundle.modalities[m].raw,
            &fwd.align_caches[m],
            &grad_aligned,
        )?;
    }
    Ok(())
}

/// Scatter BPR gradients into the stacked embedding gradient.
fn bpr_backward_into_hbar<S: Scalar>(
    hbar: &DenseMatrix<S>,
    n_users: usize,
    triples: &[BprTriple],
    coeffs: &[S],
    grad_hbar: &mut DenseMatrix<S>,
) {
    for (t, &g) in triples.iter().zip(coeffs) {
        let (u, pi, ni) = (t.user, n_users + t.pos, n_users + t.neg);
        for c in 0..hbar.cols() {
            let hu = hbar.get(u, c);
            let hp = hbar.get(pi, c);
            let hn = hbar.get(ni, c);
            grad_hbar.set(u, c, grad_hbar.get(u, c) + g * (hp - hn));
            grad_hbar.set(pi, c, grad_hbar.get(pi, c) + g * hu);
            grad_hbar.set(ni, c, grad_hbar.get(ni, c) - g * hu);
        }
    }
}

/// Per-epoch losses.
#[derive(Clone, Debug)]
pub struct EpochMetrics {
    /// Mean diffusion loss (reconstruction, modality-signal) per modality.
    pub l_dm: Vec<(f64, f64)>,
    pub l_bpr: f64,
    pub l_cl: f64,
}

fn sorted_unique(xs: &mut Vec<usize>) {
    xs.sort_unstable();
    xs.dedup();
}

/// One full epoch: diffusion phase per modality, optional graph
/// regeneration, then the recommendation phase.
pub fn train_epoch<S: Scalar>(
    state: &mut ModelState<S>,
    bundle: &DatasetBundle<S>,
    train: &InteractionGraph<S>,
    op: &StackedOperator<S>,
    epoch: usize,
) -> Result<EpochMetrics> {
    let epoch_rng = SeededRng::new(state.config.seed).derive(1000 + epoch as u64);
    let n_users = train.n_users();
    let batch = state.config.batch_size.max(1);

    // phase 1: diffusion training per modality
    let mut l_dm = Vec::new();
    let step_cfg = DiffusionStepConfig {
        lambda0: state.config.lambda0,
        snr_weighted: state.config.snr_weight,
        msi_item_grad: state.config.msi_item_grad,
        lr: state.config.lr,
        betas: ADAM_BETAS,
        eps: ADAM_EPS,
    };
    for m in 0..state.modalities.len() {
        let mut rng = epoch_rng.derive(10 + m as u64);
        let mut order: Vec<usize> = (0..n_users).collect();
        rng.shuffle(&mut order);
        let (mut sum_elbo, mut sum_msi, mut batches) = (0.0, 0.0, 0);
        for start in (0..n_users).step_by(batch) {
            let users = order[start..(start + batch).min(n_users)].to_vec();
            let alpha0 = train.interaction_rows(&users);
            let dbatch = DiffusionBatch::sample(&state.schedule, users, alpha0, &mut rng)?;
            let (le, lm) = diffusion_train_step(
                &state.denoisers[m],
                &state.aligners[m],
                &state.schedule,
                &dbatch,
                &bundle.modalities[m].raw,
                &mut state.store,
                &step_cfg,
            )?;
            sum_elbo += le.as_f64();
            sum_msi += lm.as_f64();
            batches += 1;
        }
        l_dm.push((sum_elbo / batches.max(1) as f64, sum_msi / batches.max(1) as f64));
    }

    // phase 2: periodic graph regeneration (always on the first epoch)
    if (epoch - 1) % state.config.regen_every == 0 {
        let mut rng = epoch_rng.derive(2000);
        state.regenerate_graphs(train, &mut rng)?;
    }

    // phase 3: recommendation training
    let train_items = train.user_items();
    let n_triples = train.edges().len();
    let mut rng = epoch_rng.derive(3000);
    let cl_config = ContrastiveConfig {
        temperature: state.config.tau,
        anchor_mode: state.config.anchor_mode,
        negative_scope: state.config.negative_scope,
    };
    let rec_names = state.rec_param_names();
    let rec_refs: Vec<&str> = rec_names.iter().map(String::as_str).collect();
    let (mut sum_bpr, mut sum_cl, mut batches) = (0.0, 0.0, 0);
    for start in (0..n_triples).step_by(batch) {
        let count = batch.min(n_triples - start);
        let triples = sample_bpr_triples(&train_items, train.n_items(), count, &mut rng)?;
        state.store.zero_grads();
        let fwd = rec_forward(state, bundle, train, op)?;

        let pairs_pos: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.pos)).collect();
        let pairs_neg: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.neg)).collect();
        let pos_scores = score_pairs(&fwd.hbar, n_users, &pairs_pos);
        let neg_scores = score_pairs(&fwd.hbar, n_users, &pairs_neg);
        let (l_bpr, coeffs) = bpr_loss(&pos_scores, &neg_scores)?;

        let mut batch_users: Vec<usize> = triples.iter().map(|t| t.user).collect();
        let mut batch_items: Vec<usize> = triples.iter().map(|t| t.pos).collect();
        sorted_unique(&mut batch_users);
        sorted_unique(&mut batch_items);
        let (l_cl, cl_grads) = cl_loss(
            &cl_config,
            &fwd.views,
            &fwd.hbar,
            n_users,
            &batch_users,
            &batch_items,
        )?;

        let mut grad_hbar = DenseMatrix::zeros(fwd.hbar.rows(), fwd.hbar.cols());
        bpr_backward_into_hbar(&fwd.hbar, n_users, &triples, &coeffs, &mut grad_hbar);
        let lambda1 = S::from_f64(state.config.lambda1);
        let grad_views: Option<Vec<DenseMatrix<S>>> = if state.config.lambda1 != 0.0 {
            grad_hbar.axpy(lambda1, &cl_grads.hbar)?;
            Some(cl_grads.views.iter().map(|g| g.scaled(lambda1)).collect())
        } else {
            None
        };
        rec_backward(state, bundle, train, op, &fwd, &grad_hbar, grad_views.as_deref())?;

        // L2 regularization over the recommendation parameters
        if state.config.lambda2 != 0.0 {
            let two_l2 = S::from_f64(2.0 * state.config.lambda2);
            for name in &rec_names {
                let theta = state.store.get(name)?.clone();
                state.store.accumulate_grad(name, two_l2, &theta)?;
            }
        }
        state
            .store
            .adam_step_names(&rec_refs, state.config.lr, ADAM_BETAS, ADAM_EPS)?;

        if !l_bpr.is_finite() || !l_cl.is_finite() {
            return Err(Error::Numeric("recommendation loss diverged".into()));
        }
        sum_bpr += l_bpr.as_f64();
        sum_cl += l_cl.as_f64();
        batches += 1;
    }

    Ok(EpochMetrics {
        l_dm,
        l_bpr: sum_bpr / batches.max(1) as f64,
        l_cl: sum_cl / batches.max(1) as f64,
    })
}

/// Compute validation metrics of the current state.
pub fn validate_state<S: Scalar>(
    state: &ModelState<S>,
    bundle: &DatasetBundle<S>,
    train: &InteractionGraph<S>,
    op: &StackedOperator<S>,
    edges: &[(usize, usize)],
    ks: &[usize],
) -> Result<EvalReport> {
    let fwd = rec_forward(state, bundle, train, op)?;
    let scores = predict_scores(&fwd.hbar, bundle.n_users, bundle.n_items)?;
    let ranked = rank_all(&scores, &train.user_items())?;
    let mut test_lists: Vec<Vec<usize>> = vec![Vec::new(); bundle.n_users];
    for &(u, i) in edges {
        test_lists[u].push(i);
    }
    for list in &mut test_lists {
        list.sort_unstable();
    }
    let (metrics, evaluated_users) = metrics_at_k(&ranked, &test_lists, ks)?;
    Ok(EvalReport {
        ks: ks.to_vec(),
        evaluated_users,
        metrics,
        groups: Vec::new(),
    })
}

/// Full evaluation with optional sparsity groups.
pub fn evaluate_state<S: Scalar>(
    state: &ModelState<S>,
    bundle: &DatasetBundle<S>,
    train: &InteractionGraph<S>,
    op: &StackedOperator<S>,
    edges: &[(usize, usize)],
    ks: &[usize],
    group_bounds: &[usize],
) -> Result<EvalReport> {
    let fwd = rec_forward(state, bundle, train, op)?;
    let scores = predict_scores(&fwd.hbar, bundle.n_users, bundle.n_items)?;
    let ranked = rank_all(&scores, &train.user_items())?;
    let mut test_lists: Vec<Vec<usize>> = vec![Vec::new(); bundle.n_users];
    for &(u, i) in edges {
        test_lists[u].push(i);
    }
    for list in &mut test_lists {
        list.sort_unstable();
    }
    let degrees = train.user_degree().to_vec();
    evaluate(&ranked, &test_lists, &degrees, ks, group_bounds)
}

/// One history row.
#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_dm: Vec<(f64, f64)>,
    pub l_bpr: f64,
    pub l_cl: f64,
    pub val: MetricsAtK,
}

/// Training outcome: final state (best-validation parameters restored),
/// history, and the best epoch/metric.
pub struct FitResult<S: Scalar> {
    pub state: ModelState<S>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Train with early stopping on validation recall.
pub fn fit<S: Scalar>(bundle: &DatasetBundle<S>, config: &TrainConfig) -> Result<FitResult<S>> {
    let state = ModelState::init(config, bundle)?;
    fit_with(state, bundle, 1, |_, _, _| Ok(()))
}

/// Continue training an existing state through `config.epochs`, numbering
/// epochs from `start_epoch`.
pub fn fit_from<S: Scalar>(
    state: ModelState<S>,
    bundle: &DatasetBundle<S>,
    start_epoch: usize,
) -> Result<FitResult<S>> {
    fit_with(state, bundle, start_epoch, |_, _, _| Ok(()))
}

/// Training loop with a per-epoch observer (history persistence,
/// checkpointing). The observer receives the state after the epoch, the
/// epoch record, and whether this epoch improved the validation metric.
pub fn fit_with<S, F>(
    mut state: ModelState<S>,
    bundle: &DatasetBundle<S>,
    start_epoch: usize,
    mut on_epoch: F,
) -> Result<FitResult<S>>
where
    S: Scalar,
    F: FnMut(&ModelState<S>, &EpochRecord, bool) -> Result<()>,
{
    if bundle.val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items)?;
    let op = StackedOperator::from_graph(&train);
    let ks = [state.config.val_k];

    let mut history = Vec::new();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Option<(ParamStore<S>, Vec<GeneratedGraph<S>>)> = None;
    let mut stale = 0usize;

    for epoch in start_epoch..=state.config.epochs {
        let metrics = train_epoch(&mut state, bundle, &train, &op, epoch)?;
        let report = validate_state(&state, bundle, &train, &op, &bundle.val, &ks)?;
        let val = report.metrics[&state.config.val_k];
        let record = EpochRecord {
            epoch,
            l_dm: metrics.l_dm,
            l_bpr: metrics.l_bpr,
            l_cl: metrics.l_cl,
            val,
        };
        let improved = val.recall > best_metric;
        if improved {
            best_metric = val.recall;
            best_epoch = epoch;
            best_params = Some((state.store.clone(), state.generated.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        on_epoch(&state, &record, improved)?;
        history.push(record);
        if !improved && stale >= state.config.patience {
            break;
        }
    }
    if let Some((store, generated)) = best_params {
        state.store = store;
        state.generated = generated;
    }
    Ok(FitResult {
        state,
        history,
        best_epoch,
        best_metric: if best_metric.is_finite() { best_metric } else { 0.0 },
    })
}

#[cfg(test)]
mod tests;
