use super::*;
use crate::dataio::{synth_generate, SynthSpec};
use crate::numerics::params::{finite_diff_grad, grad_relative_error};

fn tiny_spec() -> SynthSpec {
    SynthSpec {
        n_users: 24,
        n_items: 20,
        n_blocks: 2,
        modalities: vec![("v".into(), 8), ("t".into(), 6)],
        noise: 0.1,
        p_intra: 0.5,
        p_cross: 0.02,
        ratios: (0.8, 0.1, 0.1),
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        seed: 7,
        epochs: 3,
        lr: 5e-3,
        batch_size: 64,
        embed_dim: 8,
        layers: 1,
        lambda0: 0.1,
        lambda1: 0.1,
        lambda2: 1e-4,
        omega: 0.5,
        tau: 0.5,
        diffusion_steps: 5,
        inference_steps: 2,
        topk: 3,
        step_embed_dim: 4,
        hidden_dim: 32,
        val_k: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn bpr_equal_scores_is_log_two() {
    let (loss, grads) = bpr_loss::<f64>(&[1.0, 0.5], &[1.0, 0.5]).unwrap();
    assert!((loss - (2.0f64).ln()).abs() < 1e-12);
    assert_eq!(grads.len(), 2);
}

#[test]
fn bpr_decreases_monotonically_with_margin() {
    let mut last = f64::INFINITY;
    for margin in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 80.0] {
        let (loss, _) = bpr_loss::<f64>(&[margin], &[0.0]).unwrap();
        assert!(loss < last, "margin {margin}");
        assert!(loss >= 0.0);
        last = loss;
    }
    assert!(last < 1e-12); // large margin drives the loss to zero
}

#[test]
fn bpr_gradient_matches_finite_differences() {
    let mut rng = SeededRng::new(3);
    let mut store = ParamStore::<f64>::new();
    store.register("pos", rng.gaussian_matrix(1, 4)).unwrap();
    store.register("neg", rng.gaussian_matrix(1, 4)).unwrap();
    let (_, coeffs) = bpr_loss::<f64>(store.get("pos").unwrap().row(0), store.get("neg").unwrap().row(0)).unwrap();
    let mut grad_pos = DenseMatrix::zeros(1, 4);
    let mut grad_neg = DenseMatrix::zeros(1, 4);
    for (i, &c) in coeffs.iter().enumerate() {
        grad_pos.set(0, i, c);
        grad_neg.set(0, i, -c);
    }
    let analytic = std::collections::BTreeMap::from([
        ("pos".to_string(), grad_pos),
        ("neg".to_string(), grad_neg),
    ]);
    let numeric = finite_diff_grad(
        |s| Ok(bpr_loss(s.get("pos")?.row(0), s.get("neg")?.row(0))?.0),
        &mut store,
        1e-5,
    )
    .unwrap();
    let rel = grad_relative_error(&analytic, &numeric);
    assert!(rel < 1e-4, "relative error {rel}");
}

#[test]
fn rec_loss_composes_additively() {
    let bpr = 0.37;
    let cl = 1.21;
    let sq = 4.5;
    let total: f64 = rec_loss(bpr, cl, sq, 0.1, 0.01);
    assert!((total - (bpr + 0.1 * cl + 0.01 * sq)).abs() < 1e-10);
    assert_eq!(rec_loss(bpr, cl, sq, 0.0, 0.0), bpr);
    assert_eq!(rec_loss(bpr, cl, 0.0, 0.0, 1.0), bpr);
}

#[test]
fn triples_single_negative_candidate() {
    let mut rng = SeededRng::new(5);
    let train_items = vec![vec![0usize]];
    for _ in 0..20 {
        let triples = sample_bpr_triples(&train_items, 2, 1, &mut rng).unwrap();
        assert_eq!(triples[0], BprTriple { user: 0, pos: 0, neg: 1 });
    }
}

#[test]
fn triples_negatives_never_observed() {
    let mut rng = SeededRng::new(6);
    let spec = tiny_spec();
    let bundle = synth_generate::<f64>(&spec, &mut rng).unwrap();
    let graph = InteractionGraph::<f64>::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let items = graph.user_items();
    let mut sample_rng = SeededRng::new(8);
    let triples = sample_bpr_triples(&items, bundle.n_items, 10_000, &mut sample_rng).unwrap();
    for t in &triples {
        assert!(items[t.user].binary_search(&t.neg).is_err());
        assert!(items[t.user].binary_search(&t.pos).is_ok());
    }
}

#[test]
fn triples_fixed_seed_reproduces_stream() {
    let train_items = vec![vec![0, 2], vec![1], vec![0, 1, 3]];
    let a = sample_bpr_triples(&train_items, 5, 50, &mut SeededRng::new(11)).unwrap();
    let b = sample_bpr_triples(&train_items, 5, 50, &mut SeededRng::new(11)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn triples_fail_when_user_owns_every_item() {
    let mut rng = SeededRng::new(5);
    let train_items = vec![vec![0, 1, 2]];
    assert!(matches!(
        sample_bpr_triples(&train_items, 3, 1, &mut rng),
        Err(Error::State(_))
    ));
}

#[test]
fn rec_pipeline_gradients_match_finite_differences() {
    // full-loss gradient check over every recommendation-phase parameter
    let spec = SynthSpec {
        n_users: 8,
        n_items: 6,
        modalities: vec![("v".into(), 5), ("t".into(), 4)],
        ..tiny_spec()
    };
    let bundle = synth_generate::<f64>(&spec, &mut SeededRng::new(17)).unwrap();
    let mut config = tiny_config();
    config.embed_dim = 4;
    config.hidden_dim = 8;
    config.topk = 2;
    let mut state = ModelState::init(&config, &bundle).unwrap();
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let op = StackedOperator::from_graph(&train);
    let mut rng = SeededRng::new(33);
    state.regenerate_graphs(&train, &mut rng).unwrap();

    let train_items = train.user_items();
    let triples = sample_bpr_triples(&train_items, bundle.n_items, 6, &mut rng).unwrap();
    let mut batch_users: Vec<usize> = triples.iter().map(|t| t.user).collect();
    let mut batch_items: Vec<usize> = triples.iter().map(|t| t.pos).collect();
    sorted_unique(&mut batch_users);
    sorted_unique(&mut batch_items);
    let cl_config = ContrastiveConfig {
        temperature: config.tau,
        anchor_mode: crate::ssl::AnchorMode::ModalityView,
        negative_scope: crate::ssl::NegativeScope::InBatch,
    };
    let rec_names = state.rec_param_names();

    // analytic gradients through the full objective
    state.store.zero_grads();
    let fwd = rec_forward(&state, &bundle, &train, &op).unwrap();
    let pairs_pos: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.pos)).collect();
    let pairs_neg: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.neg)).collect();
    let (_, coeffs) = bpr_loss(
        &score_pairs(&fwd.hbar, bundle.n_users, &pairs_pos),
        &score_pairs(&fwd.hbar, bundle.n_users, &pairs_neg),
    )
    .unwrap();
    let mut grad_hbar = DenseMatrix::zeros(fwd.hbar.rows(), fwd.hbar.cols());
    bpr_backward_into_hbar(&fwd.hbar, bundle.n_users, &triples, &coeffs, &mut grad_hbar);
    let (_, cl_grads) = cl_loss(
        &cl_config,
        &fwd.views,
        &fwd.hbar,
        bundle.n_users,
        &batch_users,
        &batch_items,
    )
    .unwrap();
    grad_hbar.axpy(config.lambda1, &cl_grads.hbar).unwrap();
    let grad_views: Vec<DenseMatrix<f64>> =
        cl_grads.views.iter().map(|g| g.scaled(config.lambda1)).collect();
    rec_backward(&mut state, &bundle, &train, &op, &fwd, &grad_hbar, Some(&grad_views)).unwrap();
    let two_l2 = 2.0 * config.lambda2;
    for name in &rec_names {
        let theta = state.store.get(name).unwrap().clone();
        state.store.accumulate_grad(name, two_l2, &theta).unwrap();
    }
    let analytic: std::collections::BTreeMap<String, DenseMatrix<f64>> = rec_names
        .iter()
        .map(|n| (n.clone(), state.store.grad(n).unwrap().clone()))
        .collect();

    // numeric reference: rebuild the loss from scratch at perturbed params.
    // move the parameters into a probe store so the denoiser weights (not
    // part of this objective) are left out of the probe
    let mut probe = ParamStore::<f64>::new();
    for name in &rec_names {
        probe.register(name, state.store.get(name).unwrap().clone()).unwrap();
    }
    let loss_fn = |p: &ParamStore<f64>| -> crate::error::Result<f64> {
        let trial = state_clone_with(&state, p)?;
        let fwd = rec_forward(&trial, &bundle, &train, &op)?;
        let (l_bpr, _) = bpr_loss(
            &score_pairs(&fwd.hbar, bundle.n_users, &pairs_pos),
            &score_pairs(&fwd.hbar, bundle.n_users, &pairs_neg),
        )?;
        let (l_cl, _) = cl_loss(
            &cl_config,
            &fwd.views,
            &fwd.hbar,
            bundle.n_users,
            &batch_users,
            &batch_items,
        )?;
        let names: Vec<&str> = rec_names.iter().map(String::as_str).collect();
        let sq = trial.store.squared_norm_of(&names)?;
        Ok(rec_loss(l_bpr, l_cl, sq, config.lambda1, config.lambda2))
    };
    let numeric = finite_diff_grad(loss_fn, &mut probe, 1e-5).unwrap();
    let rel = grad_relative_error(&analytic, &numeric);
    assert!(rel < 1e-4, "relative error {rel}");
}

/// Clone `state` with the recommendation parameters replaced by `probe`'s.
fn state_clone_with(
    state: &ModelState<f64>,
    probe: &ParamStore<f64>,
) -> crate::error::Result<ModelState<f64>> {
    let mut store = state.store.clone();
    for name in probe.names() {
        *store.get_mut(name)? = probe.get(name)?.clone();
    }
    Ok(ModelState {
        config: state.config.clone(),
        store,
        modalities: state.modalities.clone(),
        denoisers: state.denoisers.clone(),
        aligners: state.aligners.clone(),
        schedule: state.schedule.clone(),
        generated: state.generated.clone(),
        graph_version: state.graph_version,
    })
}

#[test]
fn phase_three_gradients_compose_additively_in_lambda1() {
    // grads(lambda1) = grads(0) + lambda1 * grads(cl only); in particular the
    // lambda1 = 0 run is exactly the BPR + regularization gradient
    let bundle = synth_generate::<f64>(&tiny_spec(), &mut SeededRng::new(19)).unwrap();
    let config = tiny_config();
    let mut state = ModelState::init(&config, &bundle).unwrap();
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let op = StackedOperator::from_graph(&train);
    let mut rng = SeededRng::new(3);
    state.regenerate_graphs(&train, &mut rng).unwrap();
    let train_items = train.user_items();
    let triples = sample_bpr_triples(&train_items, bundle.n_items, 12, &mut rng).unwrap();
    let rec_names = state.rec_param_names();
    let mut batch_users: Vec<usize> = triples.iter().map(|t| t.user).collect();
    let mut batch_items: Vec<usize> = triples.iter().map(|t| t.pos).collect();
    sorted_unique(&mut batch_users);
    sorted_unique(&mut batch_items);
    let cl_config = ContrastiveConfig {
        temperature: config.tau,
        anchor_mode: config.anchor_mode,
        negative_scope: config.negative_scope,
    };

    let mut grads_for = |lambda1: f64, include_bpr_reg: bool| -> Vec<DenseMatrix<f64>> {
        state.store.zero_grads();
        let fwd = rec_forward(&state, &bundle, &train, &op).unwrap();
        let mut grad_hbar = DenseMatrix::zeros(fwd.hbar.rows(), fwd.hbar.cols());
        if include_bpr_reg {
            let pairs_pos: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.pos)).collect();
            let pairs_neg: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.neg)).collect();
            let (_, coeffs) = bpr_loss(
                &score_pairs(&fwd.hbar, bundle.n_users, &pairs_pos),
                &score_pairs(&fwd.hbar, bundle.n_users, &pairs_neg),
            )
            .unwrap();
            bpr_backward_into_hbar(&fwd.hbar, bundle.n_users, &triples, &coeffs, &mut grad_hbar);
        }
        let grad_views = if lambda1 != 0.0 {
            let (_, cl_grads) = cl_loss(
                &cl_config,
                &fwd.views,
                &fwd.hbar,
                bundle.n_users,
                &batch_users,
                &batch_items,
            )
            .unwrap();
            grad_hbar.axpy(lambda1, &cl_grads.hbar).unwrap();
            Some(cl_grads.views.iter().map(|g| g.scaled(lambda1)).collect::<Vec<_>>())
        } else {
            None
        };
        rec_backward(&mut state, &bundle, &train, &op, &fwd, &grad_hbar, grad_views.as_deref()).unwrap();
        if include_bpr_reg {
            let two_l2 = 2.0 * config.lambda2;
            for name in &rec_names {
                let theta = state.store.get(name).unwrap().clone();
                state.store.accumulate_grad(name, two_l2, &theta).unwrap();
            }
        }
        rec_names.iter().map(|n| state.store.grad(n).unwrap().clone()).collect()
    };

    let bpr_reg_only = grads_for(0.0, true);
    let cl_only = grads_for(1.0, false);
    let combined = grads_for(0.3, true);
    for ((name, base), (cl, got)) in rec_names
        .iter()
        .zip(&bpr_reg_only)
        .zip(cl_only.iter().zip(&combined))
    {
        for ((b, c), g) in base.data().iter().zip(cl.data()).zip(got.data()) {
            let want = b + 0.3 * c;
            assert!((g - want).abs() < 1e-10, "{name}: {g} vs {want}");
        }
    }
}

#[test]
fn regen_every_epoch_bumps_graph_version() {
    let bundle = synth_generate::<f64>(&tiny_spec(), &mut SeededRng::new(2)).unwrap();
    let mut config = tiny_config();
    config.epochs = 2;
    config.regen_every = 1;
    let mut state = ModelState::init(&config, &bundle).unwrap();
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let op = StackedOperator::from_graph(&train);
    assert_eq!(state.graph_version, 0);
    train_epoch(&mut state, &bundle, &train, &op, 1).unwrap();
    assert_eq!(state.graph_version, 1);
    train_epoch(&mut state, &bundle, &train, &op, 2).unwrap();
    assert_eq!(state.graph_version, 2);
    // every generated graph carries exactly k edges per user
    for gen in &state.generated {
        assert_eq!(gen.norm().nnz(), config.topk * bundle.n_users);
    }
}

#[test]
fn fit_zero_epochs_returns_initialized_state() {
    let bundle = synth_generate::<f64>(&tiny_spec(), &mut SeededRng::new(4)).unwrap();
    let mut config = tiny_config();
    config.epochs = 0;
    let init = ModelState::init(&config, &bundle).unwrap();
    let result = fit(&bundle, &config).unwrap();
    assert!(result.history.is_empty());
    for name in init.store.names() {
        assert_eq!(
            init.store.get(name).unwrap().data(),
            result.state.store.get(name).unwrap().data()
        );
    }
}

#[test]
fn fit_rejects_empty_validation_split() {
    let mut bundle = synth_generate::<f64>(&tiny_spec(), &mut SeededRng::new(4)).unwrap();
    bundle.val.clear();
    let config = tiny_config();
    assert!(matches!(fit(&bundle, &config), Err(Error::Config(_))));
}

#[test]
fn fit_is_deterministic_under_fixed_seed() {
    let bundle = synth_generate::<f32>(&tiny_spec(), &mut SeededRng::new(6)).unwrap();
    let mut config = tiny_config();
    config.epochs = 2;
    let a = fit(&bundle, &config).unwrap();
    let b = fit(&bundle, &config).unwrap();
    assert_eq!(a.history.len(), b.history.len());
    for (ra, rb) in a.history.iter().zip(&b.history) {
        assert_eq!(ra.l_bpr.to_bits(), rb.l_bpr.to_bits(), "epoch {}", ra.epoch);
        assert_eq!(ra.l_cl.to_bits(), rb.l_cl.to_bits());
        assert_eq!(ra.val.recall.to_bits(), rb.val.recall.to_bits());
    }
    for name in a.state.store.names() {
        let xa = a.state.store.get(name).unwrap();
        let xb = b.state.store.get(name).unwrap();
        let bits_a: Vec<u32> = xa.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = xb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "{name}");
    }
}

#[test]
fn msi_item_gradient_flag_updates_item_embeddings() {
    use crate::diffusion::{diffusion_train_step, DiffusionBatch, DiffusionStepConfig};
    use crate::numerics::params::{ADAM_BETAS, ADAM_EPS};

    let bundle = synth_generate::<f64>(&tiny_spec(), &mut SeededRng::new(8)).unwrap();
    let config = tiny_config();
    let run = |item_grad: bool| {
        let mut state = ModelState::init(&config, &bundle).unwrap();
        let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
        let mut rng = SeededRng::new(2);
        let users: Vec<usize> = (0..bundle.n_users).collect();
        let alpha0 = train.interaction_rows(&users);
        let batch = DiffusionBatch::sample(&state.schedule, users, alpha0, &mut rng).unwrap();
        let cfg = DiffusionStepConfig {
            lambda0: 0.5,
            snr_weighted: true,
            msi_item_grad: item_grad,
            lr: 1e-2,
            betas: ADAM_BETAS,
            eps: ADAM_EPS,
        };
        diffusion_train_step(
            &state.denoisers[0],
            &state.aligners[0],
            &state.schedule.clone(),
            &batch,
            &bundle.modalities[0].raw,
            &mut state.store,
            &cfg,
        )
        .unwrap();
        state.store.get("item_emb").unwrap().clone()
    };
    let frozen = run(false);
    let updated = run(true);
    let init = ModelState::init(&config, &bundle)
        .unwrap()
        .store
        .get("item_emb")
        .unwrap()
        .clone();
    assert_eq!(frozen.data(), init.data(), "stop-gradient leaves item embeddings fixed");
    assert_ne!(updated.data(), init.data(), "flag routes gradients into item embeddings");
}

#[test]
fn fit_runs_with_non_default_modes() {
    use crate::modality::AlignerMode;
    use crate::ssl::{AnchorMode, NegativeScope};

    let bundle = synth_generate::<f32>(&tiny_spec(), &mut SeededRng::new(31)).unwrap();
    let config = TrainConfig {
        epochs: 2,
        anchor_mode: AnchorMode::MainView,
        aligner_mode: AlignerMode::ParametricMatrix,
        negative_scope: NegativeScope::Full,
        snr_weight: true,
        kappa_per_dim: true,
        msi_item_grad: true,
        ..tiny_config()
    };
    let a = fit(&bundle, &config).unwrap();
    let b = fit(&bundle, &config).unwrap();
    assert_eq!(a.history.len(), 2);
    for (ra, rb) in a.history.iter().zip(&b.history) {
        assert!(ra.l_bpr.is_finite() && ra.l_cl.is_finite());
        assert_eq!(ra.l_bpr.to_bits(), rb.l_bpr.to_bits());
    }
    assert_eq!(
        a.state.store.get("kappa").unwrap().cols(),
        config.embed_dim,
        "per-dimension modality weights"
    );
}

#[test]
fn fit_learns_on_planted_blocks() {
    let spec = SynthSpec {
        n_users: 40,
        n_items: 24,
        ..tiny_spec()
    };
    let bundle = synth_generate::<f32>(&spec, &mut SeededRng::new(77)).unwrap();
    let mut config = tiny_config();
    config.epochs = 50;
    config.patience = 50;
    config.lr = 1e-2;
    let result = fit(&bundle, &config).unwrap();
    let first_bpr = result.history.first().unwrap().l_bpr;
    let last_bpr = result.history.last().unwrap().l_bpr;
    assert!(last_bpr < first_bpr, "bpr {first_bpr} -> {last_bpr}");
    assert!(result.best_metric > 0.0);
}
