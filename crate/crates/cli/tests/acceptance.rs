//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its elapsed time (visible with `--nocapture`).
//!
//! Run with `cargo test -p diffmm-cli --test acceptance`.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use diffmm_core::dataio::{synth_generate, SynthSpec};
use diffmm_core::diffusion::{
    elbo_loss, infer_interactions, msi_loss, posterior_mean_var, q_sample, rebuild_topk_graph,
    DenoiseFn, NoiseSchedule,
};
use diffmm_core::eval::{metrics_at_k, rank_all};
use diffmm_core::fusion::score_pairs;
use diffmm_core::graph::{InteractionGraph, StackedOperator};
use diffmm_core::numerics::params::{finite_diff_grad, grad_relative_error};
use diffmm_core::ssl::{cl_loss, infonce, AnchorMode, ContrastiveConfig, NegativeScope};
use diffmm_core::training::{
    bpr_loss, fit, rec_forward, rec_loss, sample_bpr_triples, ModelState, TrainConfig,
};
use diffmm_core::{Mat64, ParamStore, Result, SeededRng};

fn pass(name: &str, start: Instant, budget_secs: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    println!("[acceptance] {name}: PASS ({elapsed:.2}s, budget {budget_secs:.0}s)");
    assert!(
        elapsed < budget_secs,
        "{name} exceeded its runtime budget: {elapsed:.2}s >= {budget_secs}s"
    );
}

#[test]
fn c01_schedule_exactness() {
    let start = Instant::now();
    for &steps in &[2usize, 5, 20, 50, 200] {
        for &s in &[0.01, 0.1, 0.5, 1.0] {
            for &(lo, hi) in &[(5e-4, 5e-3), (1e-4, 1e-2), (1e-3, 0.1)] {
                let sched = NoiseSchedule::<f64>::build(steps, s, lo, hi).unwrap();
                assert!(
                    (1.0 - sched.gamma_bar(1) - s * lo).abs() < 1e-12,
                    "first endpoint T={steps} s={s}"
                );
                assert!(
                    (1.0 - sched.gamma_bar(steps) - s * hi).abs() < 1e-12,
                    "last endpoint T={steps} s={s}"
                );
                let mut prod = 1.0;
                for t in 1..=steps {
                    prod *= sched.gamma(t);
                    assert!(
                        (prod - sched.gamma_bar(t)).abs() < 1e-10,
                        "cumulative product T={steps} s={s} t={t}"
                    );
                }
            }
        }
    }
    pass("criterion 1 (schedule exactness)", start, 1.0);
}

#[test]
fn c02_forward_marginal_monte_carlo() {
    let start = Instant::now();
    let sched = NoiseSchedule::<f64>::build(10, 1.0, 0.1, 0.8).unwrap();
    let mut rng = SeededRng::new(202);
    let alpha0 = Mat64::from_rows(&[vec![1.0, 0.0, 1.0, 0.0]]).unwrap();
    for &t in &[3usize, 7, 10] {
        let n = 10_000;
        let dim = alpha0.cols();
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for _ in 0..n {
            let noise = rng.gaussian_matrix::<f64>(1, dim);
            let out = q_sample(&sched, &alpha0, &[t], &noise).unwrap();
            for (j, &v) in out.row(0).iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        let want_var = 1.0 - sched.gamma_bar(t);
        for j in 0..dim {
            let mean = sum[j] / n as f64;
            let var = sum_sq[j] / n as f64 - mean * mean;
            let want_mean = sched.gamma_bar(t).sqrt() * alpha0.get(0, j);
            assert!((mean - want_mean).abs() < 0.03, "t={t} coord {j} mean {mean} vs {want_mean}");
            assert!((var - want_var).abs() < 0.03, "t={t} coord {j} var {var} vs {want_var}");
        }
    }
    pass("criterion 2 (forward-marginal Monte Carlo)", start, 10.0);
}

struct Oracle {
    truth: Mat64,
}

impl DenoiseFn<f64> for Oracle {
    fn predict(&self, _: &Mat64, _: &[usize]) -> Result<Mat64> {
        Ok(self.truth.clone())
    }
}

#[test]
fn c03_posterior_endpoint_and_oracle_recovery() {
    let start = Instant::now();
    let sched = NoiseSchedule::<f64>::build(10, 0.1, 5e-4, 5e-3).unwrap();
    let mut rng = SeededRng::new(303);
    let alpha0 = rng.gaussian_matrix::<f64>(3, 6);
    let alpha_t = rng.gaussian_matrix::<f64>(3, 6);

    let (mean, var) = posterior_mean_var(&sched, &alpha_t, &alpha0, 1).unwrap();
    assert_eq!(var, 0.0, "posterior variance at t=1");
    assert_eq!(mean.data(), alpha0.data(), "posterior mean at t=1");

    let mut binary = Mat64::zeros(5, 8);
    for r in 0..5 {
        binary.set(r, r, 1.0);
        binary.set(r, (r + 3) % 8, 1.0);
    }
    let oracle = Oracle { truth: binary.clone() };
    for &t_prime in &[0usize, 5, 10] {
        let mut infer_rng = SeededRng::new(99).derive(t_prime as u64);
        let out = infer_interactions(&oracle, &sched, &binary, t_prime, &mut infer_rng).unwrap();
        let got: Vec<u64> = out.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = binary.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(got, want, "bit-exact recovery at T' = {t_prime}");
    }
    pass("criterion 3 (posterior endpoint, oracle recovery)", start, 5.0);
}

const GRAD_TOL: f64 = 1e-4;
const GRAD_INSTANCES: usize = 20;

#[test]
fn c04_gradient_suite_elbo() {
    let start = Instant::now();
    let sched = NoiseSchedule::<f64>::build(8, 0.3, 1e-3, 5e-2).unwrap();
    for instance in 0..GRAD_INSTANCES {
        let mut rng = SeededRng::new(400 + instance as u64);
        let rows = 2 + instance % 3;
        let cols = 3 + instance % 4;
        let alpha0 = rng.gaussian_matrix::<f64>(rows, cols);
        let steps: Vec<usize> = (0..rows).map(|_| rng.uniform_usize(8) + 1).collect();
        let weighted = instance % 2 == 0;
        let mut store = ParamStore::<f64>::new();
        store.register("pred", rng.gaussian_matrix(rows, cols)).unwrap();
        let (_, grad) = elbo_loss(&sched, store.get("pred").unwrap(), &alpha0, &steps, weighted).unwrap();
        let analytic = BTreeMap::from([("pred".to_string(), grad)]);
        let numeric = finite_diff_grad(
            |s| Ok(elbo_loss(&sched, s.get("pred")?, &alpha0, &steps, weighted)?.0),
            &mut store,
            1e-5,
        )
        .unwrap();
        let rel = grad_relative_error(&analytic, &numeric);
        assert!(rel < GRAD_TOL, "elbo instance {instance}: rel err {rel}");
    }
    pass("criterion 4a (reconstruction-loss gradients)", start, 60.0);
}

#[test]
fn c04_gradient_suite_msi() {
    let start = Instant::now();
    for instance in 0..GRAD_INSTANCES {
        let mut rng = SeededRng::new(440 + instance as u64);
        let batch = 2 + instance % 3;
        let items = 4 + instance % 3;
        let dim = 3 + instance % 2;
        let pred = rng.gaussian_matrix::<f64>(batch, items);
        let alpha0 = rng.gaussian_matrix::<f64>(batch, items);
        let mut store = ParamStore::<f64>::new();
        store.register("emb_mod", rng.gaussian_matrix(items, dim)).unwrap();
        store.register("emb_id", rng.gaussian_matrix(items, dim)).unwrap();
        let (_, grads) = msi_loss(
            &pred,
            &alpha0,
            store.get("emb_mod").unwrap(),
            store.get("emb_id").unwrap(),
        )
        .unwrap();
        let analytic = BTreeMap::from([
            ("emb_mod".to_string(), grads.modality_emb),
            ("emb_id".to_string(), grads.item_emb),
        ]);
        let numeric = finite_diff_grad(
            |s| Ok(msi_loss(&pred, &alpha0, s.get("emb_mod")?, s.get("emb_id")?)?.0),
            &mut store,
            1e-5,
        )
        .unwrap();
        let rel = grad_relative_error(&analytic, &numeric);
        assert!(rel < GRAD_TOL, "msi instance {instance}: rel err {rel}");
    }
    pass("criterion 4b (modality-signal gradients)", start, 60.0);
}

#[test]
fn c04_gradient_suite_infonce() {
    let start = Instant::now();
    for instance in 0..GRAD_INSTANCES {
        let mut rng = SeededRng::new(480 + instance as u64);
        let n_anchor = 2 + instance % 4;
        let n_cand = n_anchor + instance % 3;
        let dim = 3 + instance % 3;
        let tau = [0.1, 0.5, 1.0][instance % 3];
        let mut store = ParamStore::<f64>::new();
        store.register("anchors", rng.gaussian_matrix(n_anchor, dim)).unwrap();
        store.register("cands", rng.gaussian_matrix(n_cand, dim)).unwrap();
        let pos: Vec<usize> = (0..n_anchor).map(|_| rng.uniform_usize(n_cand)).collect();
        let (_, ga, gc) = infonce(
            store.get("anchors").unwrap(),
            store.get("cands").unwrap(),
            &pos,
            tau,
        )
        .unwrap();
        let analytic = BTreeMap::from([("anchors".to_string(), ga), ("cands".to_string(), gc)]);
        let numeric = finite_diff_grad(
            |s| Ok(infonce(s.get("anchors")?, s.get("cands")?, &pos, tau)?.0),
            &mut store,
            1e-5,
        )
        .unwrap();
        let rel = grad_relative_error(&analytic, &numeric);
        assert!(rel < GRAD_TOL, "infonce instance {instance}: rel err {rel}");
    }
    pass("criterion 4c (contrastive gradients)", start, 60.0);
}

#[test]
fn c04_gradient_suite_bpr() {
    let start = Instant::now();
    for instance in 0..GRAD_INSTANCES {
        let mut rng = SeededRng::new(520 + instance as u64);
        let n = 3 + instance % 5;
        let mut store = ParamStore::<f64>::new();
        store.register("pos", rng.gaussian_matrix(1, n)).unwrap();
        store.register("neg", rng.gaussian_matrix(1, n)).unwrap();
        let (_, coeffs) =
            bpr_loss::<f64>(store.get("pos").unwrap().row(0), store.get("neg").unwrap().row(0)).unwrap();
        let mut gp = Mat64::zeros(1, n);
        let mut gn = Mat64::zeros(1, n);
        for (i, &c) in coeffs.iter().enumerate() {
            gp.set(0, i, c);
            gn.set(0, i, -c);
        }
        let analytic = BTreeMap::from([("pos".to_string(), gp), ("neg".to_string(), gn)]);
        let numeric = finite_diff_grad(
            |s| Ok(bpr_loss(s.get("pos")?.row(0), s.get("neg")?.row(0))?.0),
            &mut store,
            1e-5,
        )
        .unwrap();
        let rel = grad_relative_error(&analytic, &numeric);
        assert!(rel < GRAD_TOL, "bpr instance {instance}: rel err {rel}");
    }
    pass("criterion 4d (ranking-loss gradients)", start, 60.0);
}

#[test]
fn c04_gradient_suite_full_objective() {
    let start = Instant::now();
    for instance in 0..GRAD_INSTANCES {
        let rel = full_objective_gradient_error(instance as u64);
        assert!(rel < GRAD_TOL, "full objective instance {instance}: rel err {rel}");
    }
    pass("criterion 4e (full-objective gradients)", start, 60.0);
}

fn full_objective_gradient_error(instance: u64) -> f64 {
    use diffmm_core::training::rec_backward;

    let spec = SynthSpec {
        n_users: 7,
        n_items: 6,
        n_blocks: 2,
        modalities: vec![("v".into(), 5), ("t".into(), 4)],
        noise: 0.2,
        p_intra: 0.5,
        p_cross: 0.05,
        ratios: (0.8, 0.1, 0.1),
    };
    let bundle = synth_generate::<f64>(&spec, &mut SeededRng::new(600 + instance)).unwrap();
    let config = TrainConfig {
        seed: instance,
        embed_dim: 3,
        hidden_dim: 8,
        step_embed_dim: 4,
        diffusion_steps: 4,
        inference_steps: 2,
        topk: 2,
        layers: 1,
        lambda1: 0.2,
        lambda2: 1e-3,
        tau: 0.5,
        anchor_mode: if instance % 2 == 0 { AnchorMode::ModalityView } else { AnchorMode::MainView },
        negative_scope: if instance % 3 == 0 { NegativeScope::Full } else { NegativeScope::InBatch },
        kappa_per_dim: instance % 4 == 0,
        val_k: 3,
        ..TrainConfig::default()
    };
    let mut state = ModelState::init(&config, &bundle).unwrap();
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let op = StackedOperator::from_graph(&train);
    let mut rng = SeededRng::new(700 + instance);
    state.regenerate_graphs(&train, &mut rng).unwrap();

    let triples = sample_bpr_triples(&train.user_items(), bundle.n_items, 5, &mut rng).unwrap();
    let pairs_pos: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.pos)).collect();
    let pairs_neg: Vec<(usize, usize)> = triples.iter().map(|t| (t.user, t.neg)).collect();
    let mut batch_users: Vec<usize> = triples.iter().map(|t| t.user).collect();
    let mut batch_items: Vec<usize> = triples.iter().map(|t| t.pos).collect();
    batch_users.sort_unstable();
    batch_users.dedup();
    batch_items.sort_unstable();
    batch_items.dedup();
    let cl_config = ContrastiveConfig {
        temperature: config.tau,
        anchor_mode: config.anchor_mode,
        negative_scope: config.negative_scope,
    };
    let rec_names = state.rec_param_names();

    // analytic gradient
    state.store.zero_grads();
    let fwd = rec_forward(&state, &bundle, &train, &op).unwrap();
    let (_, coeffs) = bpr_loss(
        &score_pairs(&fwd.hbar, bundle.n_users, &pairs_pos),
        &score_pairs(&fwd.hbar, bundle.n_users, &pairs_neg),
    )
    .unwrap();
    let mut grad_hbar = Mat64::zeros(fwd.hbar.rows(), fwd.hbar.cols());
    for (t, &g) in triples.iter().zip(&coeffs) {
        for c in 0..fwd.hbar.cols() {
            let hu = fwd.hbar.get(t.user, c);
            let hp = fwd.hbar.get(bundle.n_users + t.pos, c);
            let hn = fwd.hbar.get(bundle.n_users + t.neg, c);
            grad_hbar.set(t.user, c, grad_hbar.get(t.user, c) + g * (hp - hn));
            grad_hbar.set(bundle.n_users + t.pos, c, grad_hbar.get(bundle.n_users + t.pos, c) + g * hu);
            grad_hbar.set(bundle.n_users + t.neg, c, grad_hbar.get(bundle.n_users + t.neg, c) - g * hu);
        }
    }
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
    let grad_views: Vec<Mat64> = cl_grads.views.iter().map(|g| g.scaled(config.lambda1)).collect();
    rec_backward(&mut state, &bundle, &train, &op, &fwd, &grad_hbar, Some(&grad_views)).unwrap();
    for name in &rec_names {
        let theta = state.store.get(name).unwrap().clone();
        state.store.accumulate_grad(name, 2.0 * config.lambda2, &theta).unwrap();
    }
    let analytic: BTreeMap<String, Mat64> = rec_names
        .iter()
        .map(|n| (n.clone(), state.store.grad(n).unwrap().clone()))
        .collect();

    // numeric reference via central differences on a probe store
    let mut probe = ParamStore::<f64>::new();
    for name in &rec_names {
        probe.register(name, state.store.get(name).unwrap().clone()).unwrap();
    }
    let loss_fn = |p: &ParamStore<f64>| -> Result<f64> {
        let mut store = state.store.clone();
        for name in p.names() {
            *store.get_mut(name)? = p.get(name)?.clone();
        }
        let trial = ModelState {
            config: state.config.clone(),
            store,
            modalities: state.modalities.clone(),
            denoisers: state.denoisers.clone(),
            aligners: state.aligners.clone(),
            schedule: state.schedule.clone(),
            generated: state.generated.clone(),
            graph_version: state.graph_version,
        };
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
    grad_relative_error(&analytic, &numeric)
}

#[test]
fn c05_metric_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = SeededRng::new(505);
    for instance in 0..100 {
        let scores = rng.gaussian_matrix::<f64>(30, 30);
        let mask: Vec<Vec<usize>> = (0..30)
            .map(|_| (0..30).filter(|_| rng.uniform() < 0.2).collect())
            .collect();
        let test: Vec<Vec<usize>> = (0..30)
            .map(|u| {
                (0..30)
                    .filter(|i| !mask[u].contains(i) && rng.uniform() < 0.25)
                    .collect()
            })
            .collect();
        let k = 1 + rng.uniform_usize(10);
        let ranked = rank_all(&scores, &mask).unwrap();
        let (got, evaluated) = metrics_at_k(&ranked, &test, &[k]).unwrap();

        // brute-force oracle: full sort, direct hit counting
        let (mut recall, mut precision, mut ndcg) = (0.0, 0.0, 0.0);
        let mut users = 0usize;
        for u in 0..30 {
            if test[u].is_empty() {
                continue;
            }
            users += 1;
            let mut order: Vec<usize> = (0..30).collect();
            let masked: Vec<f64> = (0..30)
                .map(|i| if mask[u].contains(&i) { f64::NEG_INFINITY } else { scores.get(u, i) })
                .collect();
            order.sort_by(|&a, &b| masked[b].total_cmp(&masked[a]).then(a.cmp(&b)));
            let mut hits = 0usize;
            let mut dcg = 0.0;
            for (rank0, &item) in order.iter().take(k).enumerate() {
                if test[u].contains(&item) {
                    hits += 1;
                    dcg += 1.0 / ((rank0 + 2) as f64).log2();
                }
            }
            let ideal: f64 = (1..=k.min(test[u].len()))
                .map(|rank| 1.0 / ((rank + 1) as f64).log2())
                .sum();
            recall += hits as f64 / test[u].len() as f64;
            precision += hits as f64 / k as f64;
            ndcg += if ideal > 0.0 { dcg / ideal } else { 0.0 };
        }
        assert_eq!(evaluated, users, "instance {instance}");
        assert_eq!(got[&k].recall, recall / users as f64, "instance {instance} recall");
        assert_eq!(got[&k].precision, precision / users as f64, "instance {instance} precision");
        assert_eq!(got[&k].ndcg, ndcg / users as f64, "instance {instance} ndcg");
    }

    // closed case: single hit at rank 3 with K = 5
    let ranked = vec![vec![0, 1, 4, 2, 3]];
    let test = vec![vec![4]];
    let (m, _) = metrics_at_k(&ranked, &test, &[5]).unwrap();
    assert_eq!(m[&5].ndcg, 0.5);
    pass("criterion 5 (metric oracle equivalence)", start, 10.0);
}

#[test]
fn c06_structural_topk_guarantee() {
    let start = Instant::now();
    let mut rng = SeededRng::new(606);
    for instance in 0..50 {
        let n_users = 5 + rng.uniform_usize(20);
        let n_items = 6 + rng.uniform_usize(20);
        let k = 1 + rng.uniform_usize(n_items);
        let mut scores = rng.gaussian_matrix::<f64>(n_users, n_items);
        // inject ties to exercise the index rule
        for u in 0..n_users {
            if u % 2 == 0 && n_items >= 3 {
                let v = scores.get(u, 0);
                scores.set(u, 1, v);
                scores.set(u, 2, v);
            }
        }
        let gen = rebuild_topk_graph(&scores, k).unwrap();
        assert_eq!(gen.norm().nnz(), k * n_users, "instance {instance} edge count");
        for u in 0..n_users {
            let (cols, _) = gen.scores().row_entries(u);
            assert_eq!(cols.len(), k);
            let row = scores.row(u);
            let mut order: Vec<usize> = (0..n_items).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let mut want = order[..k].to_vec();
            want.sort_unstable();
            assert_eq!(cols, &want[..], "instance {instance} user {u}");
        }
    }
    pass("criterion 6 (structural top-k guarantee)", start, 5.0);
}

/// The seed-fixed planted-block dataset shared by criteria 7 and 8. Four
/// blocks keep the learnable structure well above the random-ranking floor.
fn acceptance_spec() -> SynthSpec {
    SynthSpec {
        n_users: 200,
        n_items: 100,
        n_blocks: 4,
        modalities: vec![("v".into(), 24), ("t".into(), 16)],
        noise: 0.1,
        p_intra: 0.3,
        p_cross: 0.01,
        ratios: (0.8, 0.1, 0.1),
    }
}

fn acceptance_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        epochs: 100,
        lr: 1e-3,
        batch_size: 1024,
        embed_dim: 32,
        layers: 1,
        lambda0: 0.01,
        lambda1: 0.1,
        lambda2: 1e-5,
        omega: 0.5,
        tau: 0.1,
        diffusion_steps: 10,
        inference_steps: 5,
        topk: 10,
        step_embed_dim: 8,
        hidden_dim: 128,
        regen_every: 1,
        patience: 100,
        val_k: 5,
        ..TrainConfig::default()
    }
}

/// Mean validation recall of a uniformly random scorer under the same
/// masking and evaluation path.
fn random_baseline(bundle: &diffmm_core::dataio::DatasetBundle<f32>, k: usize) -> f64 {
    let train = InteractionGraph::<f32>::build(&bundle.train, bundle.n_users, bundle.n_items).unwrap();
    let mut total = 0.0;
    let runs = 5;
    for seed in 0..runs {
        let mut rng = SeededRng::new(9000 + seed);
        let scores = rng.gaussian_matrix::<f32>(bundle.n_users, bundle.n_items);
        let ranked = rank_all(&scores, &train.user_items()).unwrap();
        let mut val_lists = vec![Vec::new(); bundle.n_users];
        for &(u, i) in &bundle.val {
            val_lists[u].push(i);
        }
        for l in &mut val_lists {
            l.sort_unstable();
        }
        let (m, _) = metrics_at_k(&ranked, &val_lists, &[k]).unwrap();
        total += m[&k].recall;
    }
    total / runs as f64
}

#[test]
fn c07_end_to_end_learning_signal() {
    let start = Instant::now();
    let bundle = synth_generate::<f32>(&acceptance_spec(), &mut SeededRng::new(7777)).unwrap();
    let config = acceptance_config(1);
    let result = fit(&bundle, &config).unwrap();

    let baseline = random_baseline(&bundle, 5);
    let trained = result.best_metric;
    println!("[acceptance] criterion 7: recall@5 {trained:.4} vs random {baseline:.4}");
    assert!(
        trained >= 3.0 * baseline,
        "val recall@5 {trained:.4} below 3x random baseline {baseline:.4}"
    );

    let first_elbo: f64 = result.history.first().unwrap().l_dm.iter().map(|(e, _)| e).sum();
    let last_elbo: f64 = result.history.last().unwrap().l_dm.iter().map(|(e, _)| e).sum();
    assert!(
        last_elbo <= 0.5 * first_elbo,
        "reconstruction loss did not halve: {first_elbo:.4} -> {last_elbo:.4}"
    );
    pass("criterion 7 (end-to-end learning signal)", start, 300.0);
}

#[test]
fn c08_ablation_ordering() {
    let start = Instant::now();
    let bundle = synth_generate::<f32>(&acceptance_spec(), &mut SeededRng::new(7777)).unwrap();
    let seeds = [1u64, 2, 3, 4, 5];
    let mut means = BTreeMap::new();
    for (label, tweak) in [
        ("full", None),
        ("wo_cl", Some("lambda1")),
        ("wo_msi", Some("lambda0")),
    ] {
        let mut total = 0.0;
        for &seed in &seeds {
            let mut config = acceptance_config(seed);
            config.epochs = 40;
            config.patience = 40;
            match tweak {
                Some("lambda1") => config.lambda1 = 0.0,
                Some("lambda0") => config.lambda0 = 0.0,
                _ => {}
            }
            let result = fit(&bundle, &config).unwrap();
            total += result.best_metric;
        }
        means.insert(label, total / seeds.len() as f64);
    }
    println!(
        "[acceptance] criterion 8: full {:.4}, w/o CL {:.4}, w/o MSI {:.4}",
        means["full"], means["wo_cl"], means["wo_msi"]
    );
    assert!(
        means["full"] >= means["wo_cl"],
        "full model below the no-contrastive ablation"
    );
    assert!(
        means["full"] >= means["wo_msi"],
        "full model below the no-signal-injection ablation"
    );
    pass("criterion 8 (ablation ordering)", start, 1200.0);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffmm"))
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn diffmm");
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn c09_case_study_similarity_structure() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    run_ok(bin().args([
        "synth",
        "--users", "40",
        "--items", "20",
        "--blocks", "2",
        "--modalities", "v:12,t:8",
        "--noise", "0",
        "--seed", "11",
        "--out", data.to_str().unwrap(),
    ]));
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"epochs": 1, "embed_dim": 8, "hidden_dim": 32, "diffusion_steps": 4,
           "inference_steps": 2, "topk": 3, "step_embed_dim": 4, "val_k": 5,
           "seed": 5}"#,
    )
    .unwrap();
    run_ok(bin().args([
        "train",
        "--config", config.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
    ]));
    // items 0..9 are block 0, 10..19 block 1
    let sim_path = dir.path().join("sim.csv");
    run_ok(bin().args([
        "inspect",
        "--ckpt", run.join("ckpt_best").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--modality", "v",
        "--items", "0,3,7,10,14,19",
        "--out", sim_path.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&sim_path).unwrap();
    let mut rows = text.lines();
    let header: Vec<usize> = rows
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|s| s.parse().unwrap())
        .collect();
    let mut sims = Vec::new();
    for line in rows {
        let mut parts = line.split(',');
        let item: usize = parts.next().unwrap().parse().unwrap();
        let values: Vec<f64> = parts.map(|v| v.parse().unwrap()).collect();
        sims.push((item, values));
    }
    let block = |i: usize| if i < 10 { 0 } else { 1 };
    let mut min_intra = f64::INFINITY;
    let mut max_cross = f64::NEG_INFINITY;
    for (a, values) in &sims {
        for (j, &v) in values.iter().enumerate() {
            let b = header[j];
            if *a == b {
                assert!((v - 1.0).abs() < 1e-5, "self-similarity of {a}");
            } else if block(*a) == block(b) {
                min_intra = min_intra.min(v);
            } else {
                max_cross = max_cross.max(v);
            }
        }
    }
    println!("[acceptance] criterion 9: min intra {min_intra:.4}, max cross {max_cross:.4}");
    assert!(
        min_intra >= max_cross,
        "intra-block similarity {min_intra} below cross-block {max_cross}"
    );
    pass("criterion 9 (case-study similarity structure)", start, 10.0);
}

#[test]
fn c10_byte_identical_reruns() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(bin().args([
        "synth",
        "--users", "50",
        "--items", "30",
        "--seed", "21",
        "--modalities", "v:10,t:6",
        "--out", data.to_str().unwrap(),
    ]));
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"epochs": 3, "embed_dim": 8, "hidden_dim": 32, "diffusion_steps": 4,
           "inference_steps": 2, "topk": 3, "step_embed_dim": 4, "val_k": 5,
           "seed": 9}"#,
    )
    .unwrap();
    let mut artifacts = Vec::new();
    for run_ix in 0..2 {
        let run = dir.path().join(format!("run{run_ix}"));
        run_ok(bin().args([
            "train",
            "--config", config.to_str().unwrap(),
            "--data", data.to_str().unwrap(),
            "--out", run.to_str().unwrap(),
        ]));
        run_ok(bin().args([
            "eval",
            "--ckpt", run.join("ckpt_best").to_str().unwrap(),
            "--data", data.to_str().unwrap(),
            "--k", "5,10",
            "--groups", "5,10",
        ]));
        let history = std::fs::read(run.join("history.csv")).unwrap();
        let report_json = std::fs::read(run.join("ckpt_best").join("report.json")).unwrap();
        let report_txt = std::fs::read(run.join("ckpt_best").join("report.txt")).unwrap();
        artifacts.push((history, report_json, report_txt));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "history files differ");
    assert_eq!(artifacts[0].1, artifacts[1].1, "json reports differ");
    assert_eq!(artifacts[0].2, artifacts[1].2, "text reports differ");
    pass("criterion 10 (byte-identical reruns)", start, 300.0);
}
