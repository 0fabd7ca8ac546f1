use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use diffmm_core::dataio::{dataset_dir, load_bundle};
use diffmm_core::training::checkpoint::{load_checkpoint, save_checkpoint};
use diffmm_core::training::{fit_with, EpochRecord, ModelState, TrainConfig};
use diffmm_core::{Error, Result, SeededRng};

#[derive(Args)]
pub struct TrainArgs {
    /// Training config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the last checkpoint in the output directory,
    /// keeping its config and epoch numbering.
    #[arg(long)]
    pub resume: bool,
    /// Override the configured epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn history_header(modalities: &[String], val_k: usize) -> String {
    let mut cols = vec!["epoch".to_string()];
    for m in modalities {
        cols.push(format!("l_elbo_{m}"));
        cols.push(format!("l_msi_{m}"));
    }
    cols.push("l_bpr".into());
    cols.push("l_cl".into());
    cols.push(format!("val_recall@{val_k}"));
    cols.push(format!("val_precision@{val_k}"));
    cols.push(format!("val_ndcg@{val_k}"));
    cols.join(",")
}

fn history_row(record: &EpochRecord) -> String {
    let mut cols = vec![record.epoch.to_string()];
    for (elbo, msi) in &record.l_dm {
        cols.push(format!("{elbo:.6}"));
        cols.push(format!("{msi:.6}"));
    }
    cols.push(format!("{:.6}", record.l_bpr));
    cols.push(format!("{:.6}", record.l_cl));
    cols.push(format!("{:.6}", record.val.recall));
    cols.push(format!("{:.6}", record.val.precision));
    cols.push(format!("{:.6}", record.val.ndcg));
    cols.join(",")
}

/// Rebuild the generated graphs exactly as they stood after the last
/// regeneration epoch of an interrupted run.
fn restore_graphs(
    state: &mut ModelState<f32>,
    train: &diffmm_core::graph::InteractionGraph<f32>,
    last_epoch: usize,
) -> Result<()> {
    if last_epoch == 0 {
        return Ok(());
    }
    let regen_every = state.config.regen_every;
    let last_regen = last_epoch - (last_epoch - 1) % regen_every;
    let epoch_rng = SeededRng::new(state.config.seed).derive(1000 + last_regen as u64);
    let mut rng = epoch_rng.derive(2000);
    state.regenerate_graphs(train, &mut rng)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let bundle = load_bundle::<f32>(&dataset_dir(&args.data))?;

    let (mut state, start_epoch) = if args.resume {
        if args.config.is_some() {
            return Err(Error::Config(
                "--resume reuses the persisted config; do not pass --config".into(),
            ));
        }
        let (manifest, store) = load_checkpoint::<f32>(&args.out.join("ckpt_last"))?;
        let state = ModelState::from_store(&manifest.config, &bundle, store)?;
        (state, manifest.epoch + 1)
    } else {
        let config = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                TrainConfig::from_json(&text)?
            }
            None => TrainConfig::default(),
        };
        config.validate(bundle.n_items)?;
        (ModelState::init(&config, &bundle)?, 1)
    };
    if let Some(epochs) = args.epochs {
        state.config.epochs = epochs;
    }

    let train_graph =
        diffmm_core::graph::InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items)?;
    if args.resume {
        restore_graphs(&mut state, &train_graph, start_epoch - 1)?;
    }

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.json"), state.config.to_json())?;
    let history_path = args.out.join("history.csv");
    if !args.resume || !history_path.exists() {
        fs::write(
            &history_path,
            format!("{}\n", history_header(&state.modalities, state.config.val_k)),
        )?;
    }

    // a resumed run must not demote a better pre-resume best checkpoint
    let mut best_seen = if args.resume {
        load_checkpoint::<f32>(&args.out.join("ckpt_best"))
            .map(|(manifest, _)| manifest.metric)
            .unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };

    let out_dir: &Path = &args.out;
    let result = fit_with(state, &bundle, start_epoch, |state, record, improved| {
        let mut file = fs::OpenOptions::new().append(true).open(&history_path)?;
        writeln!(file, "{}", history_row(record))?;
        save_checkpoint(
            &out_dir.join("ckpt_last"),
            &state.config,
            record.epoch,
            record.val.recall,
            &state.store,
        )?;
        if record.val.recall > best_seen {
            best_seen = record.val.recall;
            save_checkpoint(
                &out_dir.join("ckpt_best"),
                &state.config,
                record.epoch,
                record.val.recall,
                &state.store,
            )?;
        }
        println!(
            "epoch {:>4}  l_bpr {:.6}  l_cl {:.6}  val_recall@{} {:.6}{}",
            record.epoch,
            record.l_bpr,
            record.l_cl,
            state.config.val_k,
            record.val.recall,
            if improved { "  *" } else { "" }
        );
        Ok(())
    })?;

    if result.history.is_empty() && !args.resume {
        // zero-epoch run: persist the initialized parameters so the
        // directory is still a loadable checkpoint
        save_checkpoint(&out_dir.join("ckpt_last"), &result.state.config, 0, 0.0, &result.state.store)?;
        save_checkpoint(&out_dir.join("ckpt_best"), &result.state.config, 0, 0.0, &result.state.store)?;
    }
    println!(
        "finished: best epoch {} with val_recall@{} = {:.6}; checkpoints in {}",
        result.best_epoch,
        result.state.config.val_k,
        result.best_metric,
        args.out.display()
    );
    Ok(())
}
