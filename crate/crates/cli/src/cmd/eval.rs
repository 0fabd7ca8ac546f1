use std::fs;
use std::path::PathBuf;

use clap::Args;
use diffmm_core::training::evaluate_state;
use diffmm_core::{Error, Result};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated metric cutoffs.
    #[arg(long, default_value = "20")]
    pub k: String,
    /// Sparsity-group bounds on train-interaction counts, e.g. 5,10,20.
    #[arg(long)]
    pub groups: Option<String>,
    /// Split to evaluate: test or val.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report directory; defaults to the checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut ks = super::parse_usize_list(&args.k, "cutoff")?;
    ks.sort_unstable();
    ks.dedup();
    let groups = match &args.groups {
        Some(text) => super::parse_usize_list(text, "group bound")?,
        None => Vec::new(),
    };
    let model = super::load_model(&args.ckpt, &args.data, true)?;
    let edges = match args.split.as_str() {
        "test" => &model.bundle.test,
        "val" => &model.bundle.val,
        other => return Err(Error::Config(format!("unknown split '{other}'"))),
    };
    let report = evaluate_state(
        &model.state,
        &model.bundle,
        &model.train,
        &model.op,
        edges,
        &ks,
        &groups,
    )?;

    let table = report.table();
    print!("{table}");
    let out_dir = args.out.clone().unwrap_or_else(|| args.ckpt.clone());
    fs::create_dir_all(&out_dir)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("report serialization: {e}")))?;
    fs::write(out_dir.join("report.json"), json)?;
    fs::write(out_dir.join("report.txt"), &table)?;
    println!("report written to {}", out_dir.display());
    Ok(())
}
