use std::fs;
use std::path::PathBuf;

use clap::Args;
use diffmm_core::diffusion::rebuild_topk_graph;
use diffmm_core::{Error, Result};

#[derive(Args)]
pub struct DiffuseArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub modality: String,
    /// Edges kept per user; defaults to the trained config's value.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Output TSV path (user, item, score).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: DiffuseArgs) -> Result<()> {
    let model = super::load_model(&args.ckpt, &args.data, false)?;
    let m = model
        .state
        .modalities
        .iter()
        .position(|name| *name == args.modality)
        .ok_or_else(|| Error::Config(format!("unknown modality '{}'", args.modality)))?;
    let k = args.topk.unwrap_or(model.state.config.topk);

    let mut rng = model.state.serving_rng().derive(m as u64);
    let scores = model.state.generate_scores(&model.train, m, &mut rng)?;
    let gen = rebuild_topk_graph(&scores, k)?;

    let mut out = String::new();
    for u in 0..gen.n_users() {
        let (cols, vals) = gen.scores().row_entries(u);
        let mut entries: Vec<(usize, f32)> = cols.iter().copied().zip(vals.iter().copied()).collect();
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
        for (item, score) in entries {
            out.push_str(&format!("{u}\t{item}\t{score:.6}\n"));
        }
    }
    fs::write(&args.out, out)?;
    println!(
        "wrote {} edges ({} per user) for modality '{}' to {}",
        gen.n_users() * k,
        k,
        args.modality,
        args.out.display()
    );
    Ok(())
}
