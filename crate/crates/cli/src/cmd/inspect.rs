use std::fs;
use std::path::PathBuf;

use clap::Args;
use diffmm_core::modality::NORM_EPS;
use diffmm_core::numerics::dense::cosine;
use diffmm_core::{Error, Result};

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub modality: String,
    /// Comma-separated item ids to compare.
    #[arg(long)]
    pub items: String,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let items = super::parse_usize_list(&args.items, "item id")?;
    if items.is_empty() {
        return Err(Error::Config("at least one item id required".into()));
    }
    let model = super::load_model(&args.ckpt, &args.data, false)?;
    let m = model
        .state
        .modalities
        .iter()
        .position(|name| *name == args.modality)
        .ok_or_else(|| Error::Config(format!("unknown modality '{}'", args.modality)))?;
    for &i in &items {
        if i >= model.bundle.n_items {
            return Err(Error::Config(format!(
                "item id {i} outside 0..{}",
                model.bundle.n_items
            )));
        }
    }

    let (aligned, _) = model.state.aligners[m]
        .forward(&model.state.store, &model.bundle.modalities[m].raw)?;
    let mut out = String::from("item");
    for &i in &items {
        out.push_str(&format!(",{i}"));
    }
    out.push('\n');
    for &a in &items {
        out.push_str(&a.to_string());
        for &b in &items {
            let sim = cosine(aligned.row(a), aligned.row(b), NORM_EPS as f32);
            out.push_str(&format!(",{sim:.6}"));
        }
        out.push('\n');
    }
    fs::write(&args.out, out)?;
    println!(
        "wrote {}x{} similarity matrix for modality '{}' to {}",
        items.len(),
        items.len(),
        args.modality,
        args.out.display()
    );
    Ok(())
}
