use std::path::PathBuf;

use clap::Args;
use diffmm_core::dataio::{save_bundle, synth_generate, SynthSpec};
use diffmm_core::{Error, Result, SeededRng};

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    /// Modality spec as name:dim pairs, e.g. v:64,t:32
    #[arg(long, default_value = "v:64,t:32")]
    pub modalities: String,
    /// Feature noise around the block centroid.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Intra-block interaction probability.
    #[arg(long = "p-in", default_value_t = 0.3)]
    pub p_in: f64,
    /// Cross-block interaction probability.
    #[arg(long = "p-out", default_value_t = 0.01)]
    pub p_out: f64,
    /// train,val,test split ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_users: args.users,
        n_items: args.items,
        n_blocks: args.blocks,
        modalities: super::parse_modalities(&args.modalities)?,
        noise: args.noise,
        p_intra: args.p_in,
        p_cross: args.p_out,
        ratios: super::parse_ratios(&args.ratios)?,
    };
    let mut rng = SeededRng::new(args.seed);
    let bundle = synth_generate::<f32>(&spec, &mut rng)?;
    if args.out.exists() && args.out.read_dir()?.next().is_some() && !args.force {
        return Err(Error::Config(format!(
            "output directory {} is not empty (use --force to overwrite)",
            args.out.display()
        )));
    }
    save_bundle(&args.out, &bundle)?;
    println!(
        "wrote dataset '{}' ({} users, {} items, {} train / {} val / {} test edges) to {}",
        bundle.name,
        bundle.n_users,
        bundle.n_items,
        bundle.train.len(),
        bundle.val.len(),
        bundle.test.len(),
        args.out.display()
    );
    Ok(())
}
