//! Operator entry points for the diffmm recommender.

mod cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "diffmm",
    version,
    about = "Modality-aware graph diffusion recommender",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for row-parallel kernels; DIFFMM_THREADS mirrors this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-block synthetic dataset directory.
    Synth(cmd::synth::SynthArgs),
    /// Train a model, writing checkpoints and a history CSV.
    Train(cmd::train::TrainArgs),
    /// Evaluate a checkpoint with all-rank top-K metrics.
    Eval(cmd::eval::EvalArgs),
    /// Export a generated modality graph as TSV.
    Diffuse(cmd::diffuse::DiffuseArgs),
    /// Export pairwise aligned-feature similarities for selected items.
    Inspect(cmd::inspect::InspectArgs),
}

fn exit_code(err: &diffmm_core::Error) -> i32 {
    match err {
        diffmm_core::Error::Config(_) => 2,
        diffmm_core::Error::Data(_) | diffmm_core::Error::Io(_) | diffmm_core::Error::Shape(_) => 3,
        diffmm_core::Error::State(_) | diffmm_core::Error::Numeric(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("DIFFMM_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1);
    diffmm_core::numerics::threading::set_workers(threads);

    let result = match cli.command {
        Command::Synth(args) => cmd::synth::run(args),
        Command::Train(args) => cmd::train::run(args),
        Command::Eval(args) => cmd::eval::run(args),
        Command::Diffuse(args) => cmd::diffuse::run(args),
        Command::Inspect(args) => cmd::inspect::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
