//! Subcommand implementations and shared loading helpers.

pub mod diffuse;
pub mod eval;
pub mod inspect;
pub mod synth;
pub mod train;

use std::path::Path;

use diffmm_core::dataio::{dataset_dir, load_bundle, DatasetBundle};
use diffmm_core::graph::{InteractionGraph, StackedOperator};
use diffmm_core::training::checkpoint::load_checkpoint;
use diffmm_core::training::ModelState;
use diffmm_core::{Error, Result};

pub fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad {what} entry '{p}'")))
        })
        .collect()
}

/// Parse a `name:dim,name:dim` modality specification.
pub fn parse_modalities(text: &str) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let (name, dim) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad modality spec '{part}', expected name:dim")))?;
        if name.is_empty() {
            return Err(Error::Config(format!("bad modality spec '{part}': empty name")));
        }
        let dim: usize = dim
            .parse()
            .map_err(|_| Error::Config(format!("bad modality spec '{part}': dim not a number")))?;
        out.push((name.to_string(), dim));
    }
    Ok(out)
}

pub fn parse_ratios(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad ratio entry '{p}'")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config("ratios must be train,val,test".into()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

/// A checkpoint rebound to its dataset: state plus the train-graph
/// operators every command needs.
pub struct LoadedModel {
    pub bundle: DatasetBundle<f32>,
    pub state: ModelState<f32>,
    pub train: InteractionGraph<f32>,
    pub op: StackedOperator<f32>,
}

/// Load checkpoint + dataset and rebuild the model around them. When
/// `regen` is set the generated graphs are rebuilt deterministically from
/// the checkpoint seed.
pub fn load_model(ckpt: &Path, data: &Path, regen: bool) -> Result<LoadedModel> {
    let (manifest, store) = load_checkpoint::<f32>(ckpt)?;
    let bundle = load_bundle::<f32>(&dataset_dir(data))?;
    let mut state = ModelState::from_store(&manifest.config, &bundle, store)?;
    let train = InteractionGraph::build(&bundle.train, bundle.n_users, bundle.n_items)?;
    let op = StackedOperator::from_graph(&train);
    if regen {
        state.regenerate_for_serving(&train)?;
    }
    Ok(LoadedModel {
        bundle,
        state,
        train,
        op,
    })
}
