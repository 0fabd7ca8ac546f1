//! Checkpoint directory: a JSON manifest (config, epoch, metric) plus one
//! binary matrix file per named parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{load_matrix, write_matrix};
use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::training::config::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub epoch: usize,
    pub metric: f64,
    pub config: TrainConfig,
    pub params: Vec<ParamEntry>,
}

fn param_file_name(index: usize, name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("p{index:03}_{safe}.dmmf")
}

/// Write manifest + per-parameter matrix files into `dir` (created if
/// missing; existing files are replaced).
pub fn save_checkpoint<S: Scalar>(
    dir: &Path,
    config: &TrainConfig,
    epoch: usize,
    metric: f64,
    store: &ParamStore<S>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    for (index, name) in store.names().map(str::to_string).enumerate().collect::<Vec<_>>() {
        let value = store.get(&name)?;
        let file = param_file_name(index, &name);
        write_matrix(&dir.join(&file), value)?;
        params.push(ParamEntry {
            name,
            rows: value.rows(),
            cols: value.cols(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        epoch,
        metric,
        config: config.clone(),
        params,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(format!("checkpoint manifest: {e}")))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Load a checkpoint directory into a fresh parameter store.
pub fn load_checkpoint<S: Scalar>(dir: &Path) -> Result<(CheckpointManifest, ParamStore<S>)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("checkpoint manifest: {e}")))?;
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let value = load_matrix::<S>(&dir.join(&entry.file))?;
        if value.rows() != entry.rows || value.cols() != entry.cols {
            return Err(Error::Data(format!(
                "parameter '{}': file is {}x{}, manifest says {}x{}",
                entry.name,
                value.rows(),
                value.cols(),
                entry.rows,
                entry.cols
            )));
        }
        store.register(&entry.name, value)?;
    }
    Ok((manifest, store))
}
