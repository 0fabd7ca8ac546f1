//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::AlignerMode;
use crate::ssl::{AnchorMode, NegativeScope};

/// All knobs of a training run. Unknown JSON keys are rejected; omitted keys
/// fall back to the defaults below so a persisted config is always complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Shared embedding width d.
    pub embed_dim: usize,
    /// GCN propagation depth L.
    pub layers: usize,
    /// Modality-signal weight in the diffusion objective.
    pub lambda0: f64,
    /// Contrastive weight in the recommendation objective.
    pub lambda1: f64,
    /// L2 regularization weight.
    pub lambda2: f64,
    /// Normalized-residual weight in the final aggregation.
    pub omega: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Diffusion chain length T.
    pub diffusion_steps: usize,
    /// Forward-corruption depth T' at inference.
    pub inference_steps: usize,
    /// Edges kept per user when rebuilding modality graphs.
    pub topk: usize,
    /// Noise scale s of the linear schedule.
    pub noise_scale: f64,
    /// Lower schedule bound.
    pub noise_min: f64,
    /// Upper schedule bound.
    pub noise_max: f64,
    /// Sinusoidal step-embedding width.
    pub step_embed_dim: usize,
    /// Denoiser hidden width.
    pub hidden_dim: usize,
    /// Rebuild the generated graphs every this many epochs.
    pub regen_every: usize,
    pub anchor_mode: AnchorMode,
    pub aligner_mode: AlignerMode,
    pub negative_scope: NegativeScope,
    /// Weight the reconstruction loss by the per-step SNR difference.
    pub snr_weight: bool,
    /// Let the modality-signal loss update item id-embeddings.
    pub msi_item_grad: bool,
    /// One weight per embedding dimension per modality instead of a scalar.
    pub kappa_per_dim: bool,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    /// Cutoff of the validation metric used for early stopping.
    pub val_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: 100,
            lr: 1e-3,
            batch_size: 1024,
            embed_dim: 64,
            layers: 1,
            lambda0: 0.1,
            lambda1: 0.1,
            lambda2: 1e-4,
            omega: 0.5,
            tau: 0.5,
            diffusion_steps: 20,
            inference_steps: 10,
            topk: 10,
            noise_scale: 0.1,
            noise_min: 5e-4,
            noise_max: 5e-3,
            step_embed_dim: 10,
            hidden_dim: 1024,
            regen_every: 1,
            anchor_mode: AnchorMode::ModalityView,
            aligner_mode: AlignerMode::Linear,
            negative_scope: NegativeScope::InBatch,
            snr_weight: false,
            msi_item_grad: false,
            kappa_per_dim: false,
            patience: 10,
            val_k: 20,
        }
    }
}

impl TrainConfig {
    /// Parse from JSON with strict unknown-key rejection.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        cfg.validate_standalone()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the dataset dimensions.
    pub fn validate_standalone(&self) -> Result<()> {
        if self.lambda0 < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.omega < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.diffusion_steps < 2 {
            return Err(Error::Config("diffusion_steps must be at least 2".into()));
        }
        if self.inference_steps > self.diffusion_steps {
            return Err(Error::Config(format!(
                "inference_steps {} exceeds diffusion_steps {}",
                self.inference_steps, self.diffusion_steps
            )));
        }
        if !(0.0 < self.noise_min && self.noise_min < self.noise_max && self.noise_max < 1.0) {
            return Err(Error::Config("need 0 < noise_min < noise_max < 1".into()));
        }
        if !(0.0 < self.noise_scale && self.noise_scale <= 1.0) {
            return Err(Error::Config("noise_scale must be in (0, 1]".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.step_embed_dim == 0
            || self.regen_every == 0
            || self.topk == 0
            || self.val_k == 0
        {
            return Err(Error::Config("sizes must be positive".into()));
        }
        Ok(())
    }

    /// Full validation against dataset dimensions.
    pub fn validate(&self, n_items: usize) -> Result<()> {
        self.validate_standalone()?;
        if self.topk > n_items {
            return Err(Error::Config(format!(
                "topk {} exceeds item count {n_items}",
                self.topk
            )));
        }
        if self.val_k > n_items {
            return Err(Error::Config(format!(
                "val_k {} exceeds item count {n_items}",
                self.val_k
            )));
        }
        Ok(())
    }
}
