//! Small reference transformer encoder with hand-written backpropagation.
//!
//! Everything runs in `f64` so that gradients can be checked against
//! central finite differences.

mod checkpoint;
#[cfg(test)]
mod fixtures;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CheckpointMeta, DType, Tensor, TrainingState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{compute_losses, cross_entropy, Losses};
pub use model::{embed_input, encode, evaluate, forward_hidden, loss_and_grad, EncoderInput, Targets, LAYER_NORM_EPS};
pub use optim::{adamw_update, train_step, AdamWConfig, LinearSchedule, OptimizerState, StepReport};
pub use params::{EmbeddingTables, Heads, LayerParams, ModelParams, INIT_STD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub vocab_size: usize,
    pub tag_vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub seed: u64,
    pub grid_side: usize,
    pub mlm_weight: f64,
    pub tsp_weight: f64,
    pub vmd_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 48,
            layers: 2,
            heads: 4,
            ff: 192,
            vocab_size: 1000,
            tag_vocab_size: crate::dom::TagVocab::default().len(),
            max_positions: 512,
            dropout: 0.0,
            seed: 0,
            grid_side: crate::visual::GRID_SIDE,
            mlm_weight: 1.0,
            tsp_weight: 1.0,
            vmd_weight: 1.0,
        }
    }
}

impl ModelConfig {
    /// Defaults with the feed-forward width tied to `4 * hidden`.
    pub fn sized(hidden: usize, layers: usize, heads: usize, vocab_size: usize, tag_vocab_size: usize) -> Self {
        Self {
            hidden,
            layers,
            heads,
            ff: 4 * hidden,
            vocab_size,
            tag_vocab_size,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ff", self.ff),
            ("vocab_size", self.vocab_size),
            ("tag_vocab_size", self.tag_vocab_size),
            ("max_positions", self.max_positions),
            ("grid_side", self.grid_side),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.hidden.is_multiple_of(6) {
            return Err(Error::Config(format!("hidden {} is not divisible by 6", self.hidden)));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden {} is not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        for (name, w) in [
            ("mlm_weight", self.mlm_weight),
            ("tsp_weight", self.tsp_weight),
            ("vmd_weight", self.vmd_weight),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}
