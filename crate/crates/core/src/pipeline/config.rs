use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{AdamWConfig, DType, ModelConfig};
use crate::error::{Error, Result};
use crate::input::{InputConfig, StructureVocab};
use crate::objectives::ObjectiveConfig;

/// Environment variable that overrides every configured seed.
pub const SEED_ENV: &str = "WEBLM_SEED";

/// Flat run configuration shared by `prep`, `train` and `gradcheck`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub max_seq_len: usize,
    pub seg_min: usize,
    pub seg_max: usize,
    pub structure_budget: usize,
    pub window_stride: usize,
    pub structure_vocab: StructureVocab,

    pub vocab_min_freq: usize,
    pub vocab_max_words: usize,
    pub records_per_shard: usize,

    pub mlm_p: f64,
    pub mlm_mask_frac: f64,
    pub mlm_random_frac: f64,
    pub vmd_p: f64,
    pub vmd_scale: f64,
    pub tsp_max_pairs: usize,
    pub tsp_other_cap: f64,

    pub image_side: usize,
    pub grid_side: usize,

    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub mlm_weight: f64,
    pub tsp_weight: f64,
    pub vmd_weight: f64,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub batch_size: usize,
    /// Schedule horizon; defaults to the number of steps requested.
    pub total_steps: Option<u64>,
    pub checkpoint_dtype: DType,

    pub gradcheck_hidden: usize,
    pub gradcheck_layers: usize,
    pub gradcheck_heads: usize,
    pub gradcheck_samples: usize,
    pub gradcheck_epsilon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let input = InputConfig::default();
        let obj = ObjectiveConfig::default();
        let model = ModelConfig::default();
        let adam = AdamWConfig::default();
        Self {
            seed: 0,
            max_seq_len: input.max_seq_len,
            seg_min: input.seg_min,
            seg_max: input.seg_max,
            structure_budget: input.structure_budget,
            window_stride: input.window_stride,
            structure_vocab: input.structure_vocab,
            vocab_min_freq: 1,
            vocab_max_words: 4000,
            records_per_shard: 256,
            mlm_p: obj.mlm_p,
            mlm_mask_frac: obj.mlm_mask_frac,
            mlm_random_frac: obj.mlm_random_frac,
            vmd_p: obj.vmd_p,
            vmd_scale: obj.vmd_scale,
            tsp_max_pairs: obj.tsp_max_pairs,
            tsp_other_cap: obj.tsp_other_cap,
            image_side: crate::visual::IMAGE_SIDE,
            grid_side: model.grid_side,
            hidden: model.hidden,
            layers: model.layers,
            heads: model.heads,
            ff: model.ff,
            max_positions: model.max_positions,
            dropout: model.dropout,
            mlm_weight: model.mlm_weight,
            tsp_weight: model.tsp_weight,
            vmd_weight: model.vmd_weight,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            warmup_ratio: adam.warmup_ratio,
            batch_size: 8,
            total_steps: None,
            checkpoint_dtype: DType::F64,
            gradcheck_hidden: 12,
            gradcheck_layers: 1,
            gradcheck_heads: 2,
            gradcheck_samples: 240,
            gradcheck_epsilon: 2e-3,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `WEBLM_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Some(seed) = env_seed()? {
            self.seed = seed;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.input().validate()?;
        self.objectives().validate()?;
        self.adam().validate()?;
        if self.batch_size == 0 || self.records_per_shard == 0 || self.image_side == 0 || self.grid_side == 0 {
            return Err(Error::Config(
                "batch_size, records_per_shard, image_side and grid_side must be positive".into(),
            ));
        }
        if self.grid_side > self.image_side {
            return Err(Error::Config("grid_side cannot exceed image_side".into()));
        }
        if self.gradcheck_samples == 0 {
            return Err(Error::Config("gradcheck_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> InputConfig {
        InputConfig {
            max_seq_len: self.max_seq_len,
            seg_min: self.seg_min,
            seg_max: self.seg_max,
            structure_budget: self.structure_budget,
            window_stride: self.window_stride,
            structure_vocab: self.structure_vocab,
        }
    }

    pub fn objectives(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            mlm_p: self.mlm_p,
            mlm_mask_frac: self.mlm_mask_frac,
            mlm_random_frac: self.mlm_random_frac,
            vmd_p: self.vmd_p,
            vmd_scale: self.vmd_scale,
            tsp_max_pairs: self.tsp_max_pairs,
            tsp_other_cap: self.tsp_other_cap,
        }
    }

    pub fn adam(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            warmup_ratio: self.warmup_ratio,
        }
    }

    pub fn model(&self, vocab_size: usize, tag_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ff: self.ff,
            vocab_size,
            tag_vocab_size,
            max_positions: self.max_positions,
            dropout: self.dropout,
            seed: self.seed,
            grid_side: self.grid_side,
            mlm_weight: self.mlm_weight,
            tsp_weight: self.tsp_weight,
            vmd_weight: self.vmd_weight,
        }
    }
}

/// `WEBLM_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(PipelineConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = PipelineConfig::parse("seed = 9\nvmd_scale = 0.1\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.vmd_scale, 0.1);
        assert_eq!(cfg.seg_min, 128);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::parse("sed = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(PipelineConfig::parse("mlm_p = 1.5\n").is_err());
        assert!(PipelineConfig::parse("seg_min = 600\n").is_err());
    }
}
