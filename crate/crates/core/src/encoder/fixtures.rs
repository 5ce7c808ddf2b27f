use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncoderInput, ModelConfig, ModelParams, Targets};
use crate::dom::TagVocab;
use crate::visual::{NormalizedBox, PATCH_INPUTS};

pub fn small_config(hidden: usize, layers: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 23,
        grid_side: 4,
        max_positions: 32,
        seed: 11,
        ..ModelConfig::sized(hidden, layers, heads, 23, TagVocab::default().len())
    }
}

pub fn params(config: &ModelConfig) -> ModelParams {
    ModelParams::init(config, &TagVocab::default(), None).unwrap()
}

/// Params with larger weights so nonlinearities are exercised.
pub fn spread_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = params(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.for_each_mut(|_, t| t.mapv_inplace(|v| v * 10.0 + rng.random_range(-0.05..0.05)));
    p
}

fn random_box(rng: &mut ChaCha8Rng) -> NormalizedBox {
    let x0 = rng.random_range(0..900u16);
    let y0 = rng.random_range(0..900u16);
    let x1 = rng.random_range(x0..=1000);
    let y1 = rng.random_range(y0..=1000);
    NormalizedBox::new(x0, x1, y0, y1).unwrap()
}

pub fn record(config: &ModelConfig, len: usize, seed: u64) -> (EncoderInput, Targets) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = config.grid_side * config.grid_side;
    let input = EncoderInput {
        ids: (0..len)
            .map(|_| rng.random_range(0..config.vocab_size as u32))
            .collect(),
        tags: (0..len)
            .map(|_| rng.random_range(0..config.tag_vocab_size as u16))
            .collect(),
        segments: (0..len).map(|i| u8::from(i >= len / 2)).collect(),
        boxes: (0..len).map(|_| random_box(&mut rng)).collect(),
        patch_stats: Array2::from_shape_fn((cells, PATCH_INPUTS), |_| rng.random::<f64>()),
    };
    let targets = Targets {
        mlm: (0..len)
            .step_by(3)
            .map(|p| (p, rng.random_range(0..config.vocab_size as u32)))
            .collect(),
        tsp: (0..len.min(4))
            .map(|k| (k, len - 1 - k, rng.random_range(0..3)))
            .collect(),
        vmd: (0..len).map(|p| (p, rng.random::<bool>())).collect(),
    };
    (input, targets)
}
