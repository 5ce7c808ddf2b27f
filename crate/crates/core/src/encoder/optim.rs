use ndarray::Zip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, EncoderInput, Losses, ModelConfig, ModelParams, Targets};
use crate::error::{Error, Result};
use crate::objectives::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 0.01,
            warmup_ratio: 0.1,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && (0.0..=1.0).contains(&self.warmup_ratio);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Linear warmup to `base_lr`, then linear decay to zero at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LinearSchedule {
    pub fn new(base_lr: f64, warmup_ratio: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            warmup_steps: (warmup_ratio * total_steps as f64).ceil() as u64,
            total_steps,
        }
    }

    /// Rate for the 1-based update `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step <= self.warmup_steps && self.warmup_steps > 0 {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.base_lr;
        }
        let left = self.total_steps.saturating_sub(step) as f64;
        self.base_lr * left / (self.total_steps - self.warmup_steps) as f64
    }
}

/// AdamW moments and the number of updates applied so far.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Biases and layer-norm parameters are exempt from weight decay.
fn decays(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !(leaf.starts_with('b') || leaf.ends_with("_b") || leaf.starts_with("ln"))
}

/// One AdamW update with decoupled weight decay.
pub fn adamw_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    cfg: &AdamWConfig,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    state.m.zip_mut(grads, |_, m, g| {
        m.zip_mut_with(g, |m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g)
    });
    state.v.zip_mut(grads, |_, v, g| {
        v.zip_mut_with(g, |v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g)
    });
    let ms = state.m.tensor_refs();
    let vs = state.v.tensor_refs();
    let mut k = 0;
    params.for_each_mut(|name, p| {
        let decay = if decays(name) { lr * cfg.weight_decay } else { 0.0 };
        Zip::from(p).and(ms[k]).and(vs[k]).for_each(|w, &m, &v| {
            *w -= decay * *w;
            *w -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
        });
        k += 1;
    });
}

/// Result of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub losses: Losses,
}

/// Averages gradients over `batch` (sum, then divide) and applies one AdamW
/// update. Dropout randomness is derived from `(config.seed, step)` so a
/// resumed run replays exactly.
pub fn train_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    batch: &[(&EncoderInput, &Targets)],
    config: &ModelConfig,
    adam: &AdamWConfig,
    schedule: &LinearSchedule,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::EmptySample);
    }
    let step = state.step + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, step));
    let mut sum = params.zeros_like();
    let mut losses = Losses::default();
    for (input, targets) in batch {
        let (l, g) = loss_and_grad(params, config, input, targets, Some(&mut rng))?;
        sum.add_scaled(&g, 1.0);
        losses.mlm += l.mlm;
        losses.tsp += l.tsp;
        losses.vmd += l.vmd;
        losses.total += l.total;
    }
    let n = batch.len() as f64;
    sum.scale(1.0 / n);
    losses.mlm /= n;
    losses.tsp /= n;
    losses.vmd /= n;
    losses.total /= n;
    if let Some(head) = losses.non_finite() {
        return Err(Error::Numerics(format!("{head} loss is not finite at step {step}")));
    }
    if !sum.is_finite() {
        return Err(Error::Numerics(format!("non-finite gradient at step {step}")));
    }
    let lr = schedule.lr_at(step);
    adamw_update(params, &sum, state, adam, lr);
    if !params.is_finite() {
        return Err(Error::Numerics(format!("parameters became non-finite at step {step}")));
    }
    Ok(StepReport { step, lr, losses })
}
