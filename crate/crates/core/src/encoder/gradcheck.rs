use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{evaluate, loss_and_grad, EncoderInput, ModelConfig, ModelParams, Targets};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero are judged on absolute error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub tensors: usize,
    /// Entry with the largest error, as `tensor[flat index]`.
    pub worst: String,
}

/// Compares analytic gradients of the total loss with central differences
/// on at least `samples` entries, spread evenly over every tensor. Within a
/// tensor, entries with a non-zero analytic gradient are preferred.
///
/// The numeric estimate combines central differences at steps `epsilon`,
/// `epsilon / 2` and `epsilon / 4` by Richardson extrapolation, cancelling
/// the second- and fourth-order truncation terms.
pub fn grad_check(
    params: &ModelParams,
    config: &ModelConfig,
    input: &EncoderInput,
    targets: &Targets,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if config.dropout != 0.0 {
        return Err(Error::Config("gradient checking requires dropout 0".into()));
    }
    let (_, grads) = loss_and_grad(params, config, input, targets, None)?;
    let mut analytic = Vec::new();
    grads.for_each(|name, t| analytic.push((name.to_string(), t.iter().copied().collect::<Vec<f64>>())));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Vec<usize>> = analytic
        .iter()
        .map(|(_, g)| {
            let active: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
            if active.is_empty() {
                (0..g.len()).collect()
            } else {
                active
            }
        })
        .collect();
    // even split, smallest pools first so their shortfall moves to larger ones
    let mut order: Vec<usize> = (0..pools.len()).collect();
    order.sort_by_key(|&t| pools[t].len());
    let mut quota = vec![0; pools.len()];
    let mut left = samples;
    for (k, &t) in order.iter().enumerate() {
        let share = left.div_ceil(pools.len() - k).max(1);
        quota[t] = share.min(pools[t].len());
        left = left.saturating_sub(quota[t]);
    }
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (ti, pool) in pools.iter().enumerate() {
        picks.extend(
            sample(&mut rng, pool.len(), quota[ti])
                .into_iter()
                .map(|j| (ti, pool[j])),
        );
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        tensors: analytic.len(),
        worst: String::new(),
    };
    for (ti, idx) in picks {
        let mut loss_at = |delta: f64| -> Result<f64> {
            let mut k = 0;
            work.for_each_mut(|_, t| {
                if k == ti {
                    let slot = t.iter_mut().nth(idx).expect("index in range");
                    *slot += delta;
                }
                k += 1;
            });
            let loss = evaluate(&work, config, input, targets).map(|l| l.total);
            let mut k = 0;
            work.for_each_mut(|_, t| {
                if k == ti {
                    let slot = t.iter_mut().nth(idx).expect("index in range");
                    *slot -= delta;
                }
                k += 1;
            });
            loss
        };
        let mut central = |h: f64| -> Result<f64> { Ok((loss_at(h)? - loss_at(-h)?) / (2.0 * h)) };
        let (d1, d2, d4) = (central(epsilon)?, central(epsilon / 2.0)?, central(epsilon / 4.0)?);
        let (r1, r2) = ((4.0 * d2 - d1) / 3.0, (4.0 * d4 - d2) / 3.0);
        let numeric = (16.0 * r2 - r1) / 15.0;
        let a = analytic[ti].1[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = format!("{}[{idx}]", analytic[ti].0);
        }
    }
    Ok(report)
}
