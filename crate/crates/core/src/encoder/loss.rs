use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{Heads, ModelConfig, Targets};

/// Per-task losses and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub mlm: f64,
    pub tsp: f64,
    pub vmd: f64,
    pub total: f64,
}

impl Losses {
    /// Name of the first non-finite task loss.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("mlm", self.mlm),
            ("tsp", self.tsp),
            ("vmd", self.vmd),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Cross-entropy of one logit row against `label`, via log-sum-exp.
pub fn cross_entropy(logits: ArrayView1<'_, f64>, label: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn softmax_row(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

/// Mean cross-entropy of `x · w + b` over rows with `labels`. Returns the
/// loss and, when `grad` is requested, `d loss / d logits` scaled by `scale`.
fn head_loss(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>, labels: &[usize], scale: f64) -> (f64, Array2<f64>) {
    let logits = x.dot(w) + b;
    let n = labels.len() as f64;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        total += cross_entropy(row, label);
        let mut p = softmax_row(row);
        p[label] -= 1.0;
        dlogits.row_mut(r).assign(&(p * (scale / n)));
    }
    (total / n, dlogits)
}

fn gather(hidden: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    hidden.select(Axis(0), rows)
}

fn scatter_add(dhidden: &mut Array2<f64>, rows: &[usize], d: &Array2<f64>) {
    for (k, &r) in rows.iter().enumerate() {
        let mut dst = dhidden.row_mut(r);
        dst += &d.row(k);
    }
}

/// Loss over hidden states. A task with no targets contributes zero.
pub fn compute_losses(hidden: &Array2<f64>, targets: &Targets, heads: &Heads, config: &ModelConfig) -> Losses {
    head_losses(hidden, targets, heads, config, None).0
}

/// Losses plus head gradients (accumulated into `grads`) and `d total / d hidden`.
pub(crate) fn head_losses(
    hidden: &Array2<f64>,
    targets: &Targets,
    heads: &Heads,
    config: &ModelConfig,
    mut grads: Option<&mut Heads>,
) -> (Losses, Array2<f64>) {
    let c = hidden.ncols();
    let mut dhidden = Array2::zeros(hidden.raw_dim());
    let mut losses = Losses::default();

    if !targets.mlm.is_empty() {
        let rows: Vec<usize> = targets.mlm.iter().map(|&(p, _)| p).collect();
        let labels: Vec<usize> = targets.mlm.iter().map(|&(_, l)| l as usize).collect();
        let x = gather(hidden, &rows);
        let (loss, d) = head_loss(&x, &heads.mlm_w, &heads.mlm_b, &labels, config.mlm_weight);
        losses.mlm = loss;
        if let Some(g) = grads.as_deref_mut() {
            g.mlm_w += &x.t().dot(&d);
            g.mlm_b += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
            scatter_add(&mut dhidden, &rows, &d.dot(&heads.mlm_w.t()));
        }
    }

    if !targets.tsp.is_empty() {
        let srows: Vec<usize> = targets.tsp.iter().map(|&(s, _, _)| s).collect();
        let crows: Vec<usize> = targets.tsp.iter().map(|&(_, c, _)| c).collect();
        let labels: Vec<usize> = targets.tsp.iter().map(|&(_, _, l)| l).collect();
        let x = ndarray::concatenate![Axis(1), gather(hidden, &srows), gather(hidden, &crows)];
        let (loss, d) = head_loss(&x, &heads.tsp_w, &heads.tsp_b, &labels, config.tsp_weight);
        losses.tsp = loss;
        if let Some(g) = grads.as_deref_mut() {
            g.tsp_w += &x.t().dot(&d);
            g.tsp_b += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dx = d.dot(&heads.tsp_w.t());
            scatter_add(&mut dhidden, &srows, &dx.slice(ndarray::s![.., ..c]).to_owned());
            scatter_add(&mut dhidden, &crows, &dx.slice(ndarray::s![.., c..]).to_owned());
        }
    }

    if !targets.vmd.is_empty() {
        let rows: Vec<usize> = targets.vmd.iter().map(|&(p, _)| p).collect();
        let labels: Vec<usize> = targets.vmd.iter().map(|&(_, l)| l as usize).collect();
        let x = gather(hidden, &rows);
        let (loss, d) = head_loss(&x, &heads.vmd_w, &heads.vmd_b, &labels, config.vmd_weight);
        losses.vmd = loss;
        if let Some(g) = grads {
            g.vmd_w += &x.t().dot(&d);
            g.vmd_b += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
            scatter_add(&mut dhidden, &rows, &d.dot(&heads.vmd_w.t()));
        }
    }

    losses.total = config.mlm_weight * losses.mlm + config.tsp_weight * losses.tsp + config.vmd_weight * losses.vmd;
    (losses, dhidden)
}
