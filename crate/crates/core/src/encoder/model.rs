use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::head_losses;
use super::{LayerParams, Losses, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::input::TokenSequence;
use crate::objectives::ObjectiveSample;
use crate::tokenizer::PAD_ID;
use crate::visual::{box_embed, pool_cells, ros_pool, FeatureGrid, NormalizedBox, COORD_MAX, PATCH_INPUTS};

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Everything the encoder reads for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub ids: Vec<u32>,
    pub tags: Vec<u16>,
    /// 0 for structure, 1 for content.
    pub segments: Vec<u8>,
    pub boxes: Vec<NormalizedBox>,
    /// `side² × 5` patch statistics of the resized screenshot.
    pub patch_stats: Array2<f64>,
}

impl EncoderInput {
    /// Clean input: the sequence's own ids with the given boxes.
    pub fn from_sequence(seq: &TokenSequence, boxes: &[NormalizedBox], patch_stats: Array2<f64>) -> Result<Self> {
        let input = Self {
            ids: seq.ids(),
            tags: seq.tokens.iter().map(|t| t.tag.0).collect(),
            segments: seq.tokens.iter().map(|t| t.segment.index() as u8).collect(),
            boxes: boxes.to_vec(),
            patch_stats,
        };
        input.check_lengths()?;
        Ok(input)
    }

    /// Training input: MLM-corrupted ids and VMD-effective boxes.
    pub fn from_sample(seq: &TokenSequence, sample: &ObjectiveSample, patch_stats: Array2<f64>) -> Result<Self> {
        let mut input = Self::from_sequence(seq, &sample.vmd.boxes, patch_stats)?;
        if sample.mlm.input_ids.len() != input.ids.len() {
            return Err(Error::Alignment(format!(
                "{} MLM ids for {} tokens",
                sample.mlm.input_ids.len(),
                input.ids.len()
            )));
        }
        input.ids = sample.mlm.input_ids.clone();
        Ok(input)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn check_lengths(&self) -> Result<()> {
        let n = self.ids.len();
        for (name, len) in [
            ("tags", self.tags.len()),
            ("segments", self.segments.len()),
            ("boxes", self.boxes.len()),
        ] {
            if len != n {
                return Err(Error::Alignment(format!("{len} {name} for {n} tokens")));
            }
        }
        if self.patch_stats.ncols() != PATCH_INPUTS {
            return Err(Error::Alignment(format!(
                "patch statistics have {} columns, expected {PATCH_INPUTS}",
                self.patch_stats.ncols()
            )));
        }
        Ok(())
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        self.check_lengths()?;
        if self.is_empty() {
            return Err(Error::EmptySample);
        }
        if self.len() > config.max_positions {
            return Err(Error::Alignment(format!(
                "{} tokens exceed {} positions",
                self.len(),
                config.max_positions
            )));
        }
        if self.patch_stats.nrows() != config.grid_side * config.grid_side {
            return Err(Error::Alignment(format!(
                "{} patch rows for a {}x{} grid",
                self.patch_stats.nrows(),
                config.grid_side,
                config.grid_side
            )));
        }
        if let Some(id) = self.ids.iter().find(|&&id| id as usize >= config.vocab_size) {
            return Err(Error::Alignment(format!(
                "token id {id} outside vocabulary of {}",
                config.vocab_size
            )));
        }
        if let Some(t) = self.tags.iter().find(|&&t| t as usize >= config.tag_vocab_size) {
            return Err(Error::Alignment(format!(
                "tag id {t} outside vocabulary of {}",
                config.tag_vocab_size
            )));
        }
        if self.segments.iter().any(|&s| s > 1) {
            return Err(Error::Alignment("segment index above 1".into()));
        }
        if self
            .boxes
            .iter()
            .any(|b| b.x1 > COORD_MAX || b.y1 > COORD_MAX || b.x0 > b.x1 || b.y0 > b.y1)
        {
            return Err(Error::Alignment("box outside the normalized range".into()));
        }
        Ok(())
    }
}

/// Supervision for one record, as row indices into the hidden states.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Targets {
    /// `(position, original token id)`
    pub mlm: Vec<(usize, u32)>,
    /// `(structure position, content position, relation index)`
    pub tsp: Vec<(usize, usize, usize)>,
    /// `(position, perturbed)` for every non-padding position.
    pub vmd: Vec<(usize, bool)>,
}

impl Targets {
    pub fn from_sample(sample: &ObjectiveSample) -> Self {
        let mlm = sample.mlm.selected().collect();
        let tsp = sample
            .tsp
            .iter()
            .map(|p| (p.structure_pos as usize, p.content_pos as usize, p.label.index()))
            .collect();
        let vmd = sample
            .mlm
            .input_ids
            .iter()
            .zip(&sample.vmd.directions)
            .enumerate()
            .filter(|(_, (&id, _))| id != PAD_ID)
            .map(|(i, (_, d))| (i, d.is_some()))
            .collect();
        Self { mlm, tsp, vmd }
    }

    fn check(&self, len: usize) -> Result<()> {
        let bad = self.mlm.iter().any(|&(p, _)| p >= len)
            || self.tsp.iter().any(|&(s, c, l)| s >= len || c >= len || l >= 3)
            || self.vmd.iter().any(|&(p, _)| p >= len);
        if bad {
            return Err(Error::Alignment(format!("target index outside a {len}-token record")));
        }
        Ok(())
    }
}

fn feature_grid(input: &EncoderInput, params: &ModelParams, side: usize) -> FeatureGrid {
    FeatureGrid {
        side,
        cells: input.patch_stats.dot(&params.emb.patch_w) + &params.emb.patch_b,
    }
}

/// Input layer: row `i` is `tok + tag + pos1d + seg` plus `ros_pool + box_embed`.
pub fn embed_input(input: &EncoderInput, grid: &FeatureGrid, params: &ModelParams) -> Result<Array2<f64>> {
    input.check_lengths()?;
    let e = &params.emb;
    let c = e.tok.ncols();
    if grid.dim() != c || e.x.ncols() * 6 != c {
        return Err(Error::Alignment(format!(
            "feature grid width {} for hidden {c}",
            grid.dim()
        )));
    }
    if input.len() > e.pos.nrows() {
        return Err(Error::Alignment(format!(
            "{} tokens exceed {} positions",
            input.len(),
            e.pos.nrows()
        )));
    }
    let mut x = Array2::zeros((input.len(), c));
    for i in 0..input.len() {
        let t = &e.tok.row(input.ids[i] as usize)
            + &e.tag.row(input.tags[i] as usize)
            + e.pos.row(i)
            + e.seg.row(input.segments[i] as usize);
        let b = &input.boxes[i];
        let v = ros_pool(grid, b) + box_embed(b, &e.x, &e.y);
        x.row_mut(i).assign(&(t + v));
    }
    Ok(x)
}

fn embed_backward(input: &EncoderInput, dx: &Array2<f64>, side: usize, grads: &mut ModelParams) {
    let g = &mut grads.emb;
    let d = g.x.ncols();
    let mut dgrid = Array2::<f64>::zeros((side * side, dx.ncols()));
    for i in 0..input.len() {
        let row = dx.row(i);
        let mut r = g.tok.row_mut(input.ids[i] as usize);
        r += &row;
        let mut r = g.tag.row_mut(input.tags[i] as usize);
        r += &row;
        let mut r = g.pos.row_mut(i);
        r += &row;
        let mut r = g.seg.row_mut(input.segments[i] as usize);
        r += &row;
        let b = &input.boxes[i];
        let cells = pool_cells(side, b);
        let share = &row / cells.len() as f64;
        for &k in &cells {
            let mut r = dgrid.row_mut(k);
            r += &share;
        }
        for (k, &v) in b.features().iter().enumerate() {
            let table = if k < 3 { &mut g.x } else { &mut g.y };
            let mut r = table.row_mut(v as usize);
            r += &row.slice(s![k * d..(k + 1) * d]);
        }
    }
    g.patch_w += &input.patch_stats.t().dot(&dgrid);
    g.patch_b += &dgrid.sum_axis(Axis(0)).insert_axis(Axis(0));
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let k = *inv;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * g + b;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    g: &Array2<f64>,
    dg: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * g;
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for r in 0..dy.nrows() {
        let dh = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_dh = dh.sum() / n;
        let mean_dhx = dh.dot(&xh) / n;
        let inv = cache.inv_std[r];
        dx.row_mut(r).assign(&((&dh - mean_dh - &xh * mean_dhx) * inv));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln1: NormCache,
    h1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ff_mask: Option<Array2<f64>>,
    ln2: NormCache,
}

fn layer_forward(
    x: &Array2<f64>,
    p: &LayerParams,
    heads: usize,
    dropout: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, LayerCache) {
    let (n, c) = x.dim();
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let q = x.dot(&p.wq) + &p.bq;
    let k = x.dot(&p.wk) + &p.bk;
    let v = x.dot(&p.wv) + &p.bv;
    let mut ctx = Array2::zeros((n, c));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * d..(h + 1) * d];
        let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut sc);
        ctx.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
        probs.push(sc);
    }
    let mut attn = ctx.dot(&p.wo) + &p.bo;
    let attn_mask = match rng.as_deref_mut() {
        Some(r) if dropout > 0.0 => Some(dropout_mask((n, c), dropout, r)),
        _ => None,
    };
    if let Some(m) = &attn_mask {
        attn *= m;
    }
    let (h1, ln1) = layer_norm(&(x + &attn), &p.ln1_g, &p.ln1_b);
    let pre_act = h1.dot(&p.w1) + &p.b1;
    let act = pre_act.mapv(gelu);
    let mut ff = act.dot(&p.w2) + &p.b2;
    let ff_mask = match rng.as_deref_mut() {
        Some(r) if dropout > 0.0 => Some(dropout_mask((n, c), dropout, r)),
        _ => None,
    };
    if let Some(m) = &ff_mask {
        ff *= m;
    }
    let (out, ln2) = layer_norm(&(&h1 + &ff), &p.ln2_g, &p.ln2_b);
    let cache = LayerCache {
        x: x.clone(),
        q,
        k,
        v,
        probs,
        ctx,
        attn_mask,
        ln1,
        h1,
        pre_act,
        act,
        ff_mask,
        ln2,
    };
    (out, cache)
}

fn layer_backward(
    dout: &Array2<f64>,
    cache: &LayerCache,
    p: &LayerParams,
    g: &mut LayerParams,
    heads: usize,
) -> Array2<f64> {
    let c = dout.ncols();
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();

    let dr2 = layer_norm_backward(dout, &cache.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
    let mut dff = dr2.clone();
    if let Some(m) = &cache.ff_mask {
        dff *= m;
    }
    g.w2 += &cache.act.t().dot(&dff);
    g.b2 += &dff.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dact = dff.dot(&p.w2.t());
    let dpre = dact * &cache.pre_act.mapv(gelu_grad);
    g.w1 += &cache.h1.t().dot(&dpre);
    g.b1 += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dh1 = dr2 + dpre.dot(&p.w1.t());

    let dr1 = layer_norm_backward(&dh1, &cache.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    let mut dattn = dr1.clone();
    if let Some(m) = &cache.attn_mask {
        dattn *= m;
    }
    g.wo += &cache.ctx.t().dot(&dattn);
    g.bo += &dattn.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dctx = dattn.dot(&p.wo.t());

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for h in 0..heads {
        let cols = s![.., h * d..(h + 1) * d];
        let probs = &cache.probs[h];
        let dc = dctx.slice(cols);
        dv.slice_mut(cols).assign(&probs.t().dot(&dc));
        let dp = dc.dot(&cache.v.slice(cols).t());
        let row_dot = (&dp * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = (dp - &row_dot) * probs * scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let x = &cache.x;
    g.wq += &x.t().dot(&dq);
    g.bq += &dq.sum_axis(Axis(0)).insert_axis(Axis(0));
    g.wk += &x.t().dot(&dk);
    g.bk += &dk.sum_axis(Axis(0)).insert_axis(Axis(0));
    g.wv += &x.t().dot(&dv);
    g.bv += &dv.sum_axis(Axis(0)).insert_axis(Axis(0));
    dr1 + dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t())
}

fn check_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerics(format!("non-finite values in {what}")))
    }
}

/// Runs the transformer layers over embedded inputs (no dropout).
pub fn encode(x: &Array2<f64>, layers: &[LayerParams], heads: usize) -> Result<Array2<f64>> {
    check_finite(x, "encoder input")?;
    let mut h = x.clone();
    for p in layers {
        h = layer_forward(&h, p, heads, 0.0, &mut None).0;
    }
    check_finite(&h, "encoder output")?;
    Ok(h)
}

/// Hidden states for one record, deterministic (dropout disabled).
pub fn forward_hidden(params: &ModelParams, config: &ModelConfig, input: &EncoderInput) -> Result<Array2<f64>> {
    input.check(config)?;
    let grid = feature_grid(input, params, config.grid_side);
    let x = embed_input(input, &grid, params)?;
    encode(&x, &params.layers, config.heads)
}

/// Losses for one record without gradients.
pub fn evaluate(params: &ModelParams, config: &ModelConfig, input: &EncoderInput, targets: &Targets) -> Result<Losses> {
    targets.check(input.len())?;
    let hidden = forward_hidden(params, config, input)?;
    Ok(super::compute_losses(&hidden, targets, &params.heads, config))
}

/// Losses and gradients for one record. Dropout is active only when `rng` is
/// given and the configured rate is positive.
pub fn loss_and_grad(
    params: &ModelParams,
    config: &ModelConfig,
    input: &EncoderInput,
    targets: &Targets,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Losses, ModelParams)> {
    input.check(config)?;
    targets.check(input.len())?;
    let side = config.grid_side;
    let grid = feature_grid(input, params, side);
    let x = embed_input(input, &grid, params)?;
    check_finite(&x, "encoder input")?;

    let emb_mask = match rng.as_deref_mut() {
        Some(r) if config.dropout > 0.0 => Some(dropout_mask(x.dim(), config.dropout, r)),
        _ => None,
    };
    let mut h = match &emb_mask {
        Some(m) => &x * m,
        None => x,
    };
    let mut caches = Vec::with_capacity(params.layers.len());
    for p in &params.layers {
        let (out, cache) = layer_forward(&h, p, config.heads, config.dropout, &mut rng);
        caches.push(cache);
        h = out;
    }

    let mut grads = params.zeros_like();
    let (losses, mut dh) = head_losses(&h, targets, &params.heads, config, Some(&mut grads.heads));
    if let Some(name) = losses.non_finite() {
        return Err(Error::Numerics(format!("{name} loss is not finite")));
    }
    for (i, cache) in caches.iter().enumerate().rev() {
        dh = layer_backward(&dh, cache, &params.layers[i], &mut grads.layers[i], config.heads);
    }
    if let Some(m) = &emb_mask {
        dh *= m;
    }
    embed_backward(input, &dh, side, &mut grads);
    Ok((losses, grads))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{record, small_config, spread_params};
    use super::*;

    fn richardson(f: &mut dyn FnMut(f64) -> f64, h: f64) -> f64 {
        let d = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(h) - f(-h)) / (2.0 * h);
        let (d1, d2, d4) = (d(f, h), d(f, h / 2.0), d(f, h / 4.0));
        let (r1, r2) = ((4.0 * d2 - d1) / 3.0, (4.0 * d4 - d2) / 3.0);
        (16.0 * r2 - r1) / 15.0
    }

    #[test]
    fn layer_jacobian_matches_differences() {
        let cfg = small_config(12, 1, 3);
        let p = spread_params(&cfg, 31);
        let layer = &p.layers[0];
        let x = Array2::from_shape_fn((3, 12), |(i, j)| ((i * 12 + j) as f64 * 0.37).sin());
        let (out, cache) = layer_forward(&x, layer, cfg.heads, 0.0, &mut None);
        let mut worst: f64 = 0.0;
        for o in 0..out.len() {
            let (or, oc) = (o / 12, o % 12);
            let mut dout = Array2::zeros(out.raw_dim());
            dout[[or, oc]] = 1.0;
            let mut scratch = layer.clone();
            scratch.for_each_zero();
            let dx = layer_backward(&dout, &cache, layer, &mut scratch, cfg.heads);
            for i in 0..x.len() {
                let (ir, ic) = (i / 12, i % 12);
                let mut f = |h: f64| {
                    let mut xp = x.clone();
                    xp[[ir, ic]] += h;
                    layer_forward(&xp, layer, cfg.heads, 0.0, &mut None).0[[or, oc]]
                };
                let n = richardson(&mut f, 1e-3);
                let a = dx[[ir, ic]];
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn embedding_gradient_of_sum_counts_uses() {
        let cfg = small_config(12, 0, 2);
        let p = spread_params(&cfg, 32);
        let (input, _) = record(&cfg, 6, 32);
        let mut grads = p.zeros_like();
        let ones = Array2::ones((input.len(), cfg.hidden));
        embed_backward(&input, &ones, cfg.grid_side, &mut grads);
        let sum_at = |params: &ModelParams| {
            let grid = feature_grid(&input, params, cfg.grid_side);
            embed_input(&input, &grid, params).unwrap().sum()
        };
        let analytic = grads.tensor_refs();
        let mut k = 0;
        let mut checked = 0;
        let mut work = p.clone();
        let mut worst: f64 = 0.0;
        let count = analytic.len();
        while k < count {
            let entries = analytic[k].len();
            for idx in (0..entries).step_by(entries / 5 + 1) {
                let mut f = |h: f64| {
                    let mut t = 0;
                    work.for_each_mut(|_, a| {
                        if t == k {
                            *a.iter_mut().nth(idx).unwrap() += h;
                        }
                        t += 1;
                    });
                    let v = sum_at(&work);
                    let mut t = 0;
                    work.for_each_mut(|_, a| {
                        if t == k {
                            *a.iter_mut().nth(idx).unwrap() -= h;
                        }
                        t += 1;
                    });
                    v
                };
                let n = richardson(&mut f, 1e-3);
                let a = *analytic[k].iter().nth(idx).unwrap();
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
                checked += 1;
            }
            k += 1;
        }
        assert!(checked > 20);
        assert!(worst < 1e-4, "{worst}");
    }
}
