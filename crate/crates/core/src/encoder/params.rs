use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::dom::TagVocab;
use crate::error::{Error, Result};
use crate::visual::{tag_table, TagVectors, COORD_MAX, PATCH_INPUTS};

/// Standard deviation used for random initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTables {
    pub tok: Array2<f64>,
    pub tag: Array2<f64>,
    pub pos: Array2<f64>,
    pub seg: Array2<f64>,
    /// 1001 × C/6
    pub x: Array2<f64>,
    /// 1001 × C/6
    pub y: Array2<f64>,
    pub patch_w: Array2<f64>,
    pub patch_b: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln1_g: Array2<f64>,
    pub ln1_b: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub ln2_g: Array2<f64>,
    pub ln2_b: Array2<f64>,
}

#[cfg(test)]
impl LayerParams {
    pub(crate) fn for_each_zero(&mut self) {
        for t in [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ] {
            t.fill(0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heads {
    /// C × vocab
    pub mlm_w: Array2<f64>,
    pub mlm_b: Array2<f64>,
    /// 2C × 3, applied to `[structure state, content state]`
    pub tsp_w: Array2<f64>,
    pub tsp_b: Array2<f64>,
    /// C × 2
    pub vmd_w: Array2<f64>,
    pub vmd_b: Array2<f64>,
}

/// Every trainable tensor of the reference encoder. The same type holds
/// gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub emb: EmbeddingTables,
    pub layers: Vec<LayerParams>,
    pub heads: Heads,
}

macro_rules! visit_fields {
    ($self:expr, $f:expr, $($field:ident),*) => {
        $( $f(stringify!($field), &$self.$field); )*
    };
}

macro_rules! visit_fields_mut {
    ($self:expr, $f:expr, $($field:ident),*) => {
        $( $f(stringify!($field), &mut $self.$field); )*
    };
}

impl ModelParams {
    /// Random initialization; the tag table comes from `tag_vectors` where
    /// available and name-seeded fallbacks elsewhere.
    pub fn init(config: &ModelConfig, tags: &TagVocab, tag_vectors: Option<&TagVectors>) -> Result<Self> {
        config.validate()?;
        if tags.len() != config.tag_vocab_size {
            return Err(Error::Config(format!(
                "tag vocabulary has {} ids, model expects {}",
                tags.len(),
                config.tag_vocab_size
            )));
        }
        let c = config.hidden;
        let f = config.ff;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut rand = |r: usize, k: usize| Array2::from_shape_simple_fn((r, k), || normal.sample(&mut rng));
        let coords = COORD_MAX as usize + 1;
        let emb = EmbeddingTables {
            tok: rand(config.vocab_size, c),
            tag: tag_table(tags, c, tag_vectors)?,
            pos: rand(config.max_positions, c),
            seg: rand(2, c),
            x: rand(coords, c / 6),
            y: rand(coords, c / 6),
            patch_w: rand(PATCH_INPUTS, c),
            patch_b: Array2::zeros((1, c)),
        };
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: rand(c, c),
                bq: Array2::zeros((1, c)),
                wk: rand(c, c),
                bk: Array2::zeros((1, c)),
                wv: rand(c, c),
                bv: Array2::zeros((1, c)),
                wo: rand(c, c),
                bo: Array2::zeros((1, c)),
                ln1_g: Array2::ones((1, c)),
                ln1_b: Array2::zeros((1, c)),
                w1: rand(c, f),
                b1: Array2::zeros((1, f)),
                w2: rand(f, c),
                b2: Array2::zeros((1, c)),
                ln2_g: Array2::ones((1, c)),
                ln2_b: Array2::zeros((1, c)),
            })
            .collect();
        let heads = Heads {
            mlm_w: rand(c, config.vocab_size),
            mlm_b: Array2::zeros((1, config.vocab_size)),
            tsp_w: rand(2 * c, 3),
            tsp_b: Array2::zeros((1, 3)),
            vmd_w: rand(c, 2),
            vmd_b: Array2::zeros((1, 2)),
        };
        Ok(Self { emb, layers, heads })
    }

    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.hidden;
        let f = config.ff;
        let coords = COORD_MAX as usize + 1;
        let z = |r: usize, k: usize| Array2::zeros((r, k));
        Ok(Self {
            emb: EmbeddingTables {
                tok: z(config.vocab_size, c),
                tag: z(config.tag_vocab_size, c),
                pos: z(config.max_positions, c),
                seg: z(2, c),
                x: z(coords, c / 6),
                y: z(coords, c / 6),
                patch_w: z(PATCH_INPUTS, c),
                patch_b: z(1, c),
            },
            layers: (0..config.layers)
                .map(|_| LayerParams {
                    wq: z(c, c),
                    bq: z(1, c),
                    wk: z(c, c),
                    bk: z(1, c),
                    wv: z(c, c),
                    bv: z(1, c),
                    wo: z(c, c),
                    bo: z(1, c),
                    ln1_g: z(1, c),
                    ln1_b: z(1, c),
                    w1: z(c, f),
                    b1: z(1, f),
                    w2: z(f, c),
                    b2: z(1, c),
                    ln2_g: z(1, c),
                    ln2_b: z(1, c),
                })
                .collect(),
            heads: Heads {
                mlm_w: z(c, config.vocab_size),
                mlm_b: z(1, config.vocab_size),
                tsp_w: z(2 * c, 3),
                tsp_b: z(1, 3),
                vmd_w: z(c, 2),
                vmd_b: z(1, 2),
            },
        })
    }

    /// Visits every tensor with its qualified name, in a fixed order.
    pub fn for_each(&self, mut f: impl FnMut(&str, &Array2<f64>)) {
        let mut named = |prefix: &str, name: &str, t: &Array2<f64>| f(&format!("{prefix}.{name}"), t);
        let e = &self.emb;
        visit_fields!(e, |n, t| named("emb", n, t), tok, tag, pos, seg, x, y, patch_w, patch_b);
        for (i, l) in self.layers.iter().enumerate() {
            let prefix = format!("layer{i}");
            visit_fields!(
                l,
                |n, t| named(&prefix, n, t),
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln1_g,
                ln1_b,
                w1,
                b1,
                w2,
                b2,
                ln2_g,
                ln2_b
            );
        }
        let h = &self.heads;
        visit_fields!(h, |n, t| named("head", n, t), mlm_w, mlm_b, tsp_w, tsp_b, vmd_w, vmd_b);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Array2<f64>)) {
        let mut named = |prefix: &str, name: &str, t: &mut Array2<f64>| f(&format!("{prefix}.{name}"), t);
        let e = &mut self.emb;
        visit_fields_mut!(e, |n, t| named("emb", n, t), tok, tag, pos, seg, x, y, patch_w, patch_b);
        for (i, l) in self.layers.iter_mut().enumerate() {
            let prefix = format!("layer{i}");
            visit_fields_mut!(
                l,
                |n, t| named(&prefix, n, t),
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln1_g,
                ln1_b,
                w1,
                b1,
                w2,
                b2,
                ln2_g,
                ln2_b
            );
        }
        let h = &mut self.heads;
        visit_fields_mut!(h, |n, t| named("head", n, t), mlm_w, mlm_b, tsp_w, tsp_b, vmd_w, vmd_b);
    }

    /// Visits matching tensors of `self` and `other` (same architecture).
    pub fn zip_mut(&mut self, other: &ModelParams, mut f: impl FnMut(&str, &mut Array2<f64>, &Array2<f64>)) {
        let theirs = other.tensor_refs();
        let mut k = 0;
        self.for_each_mut(|name, t| {
            f(name, t, theirs[k]);
            k += 1;
        });
    }

    pub(crate) fn tensor_refs(&self) -> Vec<&Array2<f64>> {
        let e = &self.emb;
        let mut out = vec![&e.tok, &e.tag, &e.pos, &e.seg, &e.x, &e.y, &e.patch_w, &e.patch_b];
        for l in &self.layers {
            out.extend([
                &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_g, &l.ln1_b, &l.w1, &l.b1, &l.w2, &l.b2,
                &l.ln2_g, &l.ln2_b,
            ]);
        }
        let h = &self.heads;
        out.extend([&h.mlm_w, &h.mlm_b, &h.tsp_w, &h.tsp_b, &h.vmd_w, &h.vmd_b]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        self.zip_mut(other, |_, a, b| a.scaled_add(scale, b));
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|_, t| t.mapv_inplace(|v| v * s));
    }
}
