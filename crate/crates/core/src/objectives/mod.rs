//! Supervised targets for the three pre-training tasks: masked language
//! modeling (MLM), tree structure prediction (TSP) and visual misalignment
//! detection (VMD).

mod mlm;
mod tsp;
mod vmd;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dom::DomTree;
use crate::error::{Error, Result};
use crate::input::TokenSequence;
use crate::visual::NormalizedBox;

pub use mlm::{apply_mlm, MlmTarget};
pub use tsp::{sample_tsp, tsp_relation, TspPair};
pub use vmd::{apply_vmd, VmdTarget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub mlm_p: f64,
    pub mlm_mask_frac: f64,
    pub mlm_random_frac: f64,
    pub vmd_p: f64,
    pub vmd_scale: f64,
    pub tsp_max_pairs: usize,
    pub tsp_other_cap: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mlm_p: 0.15,
            mlm_mask_frac: 0.8,
            mlm_random_frac: 0.1,
            vmd_p: 0.15,
            vmd_scale: 0.5,
            tsp_max_pairs: 1000,
            tsp_other_cap: 0.6,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        open_unit("mlm_p", self.mlm_p)?;
        open_unit("vmd_p", self.vmd_p)?;
        let fracs = [self.mlm_mask_frac, self.mlm_random_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 {
            return Err(Error::Config(
                "mlm_mask_frac + mlm_random_frac must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.vmd_scale) {
            return Err(Error::Config(format!(
                "vmd_scale must lie in [0, 1), got {}",
                self.vmd_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.tsp_other_cap) {
            return Err(Error::Config(format!(
                "tsp_other_cap must lie in [0, 1], got {}",
                self.tsp_other_cap
            )));
        }
        if self.tsp_max_pairs == 0 {
            return Err(Error::Config("tsp_max_pairs must be positive".into()));
        }
        Ok(())
    }
}

/// All targets for one record, reproducible from `(sequence, seed, config)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSample {
    pub mlm: MlmTarget,
    pub tsp: Vec<TspPair>,
    pub vmd: VmdTarget,
    pub seed: u64,
}

/// Samples MLM, TSP and VMD targets in that order from one seeded stream.
pub fn sample_objectives(
    seq: &TokenSequence,
    tree: &DomTree,
    boxes: &[NormalizedBox],
    vocab_size: usize,
    config: &ObjectiveConfig,
    seed: u64,
) -> Result<ObjectiveSample> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mlm = apply_mlm(seq, vocab_size, config, &mut rng)?;
    let tsp = sample_tsp(seq, tree, config, &mut rng)?;
    let vmd = apply_vmd(seq, boxes, config, &mut rng)?;
    Ok(ObjectiveSample { mlm, tsp, vmd, seed })
}

/// Per-record seed from a corpus seed and a record index (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, simplify_tree, TagVocab};
    use crate::input::{structural_separate, InputConfig, SegmentRoot};
    use crate::tokenizer::{Tokenizer, WordTokenizer};

    #[test]
    fn config_bounds() {
        assert!(ObjectiveConfig::default().validate().is_ok());
        for bad in [
            ObjectiveConfig {
                mlm_p: 0.0,
                ..Default::default()
            },
            ObjectiveConfig {
                mlm_p: 1.0,
                ..Default::default()
            },
            ObjectiveConfig {
                vmd_p: -0.1,
                ..Default::default()
            },
            ObjectiveConfig {
                vmd_scale: 1.0,
                ..Default::default()
            },
            ObjectiveConfig {
                mlm_mask_frac: 0.95,
                ..Default::default()
            },
            ObjectiveConfig {
                tsp_max_pairs: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn replay_is_identical() {
        let t = simplify_tree(
            &parse_html(
                "<html><body><div>a b<p>c d e</p></div><p>f g</p></body></html>",
                &TagVocab::default(),
            )
            .unwrap(),
        );
        let tok = WordTokenizer::build(["a b c d e f g"], 1, 100);
        let seq = structural_separate(&t, SegmentRoot::Node(t.root()), &tok, &InputConfig::default()).unwrap();
        let boxes = vec![NormalizedBox::FULL; seq.len()];
        let cfg = ObjectiveConfig {
            mlm_p: 0.5,
            vmd_p: 0.5,
            ..Default::default()
        };
        let a = sample_objectives(&seq, &t, &boxes, tok.vocab_size(), &cfg, 7).unwrap();
        let b = sample_objectives(&seq, &t, &boxes, tok.vocab_size(), &cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_objectives(&seq, &t, &boxes, tok.vocab_size(), &cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
