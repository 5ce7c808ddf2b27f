use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ObjectiveConfig;
use crate::error::Result;
use crate::input::TokenSequence;
use crate::tokenizer::{FIRST_TEXT_ID, MASK_ID};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmTarget {
    /// Model input ids after corruption.
    pub input_ids: Vec<u32>,
    /// Original id at selected positions, `None` elsewhere.
    pub labels: Vec<Option<u32>>,
}

impl MlmTarget {
    pub fn selected(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.labels.iter().enumerate().filter_map(|(i, l)| l.map(|id| (i, id)))
    }

    pub fn selected_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Selects each content position with probability `mlm_p`; a selected
/// position becomes `[MASK]`, a random text id, or stays unchanged in the
/// configured proportions. Visual inputs are not touched.
pub fn apply_mlm<R: Rng + ?Sized>(
    seq: &TokenSequence,
    vocab_size: usize,
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<MlmTarget> {
    super::open_unit("mlm_p", config.mlm_p)?;
    let mut input_ids = seq.ids();
    let mut labels = vec![None; seq.len()];
    let text_ids = FIRST_TEXT_ID..(vocab_size as u32).max(FIRST_TEXT_ID + 1);
    for (i, tok) in seq.tokens.iter().enumerate() {
        if !tok.is_content() || rng.random::<f64>() >= config.mlm_p {
            continue;
        }
        labels[i] = Some(tok.id);
        let u = rng.random::<f64>();
        if u < config.mlm_mask_frac {
            input_ids[i] = MASK_ID;
        } else if u < config.mlm_mask_frac + config.mlm_random_frac {
            input_ids[i] = if (vocab_size as u32) > FIRST_TEXT_ID {
                rng.random_range(text_ids.clone())
            } else {
                MASK_ID
            };
        }
    }
    Ok(MlmTarget { input_ids, labels })
}
