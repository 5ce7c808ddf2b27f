use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ObjectiveConfig;
use crate::error::{Error, Result};
use crate::input::{TokenKind, TokenSequence};
use crate::tokenizer::PAD_ID;
use crate::visual::{perturb_box, NormalizedBox, PerturbDirection};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmdTarget {
    /// Perturbation applied at each position, if any.
    pub directions: Vec<Option<PerturbDirection>>,
    /// Effective box per position (perturbed where selected).
    pub boxes: Vec<NormalizedBox>,
}

impl VmdTarget {
    pub fn labels(&self) -> Vec<bool> {
        self.directions.iter().map(Option::is_some).collect()
    }

    pub fn selected_count(&self) -> usize {
        self.directions.iter().filter(|d| d.is_some()).count()
    }
}

/// Selects each non-padding position with probability `vmd_p` and enlarges
/// or shrinks its box by `vmd_scale` with equal odds. The perturbed box
/// drives both the 2D position embedding and the pooled region downstream.
pub fn apply_vmd<R: Rng + ?Sized>(
    seq: &TokenSequence,
    boxes: &[NormalizedBox],
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<VmdTarget> {
    super::open_unit("vmd_p", config.vmd_p)?;
    if boxes.len() != seq.len() {
        return Err(Error::Alignment(format!(
            "{} boxes for {} tokens",
            boxes.len(),
            seq.len()
        )));
    }
    let mut directions = vec![None; seq.len()];
    let mut out = boxes.to_vec();
    for (i, tok) in seq.tokens.iter().enumerate() {
        if tok.kind == TokenKind::Special && tok.id == PAD_ID {
            continue;
        }
        if rng.random::<f64>() >= config.vmd_p {
            continue;
        }
        let dir = if rng.random::<f64>() < 0.5 {
            PerturbDirection::Enlarge
        } else {
            PerturbDirection::Reduce
        };
        directions[i] = Some(dir);
        out[i] = perturb_box(&boxes[i], dir, config.vmd_scale);
    }
    Ok(VmdTarget { directions, boxes: out })
}
