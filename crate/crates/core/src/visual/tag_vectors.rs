use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dom::TagVocab;
use crate::error::{Error, Result};

/// Standard deviation of fallback rows.
pub const FALLBACK_STD: f64 = 0.02;

/// Initial tag-embedding vectors keyed by tag name (`tag_vectors.tsv`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagVectors {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl TagVectors {
    /// Parses lines of `tagname<TAB>v1,v2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("tag_vectors line {}: missing tab", i + 1)))?;
            let v: Vec<f64> = values
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("tag_vectors line {}: {e}", i + 1)))?;
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(Error::Format(format!(
                    "tag_vectors line {}: inconsistent dimension",
                    i + 1
                )));
            }
            vectors.insert(name.trim().to_ascii_lowercase(), v);
        }
        Ok(Self { vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// FNV-1a over the name's bytes.
fn name_seed(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Deterministic pseudo-random row for a tag without a loaded vector.
pub fn fallback_vector(name: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name));
    let normal = Normal::new(0.0, FALLBACK_STD).expect("valid std");
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Tag-embedding table (one row per tag id, unknown last): loaded rows where
/// available, name-seeded fallback rows elsewhere.
pub fn tag_table(vocab: &TagVocab, dim: usize, vectors: Option<&TagVectors>) -> Result<Array2<f64>> {
    let mut table = Array2::zeros((vocab.len(), dim));
    for id in 0..vocab.len() {
        let name = vocab.name(crate::dom::TagId(id as u16));
        let row = match vectors.and_then(|v| v.get(name)) {
            Some(v) if v.len() == dim => v.to_vec(),
            Some(v) => {
                return Err(Error::Config(format!(
                    "tag vector for {name:?} has dimension {}, model expects {dim}",
                    v.len()
                )))
            }
            None => fallback_vector(name, dim),
        };
        table.row_mut(id).assign(&ndarray::Array1::from(row));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loaded_rows_and_fallbacks() {
        let vocab = TagVocab::parse("html\nbody\np\n").unwrap();
        let v = TagVectors::parse("p\t1,2,3\nHTML\t0.5, 0.5, 0.5\n").unwrap();
        let t = tag_table(&vocab, 3, Some(&v)).unwrap();
        assert_eq!(t.row(2).to_vec(), [1.0, 2.0, 3.0]);
        assert_eq!(t.row(0).to_vec(), [0.5, 0.5, 0.5]);
        assert_eq!(t.row(1).to_vec(), fallback_vector("body", 3));
        assert_eq!(t.row(3).to_vec(), fallback_vector("<unk>", 3));
        assert_ne!(fallback_vector("body", 3), fallback_vector("div", 3));
    }

    #[test]
    fn bit_stable_across_calls() {
        let vocab = TagVocab::default();
        let a = tag_table(&vocab, 8, None).unwrap();
        let b = tag_table(&vocab, 8, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_files() {
        assert!(TagVectors::parse("p 1,2").is_err());
        assert!(TagVectors::parse("p\t1,x").is_err());
        assert!(TagVectors::parse("p\t1,2\nq\t1").is_err());
        let vocab = TagVocab::parse("p\n").unwrap();
        let v = TagVectors::parse("p\t1,2").unwrap();
        assert!(matches!(tag_table(&vocab, 3, Some(&v)), Err(Error::Config(_))));
    }
}
