use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ObjectiveConfig;
use crate::dom::{node_relation, DomTree, NodeId, Relation};
use crate::error::{Error, Result};
use crate::input::TokenSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TspPair {
    /// Position of a structure token.
    pub structure_pos: u32,
    /// Position of a content token.
    pub content_pos: u32,
    pub label: Relation,
}

/// Relation between a structure token's node and a content token's node.
/// Text hangs under its own element, so an element paired with its own text
/// is a parent-child pair.
pub fn tsp_relation(tree: &DomTree, structure_node: NodeId, content_node: NodeId) -> Result<Relation> {
    if structure_node == content_node {
        tree.node(structure_node)?;
        return Ok(Relation::ParentChild);
    }
    node_relation(tree, structure_node, content_node)
}

/// Samples (structure, content) position pairs uniformly without
/// replacement and labels them with their tree relation.
///
/// At most `tsp_max_pairs` pairs are emitted and at most `10 × tsp_max_pairs`
/// candidates are drawn. `Other` pairs beyond the cap are rejected while
/// drawing; if the candidates run out first, trailing `Other` pairs are
/// dropped until their fraction of the output is within `tsp_other_cap`.
pub fn sample_tsp<R: Rng + ?Sized>(
    seq: &TokenSequence,
    tree: &DomTree,
    config: &ObjectiveConfig,
    rng: &mut R,
) -> Result<Vec<TspPair>> {
    let structure: Vec<usize> = (0..seq.len()).filter(|&i| seq.tokens[i].is_structure()).collect();
    let content: Vec<usize> = (0..seq.len()).filter(|&i| seq.tokens[i].is_content()).collect();
    if content.is_empty() || structure.is_empty() {
        return Err(Error::EmptySample);
    }
    let max_pairs = config.tsp_max_pairs;
    let other_quota = (config.tsp_other_cap * max_pairs as f64).floor() as usize;
    let total = structure.len() * content.len();
    let budget = total.min(max_pairs.saturating_mul(10));

    // Sparse Fisher-Yates over the candidate index space.
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let mut pairs = Vec::with_capacity(max_pairs.min(total));
    let mut others = 0usize;
    for i in 0..budget {
        if pairs.len() == max_pairs {
            break;
        }
        let j = rng.random_range(i..total);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        let cand = *swapped.get(&j).unwrap_or(&j);
        swapped.insert(j, at_i);

        let (s, c) = (structure[cand / content.len()], content[cand % content.len()]);
        let label = tsp_relation(tree, seq.tokens[s].node, seq.tokens[c].node)?;
        if label == Relation::Other {
            if others >= other_quota {
                continue;
            }
            others += 1;
        }
        pairs.push(TspPair {
            structure_pos: s as u32,
            content_pos: c as u32,
            label,
        });
    }
    while others > 0 && others as f64 > config.tsp_other_cap * pairs.len() as f64 {
        let last = pairs
            .iter()
            .rposition(|p| p.label == Relation::Other)
            .expect("others > 0");
        pairs.remove(last);
        others -= 1;
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, simplify_tree, TagVocab};
    use crate::input::{structural_separate, InputConfig, SegmentRoot, TokenKind};
    use crate::tokenizer::WordTokenizer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn build(html: &str, words: &[&str]) -> (DomTree, TokenSequence) {
        let t = simplify_tree(&parse_html(html, &TagVocab::default()).unwrap());
        let tok = WordTokenizer::from_words(words);
        let cfg = InputConfig {
            max_seq_len: usize::MAX,
            ..Default::default()
        };
        let seq = structural_separate(&t, SegmentRoot::Node(t.root()), &tok, &cfg).unwrap();
        (t, seq)
    }

    #[test]
    fn own_text_is_parent_child() {
        let t = simplify_tree(&parse_html("<html><body><p>hi</p></body></html>", &TagVocab::default()).unwrap());
        let tok = WordTokenizer::from_words(["hi"]);
        let p = t.nodes().iter().find(|n| n.name == "p").unwrap().id;
        let seq = structural_separate(&t, SegmentRoot::Node(p), &tok, &InputConfig::default()).unwrap();
        let pairs = sample_tsp(&seq, &t, &ObjectiveConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(
            pairs,
            vec![TspPair {
                structure_pos: 1,
                content_pos: 3,
                label: Relation::ParentChild
            }]
        );
    }

    #[test]
    fn grandparent_is_ancestor() {
        let (t, seq) = build("<html><body><div>y<p>x</p></div></body></html>", &["x", "y"]);
        let body = t.nodes().iter().find(|n| n.name == "body").unwrap().id;
        let p = t.nodes().iter().find(|n| n.name == "p").unwrap().id;
        assert_eq!(tsp_relation(&t, body, p).unwrap(), Relation::AncestorDescendant);
        let start_body = seq
            .tokens
            .iter()
            .position(|k| k.node == body && k.kind != TokenKind::Special)
            .unwrap();
        let x = seq.tokens.iter().position(|k| k.node == p && k.is_content()).unwrap();
        let pairs = sample_tsp(&seq, &t, &ObjectiveConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let pair = pairs
            .iter()
            .find(|q| q.structure_pos as usize == start_body && q.content_pos as usize == x)
            .unwrap();
        assert_eq!(pair.label, Relation::AncestorDescendant);
    }

    #[test]
    fn no_content_is_an_error() {
        let (t, seq) = build(r#"<html><body><img data-box="0,0,1,1"></body></html>"#, &[]);
        assert!(matches!(
            sample_tsp(&seq, &t, &ObjectiveConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn caps_and_uniqueness() {
        let items: String = (0..40).map(|i| format!("<li>w{i} v</li>")).collect();
        let html = format!("<html><body><ul>{items}</ul><p>v v v</p></body></html>");
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).chain(["v".to_string()]).collect();
        let words: Vec<&str> = words.iter().map(String::as_str).collect();
        let (t, seq) = build(&html, &words);
        for (max_pairs, seed) in [(1000, 1), (50, 2), (5000, 3)] {
            let cfg = ObjectiveConfig {
                tsp_max_pairs: max_pairs,
                ..Default::default()
            };
            let pairs = sample_tsp(&seq, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(pairs.len() <= max_pairs);
            let distinct: HashSet<_> = pairs.iter().map(|p| (p.structure_pos, p.content_pos)).collect();
            assert_eq!(distinct.len(), pairs.len());
            let others = pairs.iter().filter(|p| p.label == Relation::Other).count();
            assert!(others as f64 <= 0.6 * pairs.len() as f64);
            for p in &pairs {
                let s = &seq.tokens[p.structure_pos as usize];
                let c = &seq.tokens[p.content_pos as usize];
                assert!(s.is_structure() && c.is_content());
                assert_eq!(p.label, tsp_relation(&t, s.node, c.node).unwrap());
            }
        }
    }
}
