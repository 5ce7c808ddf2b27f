use super::{Segment, Token, TokenKind, TokenSequence};
use crate::dom::DomTree;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

use super::InputConfig;

/// Splits a sequence into windows over its content.
///
/// The structure part is first cut to `structure_budget` tokens. Content is
/// covered by windows of `window` tokens starting every `stride` tokens; the
/// last window ends at the final content token.
pub fn sliding_window(
    seq: &TokenSequence,
    structure_budget: usize,
    window: usize,
    stride: usize,
) -> Result<Vec<TokenSequence>> {
    if window == 0 || stride == 0 || stride > window {
        return Err(Error::InvalidWindow { window, stride });
    }
    let anchor_tag = seq.tokens[0].tag;
    let structure = seq.structure();
    let structure = &structure[..structure.len().min(structure_budget)];
    let content = seq.content();
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(content.len());
        out.push(TokenSequence::assemble(
            seq.root,
            anchor_tag,
            structure,
            &content[start..end],
        ));
        if end >= content.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Appends question tokens to the content part, aligned to the tree root.
pub fn attach_question<T: Tokenizer + ?Sized>(
    seq: &TokenSequence,
    tree: &DomTree,
    question: &str,
    tokenizer: &T,
    max_len: usize,
) -> Result<TokenSequence> {
    let ids = tokenizer.tokenize(question);
    if ids.is_empty() {
        return Ok(seq.clone());
    }
    let len = seq.len() + ids.len();
    if len > max_len {
        return Err(Error::SegmentTooLong { len, max: max_len });
    }
    let root = tree.root();
    let tag = tree.get(root).tag;
    let mut content = seq.content().to_vec();
    content.extend(ids.into_iter().map(|id| Token {
        id,
        kind: TokenKind::Content,
        node: root,
        tag,
        segment: Segment::Content,
        pos: 0,
    }));
    Ok(TokenSequence::assemble(
        seq.root,
        seq.tokens[0].tag,
        seq.structure(),
        &content,
    ))
}

/// Fine-tuning inputs for a question over a page: structure truncated to the
/// configured budget, page text windowed so every window plus the question
/// fits in `max_seq_len`.
pub fn shape_finetune_inputs<T: Tokenizer + ?Sized>(
    seq: &TokenSequence,
    tree: &DomTree,
    question: &str,
    tokenizer: &T,
    config: &InputConfig,
) -> Result<Vec<TokenSequence>> {
    let structure = seq.structure().len().min(config.structure_budget);
    let question_len = tokenizer.count(question);
    let fixed = structure + question_len + 3;
    if fixed >= config.max_seq_len {
        return Err(Error::SegmentTooLong {
            len: fixed + 1,
            max: config.max_seq_len,
        });
    }
    let window = config.max_seq_len - fixed;
    let stride = config.window_stride.min(window);
    sliding_window(seq, config.structure_budget, window, stride)?
        .iter()
        .map(|w| attach_question(w, tree, question, tokenizer, config.max_seq_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, simplify_tree, NodeId, TagVocab};
    use crate::input::{structural_separate, SegmentRoot};
    use crate::tokenizer::{WordTokenizer, SEP_ID};

    fn page(n_words: usize) -> (DomTree, WordTokenizer, TokenSequence) {
        let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
        let tok = WordTokenizer::from_words(words.iter().chain([&"what".to_string()]));
        let html = format!(
            "<html><body><p>{}</p><div><span>a</span></div></body></html>",
            words.join(" ")
        );
        let t = simplify_tree(&parse_html(&html, &TagVocab::default()).unwrap());
        let cfg = InputConfig {
            max_seq_len: 4096,
            ..InputConfig::default()
        };
        let seq = structural_separate(&t, SegmentRoot::Node(t.root()), &tok, &cfg).unwrap();
        (t, tok, seq)
    }

    #[test]
    fn single_window_is_identity() {
        let (_, _, seq) = page(9);
        assert_eq!(seq.content().len(), 10);
        let w = sliding_window(&seq, 256, 10, 5).unwrap();
        assert_eq!(w, vec![seq]);
    }

    #[test]
    fn windows_by_arithmetic() {
        let (_, _, seq) = page(11);
        assert_eq!(seq.content().len(), 12);
        let w = sliding_window(&seq, 256, 8, 4).unwrap();
        assert_eq!(w.len(), 2);
        let ids = |s: &TokenSequence| s.content().iter().map(|t| t.id).collect::<Vec<_>>();
        let all = ids(&seq);
        assert_eq!(ids(&w[0]), all[0..8]);
        assert_eq!(ids(&w[1]), all[4..12]);
    }

    #[test]
    fn invalid_windows() {
        let (_, _, seq) = page(3);
        assert!(matches!(
            sliding_window(&seq, 8, 4, 0),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            sliding_window(&seq, 8, 4, 5),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            sliding_window(&seq, 8, 0, 0),
            Err(Error::InvalidWindow { .. })
        ));
    }

    #[test]
    fn structure_truncation() {
        let (t, _, seq) = page(3);
        let w = sliding_window(&seq, 2, 100, 50).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].structure(), &seq.structure()[..2]);
        w[0].validate(&t).unwrap();
    }

    #[test]
    fn coverage_for_all_lengths() {
        for n in 1..=100 {
            let (t, _, seq) = page(n - 1);
            assert_eq!(seq.content().len(), n);
            for (window, stride) in [(8, 3), (7, 7), (16, 1), (5, 4)] {
                let ws = sliding_window(&seq, 256, window, stride).unwrap();
                let mut covered = vec![false; n];
                let mut start = 0;
                for w in &ws {
                    w.validate(&t).unwrap();
                    assert!(w.content().len() <= window);
                    for k in 0..w.content().len() {
                        covered[start + k] = true;
                    }
                    start += stride;
                }
                assert!(covered.iter().all(|&c| c), "n={n} window={window} stride={stride}");
            }
        }
    }

    #[test]
    fn question_attachment() {
        // 6 structure + 91 content + 3 specials
        let (t, tok, seq) = page(90);
        assert_eq!(seq.len(), 100);
        let empty = attach_question(&seq, &t, "", &tok, 512).unwrap();
        assert_eq!(empty, seq);
        let q = attach_question(&seq, &t, "what w1 w2 w3 w4", &tok, 512).unwrap();
        assert_eq!(q.len(), 105);
        let tail = &q.tokens[q.len() - 6..];
        for t in &tail[..5] {
            assert_eq!(t.node, NodeId::ROOT);
            assert_eq!(t.segment, Segment::Content);
            assert_eq!(t.tag, TagVocab::default().id("html"));
        }
        assert_eq!(tail[5].id, SEP_ID);
        q.validate(&t).unwrap();
        assert!(matches!(
            attach_question(&seq, &t, "what", &tok, seq.len()),
            Err(Error::SegmentTooLong { .. })
        ));
    }

    #[test]
    fn finetune_shaping_fits_and_covers() {
        let (t, tok, seq) = page(700 - 3);
        let cfg = InputConfig::default();
        let outs = shape_finetune_inputs(&seq, &t, "what w1", &tok, &cfg).unwrap();
        assert!(outs.len() > 1);
        for o in &outs {
            assert!(o.len() <= cfg.max_seq_len);
            o.validate(&t).unwrap();
            let c = o.content();
            assert_eq!(c[c.len() - 1].node, t.root());
        }
    }
}
