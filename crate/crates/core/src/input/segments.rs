use super::SegmentRoot;
use crate::dom::{subtree_token_count, DomTree, NodeId};
use crate::tokenizer::Tokenizer;

/// Length of the full sequence a segment emits, specials included.
pub fn segment_len<T: Tokenizer + ?Sized>(tree: &DomTree, root: &SegmentRoot, tokenizer: &T) -> usize {
    root.tops(tree)
        .into_iter()
        .map(|n| subtree_token_count(tree, n, tokenizer))
        .sum::<usize>()
        + 3
}

/// Greedy top-down selection of disjoint training segments whose sequence
/// length lies in `[min, max]`.
///
/// A node in range is taken whole. A node that is too long is opened: its
/// in-range children are taken, its too-long children are searched
/// recursively, and each maximal stretch of too-short consecutive children
/// is packed left to right into sibling runs whose combined length is in
/// range.
pub fn extract_segments<T: Tokenizer + ?Sized>(
    tree: &DomTree,
    tokenizer: &T,
    min: usize,
    max: usize,
) -> Vec<SegmentRoot> {
    let counts: Vec<usize> = {
        // Bottom-up subtree counts in one pass over reversed preorder.
        let mut c = vec![0usize; tree.len()];
        for i in (0..tree.len()).rev() {
            let n = tree.get(NodeId::from(i));
            let own =
                if n.is_leaf() { 1 } else { 2 } + n.text_runs.iter().map(|r| tokenizer.count(&r.text)).sum::<usize>();
            c[i] = own + n.children.iter().map(|ch| c[ch.index()]).sum::<usize>();
        }
        c
    };
    let len_of = |n: NodeId| counts[n.index()] + 3;

    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        let len = len_of(id);
        if len < min {
            continue;
        }
        if len <= max {
            out.push(SegmentRoot::Node(id));
            continue;
        }
        let children = &tree.get(id).children;
        let mut found = Vec::new();
        let mut run: Option<(usize, usize, usize)> = None; // (first, count, token sum)
        let flush = |run: &mut Option<(usize, usize, usize)>, found: &mut Vec<SegmentRoot>| {
            if let Some((first, count, sum)) = run.take() {
                if count >= 2 && sum + 3 >= min {
                    found.push(SegmentRoot::Siblings {
                        parent: id,
                        first,
                        count,
                    });
                }
            }
        };
        let mut deeper = Vec::new();
        for (k, &c) in children.iter().enumerate() {
            let cl = len_of(c);
            if cl >= min {
                flush(&mut run, &mut found);
                if cl <= max {
                    found.push(SegmentRoot::Node(c));
                } else {
                    deeper.push(c);
                }
                continue;
            }
            let tokens = counts[c.index()];
            run = match run {
                Some((first, count, sum)) if sum + tokens + 3 <= max => Some((first, count + 1, sum + tokens)),
                Some(prev) => {
                    let mut prev = Some(prev);
                    flush(&mut prev, &mut found);
                    Some((k, 1, tokens))
                }
                None => Some((k, 1, tokens)),
            };
        }
        flush(&mut run, &mut found);
        out.extend(found);
        // Reverse so the leftmost too-long child is processed first.
        stack.extend(deeper.into_iter().rev());
    }
    // Emit in document order.
    out.sort_by_key(|r| match *r {
        SegmentRoot::Node(n) => (n.index(), 0),
        SegmentRoot::Siblings { parent, first, .. } => (tree.get(parent).children[first].index(), 0),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, simplify_tree, TagVocab};
    use crate::input::{structural_separate, InputConfig};
    use crate::tokenizer::WordTokenizer;

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn tree(html: &str) -> DomTree {
        simplify_tree(&parse_html(html, &TagVocab::default()).unwrap())
    }

    #[test]
    fn exact_min_node_is_selected_and_not_descended() {
        // p emits 1 leaf + 124 words + 3 specials = 128.
        let html = format!(
            "<html><body><div><p>{}</p><span>{}</span></div></body></html>",
            words(124),
            words(600)
        );
        let t = tree(&html);
        let tok = WordTokenizer::from_words(["w"]);
        let div = t.nodes().iter().find(|n| n.name == "div").unwrap().id;
        let inner_p = t.get(div).children[0];
        assert_eq!(segment_len(&t, &SegmentRoot::Node(inner_p), &tok), 128);
        assert_eq!(extract_segments(&t, &tok, 128, 512), vec![SegmentRoot::Node(inner_p)]);
    }

    #[test]
    fn nested_in_range_node_wins_over_descendants() {
        let html = format!(
            "<html><body><div><p>{}</p><span>x</span></div><p>{}</p></body></html>",
            words(124),
            words(600)
        );
        let t = tree(&html);
        let tok = WordTokenizer::from_words(["w", "x"]);
        let div = t.nodes().iter().find(|n| n.name == "div").unwrap().id;
        // div = 2 + 125 + 2 + 3 = 132
        assert_eq!(extract_segments(&t, &tok, 128, 512), vec![SegmentRoot::Node(div)]);
    }

    #[test]
    fn all_small_yields_nothing() {
        let t = tree("<html><body><p>a b c</p><p>d</p></body></html>");
        let tok = WordTokenizer::build(["a b c d"], 1, 10);
        assert!(extract_segments(&t, &tok, 128, 512).is_empty());
    }

    #[test]
    fn small_siblings_are_packed() {
        // Six paragraphs of 60 tokens each (1 leaf + 59 words); the body is
        // too long, each child too short.
        let ps: String = (0..10).map(|_| format!("<p>{}</p>", words(59))).collect();
        let t = tree(&format!("<html><body>{ps}</body></html>"));
        let tok = WordTokenizer::from_words(["w"]);
        let segs = extract_segments(&t, &tok, 128, 512);
        let body = t.get(t.root()).children[0];
        // 8 * 60 + 3 = 483 fits, a ninth would not; the remaining 2 make 123 < 128.
        assert_eq!(
            segs,
            vec![SegmentRoot::Siblings {
                parent: body,
                first: 0,
                count: 8
            }]
        );
        let seq = structural_separate(&t, segs[0], &tok, &InputConfig::default()).unwrap();
        assert_eq!(seq.len(), 483);
    }

    #[test]
    fn oversized_children_are_searched() {
        let html = format!(
            "<html><body><div><p>{}</p><p>{}</p></div><section><p>{}</p><p>{}</p></section></body></html>",
            words(300),
            words(300),
            words(200),
            words(10)
        );
        let t = tree(&html);
        let tok = WordTokenizer::from_words(["w"]);
        let segs = extract_segments(&t, &tok, 128, 512);
        assert_eq!(segs.len(), 3);
        for s in &segs {
            let len = segment_len(&t, s, &tok);
            assert!((128..=512).contains(&len), "{len}");
        }
    }
}
