//! Structural separation: one subtree becomes
//! `[CLS] structure [SEP] content [SEP]`, and training segments are picked
//! from a page so every sequence lands inside the length bounds.

use weblm::dom::{parse_html, simplify_tree, TagVocab};
use weblm::input::{extract_segments, segment_len, structural_separate, InputConfig, SegmentRoot, TokenKind};
use weblm::tokenizer::{Tokenizer, WordTokenizer};

fn main() -> weblm::Result<()> {
    let html = "<html><body><article><h2>Weather</h2><p>Sunny and warm today</p>\
                <ul><li>High 24</li><li>Low 12</li></ul></article></body></html>";
    let tree = simplify_tree(&parse_html(html, &TagVocab::default())?);
    let texts = tree
        .nodes()
        .iter()
        .flat_map(|n| n.text_runs.iter().map(|r| r.text.as_str()));
    let tokenizer = WordTokenizer::build(texts, 1, 100);

    let article = tree.nodes().iter().find(|n| n.name == "article").unwrap().id;
    let seq = structural_separate(&tree, SegmentRoot::Node(article), &tokenizer, &InputConfig::default())?;
    for t in &seq.tokens {
        let shown = match t.kind {
            TokenKind::Structure(k) => format!("{k:?}<{}>", tree.get(t.node).name),
            _ => tokenizer.token(t.id).unwrap_or("?").to_string(),
        };
        println!("{:>3} {:<8?} {shown}", t.pos, t.segment);
    }

    // tight bounds so this small page splits into several segments
    let segments = extract_segments(&tree, &tokenizer, 6, 12);
    println!("\nsegments with length in [6, 12]:");
    for s in &segments {
        println!("  {:?} -> {} tokens", s, segment_len(&tree, s, &tokenizer));
    }
    Ok(())
}
