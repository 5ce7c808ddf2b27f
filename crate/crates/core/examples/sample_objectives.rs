//! Draw MLM, TSP and VMD targets for one sequence. The same seed always
//! gives the same sample.

use std::collections::BTreeMap;

use weblm::dom::{parse_html, simplify_tree, TagVocab};
use weblm::input::{structural_separate, InputConfig, SegmentRoot};
use weblm::objectives::{sample_objectives, ObjectiveConfig};
use weblm::tokenizer::{Tokenizer, WordTokenizer};
use weblm::visual::NormalizedBox;

fn main() -> weblm::Result<()> {
    let items: String = (0..8)
        .map(|i| format!("<li><a>link {i}</a> short note number {i}</li>"))
        .collect();
    let html = format!("<html><body><nav><h3>Menu</h3><ul>{items}</ul></nav><p>footer text here</p></body></html>");
    let tree = simplify_tree(&parse_html(&html, &TagVocab::default())?);
    let texts = tree
        .nodes()
        .iter()
        .flat_map(|n| n.text_runs.iter().map(|r| r.text.as_str()));
    let tokenizer = WordTokenizer::build(texts, 1, 200);
    let seq = structural_separate(
        &tree,
        SegmentRoot::Node(tree.root()),
        &tokenizer,
        &InputConfig::default(),
    )?;
    let boxes = (0..seq.len() as u16)
        .map(|i| {
            let (x, y) = (i * 37 % 700, i * 11 % 800);
            NormalizedBox::new(x, x + 200, y, y + 60)
        })
        .collect::<weblm::Result<Vec<_>>>()?;

    let cfg = ObjectiveConfig::default();
    let sample = sample_objectives(&seq, &tree, &boxes, tokenizer.vocab_size(), &cfg, 2024)?;
    let again = sample_objectives(&seq, &tree, &boxes, tokenizer.vocab_size(), &cfg, 2024)?;
    assert_eq!(sample, again);

    println!("{} tokens", seq.len());
    for (pos, label) in sample.mlm.selected() {
        let shown = tokenizer.token(sample.mlm.input_ids[pos]).unwrap_or("?");
        println!("  mlm @{pos}: {shown} -> {}", tokenizer.token(label).unwrap_or("?"));
    }
    let mut labels = BTreeMap::new();
    for p in &sample.tsp {
        *labels.entry(format!("{:?}", p.label)).or_insert(0) += 1;
    }
    println!("  tsp: {} pairs {labels:?}", sample.tsp.len());
    for (pos, d) in sample
        .vmd
        .directions
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|d| (i, d)))
    {
        println!("  vmd @{pos}: {d:?} {:?}", sample.vmd.boxes[pos]);
    }
    Ok(())
}
