//! Question answering inputs: the structure part is kept (up to a budget),
//! the content slides in overlapping windows and the question rides along.

use weblm::dom::{parse_html, simplify_tree, TagVocab};
use weblm::input::{shape_finetune_inputs, structural_separate, InputConfig, SegmentRoot};
use weblm::tokenizer::{Tokenizer, WordTokenizer};

fn main() -> weblm::Result<()> {
    let body: String = (0..12)
        .map(|i| format!("<p>item {i} costs {} dollars</p>", 10 + i))
        .collect();
    let html = format!("<html><body><main>{body}</main></body></html>");
    let tree = simplify_tree(&parse_html(&html, &TagVocab::default())?);
    let texts = tree
        .nodes()
        .iter()
        .flat_map(|n| n.text_runs.iter().map(|r| r.text.as_str()));
    let question = "what does item 7 cost";
    let tokenizer = WordTokenizer::build(texts.chain([question]), 1, 100);

    let unbounded = InputConfig {
        max_seq_len: usize::MAX,
        seg_max: usize::MAX,
        ..InputConfig::default()
    };
    let page = structural_separate(&tree, SegmentRoot::Node(tree.root()), &tokenizer, &unbounded)?;
    println!("whole page: {} tokens ({} content)", page.len(), page.content().len());

    let cfg = InputConfig {
        max_seq_len: 48,
        seg_max: 48,
        structure_budget: 10,
        window_stride: 12,
        ..InputConfig::default()
    };
    let windows = shape_finetune_inputs(&page, &tree, question, &tokenizer, &cfg)?;
    for (i, w) in windows.iter().enumerate() {
        let words: Vec<u32> = w.content().iter().map(|t| t.id).collect();
        println!("window {i}: {} tokens | {}", w.len(), tokenizer.detokenize(&words));
    }
    Ok(())
}
