//! Parse messy HTML into an element tree, attach boxes and reduce it to the
//! rendering tree used for training.
//!
//! cargo run --example parse_and_simplify

use weblm::dom::{node_relation, parse_html, simplify_tree, TagVocab};

const PAGE: &str = r#"<!doctype html>
<html><head><title>ignored</title><script>var x = 1;</script></head>
<body>
  <div><div><section data-box="0,0,800,300">
    <h1>Spring sale</h1>
    <p>All tents <b>30%</b> off
  </section></div></div>
  <div class="empty"><span></span></div>
  <ul><li>Two-person tent<li>Sleeping bag</ul>
</body></html>"#;

fn main() -> weblm::Result<()> {
    let tags = TagVocab::default();
    let raw = parse_html(PAGE, &tags)?;
    let tree = simplify_tree(&raw);
    println!("parsed {} elements, {} after simplification\n", raw.len(), tree.len());

    for n in tree.nodes() {
        let text: Vec<&str> = n.text_runs.iter().map(|r| r.text.as_str()).collect();
        println!("{:indent$}<{}> {:?}", "", n.name, text, indent = 2 * n.depth);
    }

    let body = tree.nodes().iter().find(|n| n.name == "body").unwrap().id;
    let li = tree.nodes().iter().find(|n| n.name == "li").unwrap().id;
    println!("\nbody -> first li: {:?}", node_relation(&tree, body, li)?);
    println!("first li -> body: {:?}", node_relation(&tree, li, body)?);
    println!("\nround trip:\n{}", tree.to_html());
    Ok(())
}
