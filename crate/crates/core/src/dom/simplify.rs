use super::{DomTree, NodeId, RawNode, TextRun};

/// Elements that single-child collapse never removes.
pub fn is_collapse_protected(name: &str) -> bool {
    matches!(name, "html" | "body")
}

/// Reduces a parsed tree to its rendering tree.
///
/// Subtrees holding neither text nor boxes anywhere are dropped, then every
/// unprotected element with exactly one element child and no text of its own
/// is replaced by that child. The root, `html` and `body` are never
/// collapsed. The result is a fixed point of both rules.
pub fn simplify_tree(tree: &DomTree) -> DomTree {
    let n = tree.len();
    let mut keep = vec![false; n];
    // Children have larger preorder ids than their parents.
    for i in (0..n).rev() {
        let node = tree.get(NodeId::from(i));
        keep[i] = node.bbox.is_some() || node.has_text() || node.children.iter().any(|c| keep[c.index()]);
    }
    keep[0] = true;

    let kept_children = |id: NodeId| -> Vec<NodeId> {
        tree.get(id)
            .children
            .iter()
            .copied()
            .filter(|c| keep[c.index()])
            .collect()
    };

    let mut raw: Vec<RawNode> = Vec::new();
    // (old node, new parent index)
    let mut stack: Vec<(NodeId, Option<usize>)> = vec![(tree.root(), None)];
    while let Some((mut old, parent)) = stack.pop() {
        let mut children = kept_children(old);
        while parent.is_some() {
            let node = tree.get(old);
            if is_collapse_protected(&node.name) || node.has_text() || children.len() != 1 {
                break;
            }
            old = children[0];
            children = kept_children(old);
        }
        let node = tree.get(old);
        // Re-slot text runs against the surviving children.
        // Re-slot text runs against the surviving children; runs that end up
        // adjacent are merged with a separating space.
        let mut text_runs: Vec<TextRun> = Vec::with_capacity(node.text_runs.len());
        for r in &node.text_runs {
            let slot = node.children[..r.slot].iter().filter(|c| keep[c.index()]).count();
            match text_runs.last_mut() {
                Some(prev) if prev.slot == slot => {
                    prev.text.push(' ');
                    prev.text.push_str(&r.text);
                }
                _ => text_runs.push(TextRun {
                    slot,
                    text: r.text.clone(),
                }),
            }
        }
        let idx = raw.len();
        raw.push(RawNode {
            name: node.name.clone(),
            tag: node.tag,
            children: Vec::new(),
            text_runs,
            bbox: node.bbox,
        });
        if let Some(p) = parent {
            raw[p].children.push(idx);
        }
        for &c in children.iter().rev() {
            stack.push((c, Some(idx)));
        }
    }
    // Children were pushed in reverse, so each parent's child list is in
    // document order already.
    DomTree::from_raw(raw, 0)
}
