//! HTML element trees: tolerant parsing, geometry attachment, rendering-tree
//! simplification and tree-relation queries.
//!
//! Text is not modelled as separate nodes. Each element owns its text runs,
//! and every run records the number of element children that precede it so
//! document order can be reconstructed.

mod parse;
mod simplify;
mod tags;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub use parse::parse_html;
pub use simplify::{is_collapse_protected, simplify_tree};
pub use tags::{TagId, TagVocab, DEFAULT_TAGS, UNKNOWN_TAG_NAME};

/// Dense node index. Ids always equal the node's preorder index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Pixel-space box measured from the page's top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: i64,
    pub y0: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub fn new(x0: i64, y0: i64, w: i64, h: i64) -> Result<Self> {
        if w < 0 || h < 0 {
            return Err(Error::Format(format!("bounding box with negative extent ({w}x{h})")));
        }
        Ok(Self { x0, y0, w, h })
    }

    pub fn x1(&self) -> i64 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> i64 {
        self.y0 + self.h
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x0 = self.x0.min(other.x0);
        let y0 = self.y0.min(other.y0);
        let x1 = self.x1().max(other.x1());
        let y1 = self.y1().max(other.y1());
        BoundingBox {
            x0,
            y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1() <= self.x1() && other.y1() <= self.y1()
    }
}

/// A text run and the number of element children preceding it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextRun {
    pub slot: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomNode {
    pub id: NodeId,
    /// Lowercase tag name as written in the source.
    pub name: String,
    pub tag: TagId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub text_runs: Vec<TextRun>,
    pub bbox: Option<BoundingBox>,
    pub depth: usize,
    pub preorder: usize,
    /// One past the preorder index of the last node in this subtree.
    pub subtree_end: usize,
}

impl DomNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn has_text(&self) -> bool {
        !self.text_runs.is_empty()
    }
}

/// Tree relation between an ordered pair of nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    ParentChild,
    AncestorDescendant,
    Other,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::ParentChild, Relation::AncestorDescendant, Relation::Other];

    /// Class index used by the relation classifier.
    pub fn index(self) -> usize {
        match self {
            Relation::ParentChild => 0,
            Relation::AncestorDescendant => 1,
            Relation::Other => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Node description used while assembling a tree.
#[derive(Clone, Debug)]
pub(crate) struct RawNode {
    pub name: String,
    pub tag: TagId,
    pub children: Vec<usize>,
    pub text_runs: Vec<TextRun>,
    pub bbox: Option<BoundingBox>,
}

/// Immutable element tree rooted at node 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomTree {
    nodes: Vec<DomNode>,
}

impl DomTree {
    /// Builds a tree from raw nodes rooted at `raw[root]`, renumbering in
    /// preorder. Nodes unreachable from the root are discarded.
    pub(crate) fn from_raw(raw: Vec<RawNode>, root: usize) -> DomTree {
        let mut order = Vec::with_capacity(raw.len());
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(raw[i].children.iter().rev().copied());
        }
        let mut new_id = vec![usize::MAX; raw.len()];
        for (k, &i) in order.iter().enumerate() {
            new_id[i] = k;
        }
        let mut nodes: Vec<DomNode> = order
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let r = &raw[i];
                DomNode {
                    id: NodeId::from(k),
                    name: r.name.clone(),
                    tag: r.tag,
                    parent: None,
                    children: r.children.iter().map(|&c| NodeId::from(new_id[c])).collect(),
                    text_runs: r.text_runs.clone(),
                    bbox: r.bbox,
                    depth: 0,
                    preorder: k,
                    subtree_end: k + 1,
                }
            })
            .collect();
        for k in 0..nodes.len() {
            let depth = nodes[k].depth;
            for c in nodes[k].children.clone() {
                nodes[c.index()].parent = Some(NodeId::from(k));
                nodes[c.index()].depth = depth + 1;
            }
        }
        for k in (0..nodes.len()).rev() {
            if let Some(last) = nodes[k].children.last() {
                nodes[k].subtree_end = nodes[last.index()].subtree_end;
            }
        }
        DomTree { nodes }
    }

    #[cfg(test)]
    pub(crate) fn to_raw(&self) -> Vec<RawNode> {
        self.nodes
            .iter()
            .map(|n| RawNode {
                name: n.name.clone(),
                tag: n.tag,
                children: n.children.iter().map(|c| c.index()).collect(),
                text_runs: n.text_runs.clone(),
                bbox: n.bbox,
            })
            .collect()
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DomNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&DomNode> {
        self.nodes.get(id.index()).ok_or(Error::InvalidNode(id.index()))
    }

    /// Panicking accessor for ids already known to be valid.
    pub fn get(&self, id: NodeId) -> &DomNode {
        &self.nodes[id.index()]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    /// True when `a` is a strict ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        let na = &self.nodes[a.index()];
        let pb = b.index();
        na.preorder < pb && pb < na.subtree_end
    }

    /// Node ids of the subtree rooted at `id`, in preorder.
    pub fn subtree(&self, id: NodeId) -> impl Iterator<Item = NodeId> {
        let n = &self.nodes[id.index()];
        (n.preorder..n.subtree_end).map(NodeId::from)
    }

    /// Element children reached by following `path` from the root.
    pub fn node_at_path(&self, path: &[usize]) -> Option<NodeId> {
        let mut cur = self.root();
        for &i in path {
            cur = *self.nodes[cur.index()].children.get(i)?;
        }
        Some(cur)
    }

    pub fn path_of(&self, id: NodeId) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur.index()].parent {
            let pos = self.nodes[p.index()]
                .children
                .iter()
                .position(|&c| c == cur)
                .expect("child listed under its parent");
            path.push(pos);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Attaches boxes from sidecar records; paths address the tree as it is now.
    pub fn apply_boxes(&mut self, records: &[BoxRecord]) -> Result<()> {
        for r in records {
            let id = self
                .node_at_path(&r.node_path)
                .ok_or_else(|| Error::BadBoxPath(r.node_path.clone()))?;
            self.nodes[id.index()].bbox = Some(BoundingBox::new(r.x0, r.y0, r.w, r.h)?);
        }
        Ok(())
    }

    /// Box of the node or, failing that, of its nearest boxed ancestor.
    pub fn effective_box(&self, id: NodeId) -> Option<BoundingBox> {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let n = &self.nodes[c.index()];
            if n.bbox.is_some() {
                return n.bbox;
            }
            cur = n.parent;
        }
        None
    }

    /// True when the node or a descendant carries a text run.
    pub fn subtree_has_text(&self, id: NodeId) -> bool {
        self.subtree(id).any(|n| self.nodes[n.index()].has_text())
    }

    /// Element skeleton as HTML: tag names and escaped text, no attributes.
    pub fn to_html(&self) -> String {
        let mut out = String::new();
        self.write_html(self.root(), &mut out);
        out
    }

    fn write_html(&self, id: NodeId, out: &mut String) {
        // Explicit stack so pathological depth cannot overflow.
        enum Step {
            Open(NodeId),
            Text(NodeId, usize),
            Close(NodeId),
        }
        let mut stack = vec![Step::Open(id)];
        while let Some(step) = stack.pop() {
            match step {
                Step::Open(n) => {
                    let node = &self.nodes[n.index()];
                    out.push('<');
                    out.push_str(&node.name);
                    out.push('>');
                    if parse::is_void(&node.name) && node.children.is_empty() && node.text_runs.is_empty() {
                        continue;
                    }
                    stack.push(Step::Close(n));
                    // Interleave runs and children by slot, pushed in reverse.
                    let mut items: Vec<Step> = Vec::new();
                    let mut runs = node.text_runs.iter().enumerate().peekable();
                    for (slot, &child) in node.children.iter().enumerate() {
                        while let Some((ri, _)) = runs.next_if(|(_, r)| r.slot <= slot) {
                            items.push(Step::Text(n, ri));
                        }
                        items.push(Step::Open(child));
                    }
                    for (ri, _) in runs {
                        items.push(Step::Text(n, ri));
                    }
                    stack.extend(items.into_iter().rev());
                }
                Step::Text(n, ri) => {
                    parse::escape_text(&self.nodes[n.index()].text_runs[ri].text, out);
                }
                Step::Close(n) => {
                    out.push_str("</");
                    out.push_str(&self.nodes[n.index()].name);
                    out.push('>');
                }
            }
        }
    }

    /// Structural equality ignoring boxes: tag names, text runs and child order.
    pub fn isomorphic(&self, other: &DomTree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.name == b.name && a.text_runs == b.text_runs && a.children == b.children)
    }
}

/// Ordered relation of `a` to `b`.
pub fn node_relation(tree: &DomTree, a: NodeId, b: NodeId) -> Result<Relation> {
    let nb = tree.node(b)?;
    tree.node(a)?;
    Ok(if nb.parent == Some(a) {
        Relation::ParentChild
    } else if tree.is_ancestor(a, b) {
        Relation::AncestorDescendant
    } else {
        Relation::Other
    })
}

/// Number of structure and content tokens the subtree at `node` emits:
/// one leaf token for a childless element, a start/end pair otherwise,
/// plus the tokenized text of every run.
pub fn subtree_token_count<T: Tokenizer + ?Sized>(tree: &DomTree, node: NodeId, tokenizer: &T) -> usize {
    tree.subtree(node)
        .map(|id| {
            let n = tree.get(id);
            let structure = if n.is_leaf() { 1 } else { 2 };
            structure + n.text_runs.iter().map(|r| tokenizer.count(&r.text)).sum::<usize>()
        })
        .sum()
}

/// One line of `boxes.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub node_path: Vec<usize>,
    pub x0: i64,
    pub y0: i64,
    pub w: i64,
    pub h: i64,
}

pub fn parse_boxes_jsonl(text: &str) -> Result<Vec<BoxRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("boxes.jsonl line {}: {e}", i + 1))))
        .collect()
}

pub fn load_boxes_jsonl(path: &Path) -> Result<Vec<BoxRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boxes_jsonl(&text)
}
