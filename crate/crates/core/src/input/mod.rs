//! Model input construction: structural separation of a (sub)tree into a
//! `[CLS] structure [SEP] content [SEP]` sequence, segment extraction for
//! pre-training, and fine-tuning input shaping.

mod finetune;
mod segments;

use serde::{Deserialize, Serialize};

use crate::dom::{DomTree, NodeId, TagId};
use crate::error::{Error, Result};
use crate::tokenizer::{Tokenizer, CLS_ID, END_TAG_ID, LEAF_TAG_ID, SEP_ID, START_TAG_ID};

pub use finetune::{attach_question, shape_finetune_inputs, sliding_window};
pub use segments::{extract_segments, segment_len};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    StartTag,
    EndTag,
    LeafTag,
}

impl StructureKind {
    pub fn index(self) -> u32 {
        match self {
            StructureKind::StartTag => 0,
            StructureKind::EndTag => 1,
            StructureKind::LeafTag => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Special,
    Structure(StructureKind),
    Content,
}

/// Segment embedding class: structure (`[S]`) or content (`[C]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Structure,
    Content,
}

impl Segment {
    pub fn index(self) -> usize {
        match self {
            Segment::Structure => 0,
            Segment::Content => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub kind: TokenKind,
    /// Aligned DOM node.
    pub node: NodeId,
    pub tag: TagId,
    pub segment: Segment,
    pub pos: u32,
}

impl Token {
    pub fn is_structure(&self) -> bool {
        matches!(self.kind, TokenKind::Structure(_))
    }

    pub fn is_content(&self) -> bool {
        self.kind == TokenKind::Content
    }
}

/// The unit a sequence was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentRoot {
    Node(NodeId),
    /// Consecutive children `first..first + count` of `parent`.
    Siblings {
        parent: NodeId,
        first: usize,
        count: usize,
    },
}

impl SegmentRoot {
    /// Node that specials attach to.
    pub fn anchor(&self) -> NodeId {
        match *self {
            SegmentRoot::Node(n) => n,
            SegmentRoot::Siblings { parent, .. } => parent,
        }
    }

    /// Top-level nodes whose subtrees form the segment.
    pub fn tops(&self, tree: &DomTree) -> Vec<NodeId> {
        match *self {
            SegmentRoot::Node(n) => vec![n],
            SegmentRoot::Siblings { parent, first, count } => tree.get(parent).children[first..first + count].to_vec(),
        }
    }

    /// All nodes covered by the segment, in preorder.
    pub fn covered(&self, tree: &DomTree) -> Vec<NodeId> {
        self.tops(tree).into_iter().flat_map(|t| tree.subtree(t)).collect()
    }
}

/// How structure tokens map onto token-embedding ids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureVocab {
    /// Three shared ids; tag identity comes only from the tag embedding.
    #[default]
    ThreeIds,
    /// One id per (tag, kind), placed after the text vocabulary.
    TagNames,
}

impl StructureVocab {
    pub fn token_id(self, kind: StructureKind, tag: TagId, text_vocab: usize) -> u32 {
        match self {
            StructureVocab::ThreeIds => match kind {
                StructureKind::StartTag => START_TAG_ID,
                StructureKind::EndTag => END_TAG_ID,
                StructureKind::LeafTag => LEAF_TAG_ID,
            },
            StructureVocab::TagNames => text_vocab as u32 + tag.0 as u32 * 3 + kind.index(),
        }
    }

    /// Size of the token-embedding table for the given vocabularies.
    pub fn embedding_rows(self, text_vocab: usize, tag_vocab: usize) -> usize {
        match self {
            StructureVocab::ThreeIds => text_vocab,
            StructureVocab::TagNames => text_vocab + 3 * tag_vocab,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub max_seq_len: usize,
    pub seg_min: usize,
    pub seg_max: usize,
    pub structure_budget: usize,
    pub window_stride: usize,
    pub structure_vocab: StructureVocab,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            max_seq_len: 512,
            seg_min: 128,
            seg_max: 512,
            structure_budget: 256,
            window_stride: 128,
            structure_vocab: StructureVocab::ThreeIds,
        }
    }
}

impl InputConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len < 3 {
            return Err(Error::Config("max_seq_len must be at least 3".into()));
        }
        if self.seg_min > self.seg_max || self.seg_max > self.max_seq_len {
            return Err(Error::Config(format!(
                "segment bounds must satisfy seg_min <= seg_max <= max_seq_len ({} / {} / {})",
                self.seg_min, self.seg_max, self.max_seq_len
            )));
        }
        if self.window_stride == 0 {
            return Err(Error::Config("window_stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub root: SegmentRoot,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of the `[SEP]` closing the structure part.
    pub fn first_sep(&self) -> usize {
        self.tokens
            .iter()
            .position(|t| t.kind == TokenKind::Special && t.id == SEP_ID)
            .unwrap_or(self.tokens.len())
    }

    pub fn structure(&self) -> &[Token] {
        &self.tokens[1..self.first_sep()]
    }

    pub fn content(&self) -> &[Token] {
        let sep = self.first_sep();
        &self.tokens[sep + 1..self.tokens.len() - 1]
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Builds a sequence from its two parts, adding specials and positions.
    pub(crate) fn assemble(root: SegmentRoot, anchor_tag: TagId, structure: &[Token], content: &[Token]) -> Self {
        let anchor = root.anchor();
        let special = |id, segment| Token {
            id,
            kind: TokenKind::Special,
            node: anchor,
            tag: anchor_tag,
            segment,
            pos: 0,
        };
        let mut tokens = Vec::with_capacity(structure.len() + content.len() + 3);
        tokens.push(special(CLS_ID, Segment::Structure));
        tokens.extend_from_slice(structure);
        tokens.push(special(SEP_ID, Segment::Structure));
        tokens.extend_from_slice(content);
        tokens.push(special(SEP_ID, Segment::Content));
        for (i, t) in tokens.iter_mut().enumerate() {
            t.pos = i as u32;
        }
        Self { tokens, root }
    }

    /// Checks the layout, segment, position and alignment invariants.
    pub fn validate(&self, tree: &DomTree) -> Result<()> {
        if let Some(i) = self.tokens.iter().position(|t| !tree.contains(t.node)) {
            return Err(Error::Alignment(format!(
                "token {i} aligned to missing node {}",
                self.tokens[i].node
            )));
        }
        self.validate_layout()
    }

    /// Tree-free checks: specials, segments and positions.
    pub fn validate_layout(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Alignment(m));
        let n = self.tokens.len();
        if n < 3 {
            return bad(format!("sequence of length {n} cannot hold three specials"));
        }
        let first = &self.tokens[0];
        let last = &self.tokens[n - 1];
        if first.kind != TokenKind::Special || first.id != CLS_ID {
            return bad("sequence must start with [CLS]".into());
        }
        if last.kind != TokenKind::Special || last.id != SEP_ID || last.segment != Segment::Content {
            return bad("sequence must end with a content [SEP]".into());
        }
        let sep = self.first_sep();
        if sep == n - 1 {
            return bad("missing structure [SEP]".into());
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.pos as usize != i {
                return bad(format!("token {i} has position {}", t.pos));
            }
            let expect = if i == 0 || i == sep {
                (true, Segment::Structure)
            } else if i == n - 1 {
                (true, Segment::Content)
            } else if i < sep {
                if !t.is_structure() {
                    return bad(format!("token {i} in the structure part is not a structure token"));
                }
                (false, Segment::Structure)
            } else {
                if !t.is_content() {
                    return bad(format!("token {i} in the content part is not a content token"));
                }
                (false, Segment::Content)
            };
            if (t.kind == TokenKind::Special) != expect.0 || t.segment != expect.1 {
                return bad(format!("token {i} has kind {:?} / segment {:?}", t.kind, t.segment));
            }
        }
        Ok(())
    }

    /// Whether every start tag is closed by an end tag for the same node.
    /// Holds for untruncated sequences.
    pub fn is_balanced(&self) -> bool {
        let mut open = Vec::new();
        for t in self.structure() {
            match t.kind {
                TokenKind::Structure(StructureKind::StartTag) => open.push(t.node),
                TokenKind::Structure(StructureKind::EndTag) if open.pop() != Some(t.node) => {
                    return false;
                }
                _ => {}
            }
        }
        open.is_empty()
    }
}

/// Depth-first structural separation of the subtree(s) at `root`.
pub fn structural_separate<T: Tokenizer + ?Sized>(
    tree: &DomTree,
    root: SegmentRoot,
    tokenizer: &T,
    config: &InputConfig,
) -> Result<TokenSequence> {
    enum Step {
        Open(NodeId),
        Text(NodeId, usize),
        Close(NodeId),
    }
    let anchor = tree.node(root.anchor())?;
    if let SegmentRoot::Siblings { first, count, .. } = root {
        if count == 0 || first + count > anchor.children.len() {
            return Err(Error::InvalidNode(root.anchor().index()));
        }
    }
    let text_vocab = tokenizer.vocab_size();
    let mut structure = Vec::new();
    let mut content = Vec::new();
    let push_structure = |structure: &mut Vec<Token>, kind, node: NodeId| {
        let tag = tree.get(node).tag;
        structure.push(Token {
            id: config.structure_vocab.token_id(kind, tag, text_vocab),
            kind: TokenKind::Structure(kind),
            node,
            tag,
            segment: Segment::Structure,
            pos: 0,
        });
    };
    let mut stack: Vec<Step> = root.tops(tree).into_iter().rev().map(Step::Open).collect();
    while let Some(step) = stack.pop() {
        match step {
            Step::Open(id) => {
                let node = tree.get(id);
                if node.is_leaf() {
                    push_structure(&mut structure, StructureKind::LeafTag, id);
                    for ri in (0..node.text_runs.len()).rev() {
                        stack.push(Step::Text(id, ri));
                    }
                    continue;
                }
                push_structure(&mut structure, StructureKind::StartTag, id);
                stack.push(Step::Close(id));
                let mut items = Vec::with_capacity(node.children.len() + node.text_runs.len());
                let mut runs = node.text_runs.iter().enumerate().peekable();
                for (slot, &child) in node.children.iter().enumerate() {
                    while let Some((ri, _)) = runs.next_if(|(_, r)| r.slot <= slot) {
                        items.push(Step::Text(id, ri));
                    }
                    items.push(Step::Open(child));
                }
                items.extend(runs.map(|(ri, _)| Step::Text(id, ri)));
                stack.extend(items.into_iter().rev());
            }
            Step::Text(id, ri) => {
                let node = tree.get(id);
                for tok in tokenizer.tokenize(&node.text_runs[ri].text) {
                    content.push(Token {
                        id: tok,
                        kind: TokenKind::Content,
                        node: id,
                        tag: node.tag,
                        segment: Segment::Content,
                        pos: 0,
                    });
                }
            }
            Step::Close(id) => push_structure(&mut structure, StructureKind::EndTag, id),
        }
    }
    let len = structure.len() + content.len() + 3;
    if len > config.max_seq_len {
        return Err(Error::SegmentTooLong {
            len,
            max: config.max_seq_len,
        });
    }
    Ok(TokenSequence::assemble(root, anchor.tag, &structure, &content))
}
