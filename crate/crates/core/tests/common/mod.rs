//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use ndarray::Array1;
use rand::Rng;
use weblm::dom::{parse_html, simplify_tree, DomTree, NodeId, Relation, TagId, TagVocab};
use weblm::input::{StructureKind, TokenKind, TokenSequence};
use weblm::visual::{FeatureGrid, NormalizedBox};

/// Elements with no parser-implied closing rules.
const TAGS: [&str; 14] = [
    "div",
    "section",
    "article",
    "aside",
    "nav",
    "header",
    "footer",
    "main",
    "span",
    "em",
    "strong",
    "figure",
    "blockquote",
    "small",
];
const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "red", "blue", "news", "price", "a", "b", "7", "go",
];

fn words<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=4);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn element<R: Rng>(rng: &mut R, depth: usize, budget: &mut usize, out: &mut String) {
    *budget -= 1;
    let tag = TAGS[rng.random_range(0..TAGS.len())];
    out.push('<');
    out.push_str(tag);
    if rng.random_bool(0.2) {
        let (x, y) = (rng.random_range(0..500), rng.random_range(0..500));
        out.push_str(&format!(
            " data-box=\"{x},{y},{},{}\"",
            rng.random_range(1..100),
            rng.random_range(1..100)
        ));
    }
    out.push('>');
    let kids = if depth >= 8 { 0 } else { rng.random_range(0..=4) };
    for _ in 0..kids {
        if rng.random_bool(0.3) {
            out.push_str(&words(rng));
        }
        if *budget == 0 {
            break;
        }
        element(rng, depth + 1, budget, out);
    }
    if rng.random_bool(0.35) {
        out.push_str(&words(rng));
    }
    out.push_str("</");
    out.push_str(tag);
    out.push('>');
}

/// Random document with at most `max_elements` elements under `<body>`.
pub fn random_html<R: Rng>(rng: &mut R, max_elements: usize) -> String {
    let mut budget = max_elements;
    let mut out = String::from("<html><body>");
    while budget > 0 && (out.len() == 12 || rng.random_bool(0.7)) {
        element(rng, 0, &mut budget, &mut out);
    }
    out.push_str("</body></html>");
    out
}

pub fn random_simplified_tree<R: Rng>(rng: &mut R, max_elements: usize) -> DomTree {
    simplify_tree(&parse_html(&random_html(rng, max_elements), &TagVocab::default()).unwrap())
}

/// Relation from explicit ancestor sets, built by walking parent links.
pub struct AncestorOracle {
    parent: Vec<Option<usize>>,
    ancestors: Vec<HashSet<usize>>,
}

impl AncestorOracle {
    pub fn new(tree: &DomTree) -> Self {
        let parent: Vec<Option<usize>> = tree.nodes().iter().map(|n| n.parent.map(|p| p.index())).collect();
        let ancestors = (0..parent.len())
            .map(|i| {
                let mut set = HashSet::new();
                let mut cur = parent[i];
                while let Some(p) = cur {
                    set.insert(p);
                    cur = parent[p];
                }
                set
            })
            .collect();
        Self { parent, ancestors }
    }

    pub fn relation(&self, a: usize, b: usize) -> Relation {
        if self.parent[b] == Some(a) {
            Relation::ParentChild
        } else if self.ancestors[b].contains(&a) {
            Relation::AncestorDescendant
        } else {
            Relation::Other
        }
    }
}

/// Owned tree used by the rewrite oracles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plain {
    pub name: String,
    pub text: String,
    pub boxed: bool,
    pub children: Vec<Plain>,
}

impl Plain {
    pub fn from_tree(tree: &DomTree, id: NodeId) -> Plain {
        let n = tree.get(id);
        Plain {
            name: n.name.clone(),
            text: n
                .text_runs
                .iter()
                .map(|r| r.text.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            boxed: n.bbox.is_some(),
            children: n.children.iter().map(|&c| Plain::from_tree(tree, c)).collect(),
        }
    }

    fn has_content(&self) -> bool {
        self.boxed || !self.text.is_empty() || self.children.iter().any(Plain::has_content)
    }

    fn prune(&mut self) {
        self.children.retain(Plain::has_content);
        for c in &mut self.children {
            c.prune();
        }
    }

    /// Applies one collapse somewhere below the root, if any applies.
    fn collapse_once(&mut self) -> bool {
        for c in &mut self.children {
            if !matches!(c.name.as_str(), "html" | "body") && c.text.is_empty() && c.children.len() == 1 {
                let only = c.children.pop().unwrap();
                *c = only;
                return true;
            }
            if c.collapse_once() {
                return true;
            }
        }
        false
    }
}

/// Prune then collapse one node at a time until nothing changes.
pub fn naive_simplify(tree: &DomTree) -> Plain {
    let mut p = Plain::from_tree(tree, tree.root());
    p.prune();
    while p.collapse_once() {}
    p
}

/// `(tag, children)` shape of an element tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    pub tag: TagId,
    pub children: Vec<Shape>,
}

pub fn shape_of(tree: &DomTree, id: NodeId) -> Shape {
    let n = tree.get(id);
    Shape {
        tag: n.tag,
        children: n.children.iter().map(|&c| shape_of(tree, c)).collect(),
    }
}

/// Rebuilds the element forest from structure tokens alone by bracket
/// matching. `None` if the brackets do not match.
pub fn rebuild_from_structure(seq: &TokenSequence) -> Option<Vec<Shape>> {
    let mut stack: Vec<Shape> = vec![Shape {
        tag: TagId(u16::MAX),
        children: Vec::new(),
    }];
    for t in &seq.tokens {
        match t.kind {
            TokenKind::Structure(StructureKind::StartTag) => stack.push(Shape {
                tag: t.tag,
                children: Vec::new(),
            }),
            TokenKind::Structure(StructureKind::LeafTag) => stack.last_mut()?.children.push(Shape {
                tag: t.tag,
                children: Vec::new(),
            }),
            TokenKind::Structure(StructureKind::EndTag) => {
                if stack.len() < 2 {
                    return None;
                }
                let done = stack.pop()?;
                if done.tag != t.tag {
                    return None;
                }
                stack.last_mut()?.children.push(done);
            }
            _ => {}
        }
    }
    (stack.len() == 1).then(|| stack.pop().unwrap().children)
}

/// Center-containment pooling by direct enumeration with float cell centers.
pub fn brute_pool(grid: &FeatureGrid, b: &NormalizedBox) -> Array1<f64> {
    let side = grid.side;
    let center = |k: usize| (2 * k + 1) as f64 * 1000.0 / (2 * side) as f64;
    let inside = |k: usize, lo: u16, hi: u16| lo as f64 <= center(k) && center(k) <= hi as f64;
    let mut cells = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if inside(r, b.y0, b.y1) && inside(c, b.x0, b.x1) {
                cells.push(r * side + c);
            }
        }
    }
    if cells.is_empty() {
        let at =
            |lo: u16, hi: u16| (((lo as f64 + hi as f64) / 2.0 / 1000.0 * side as f64).floor() as usize).min(side - 1);
        cells.push(at(b.y0, b.y1) * side + at(b.x0, b.x1));
    }
    let mut acc = Array1::<f64>::zeros(grid.cells.ncols());
    for &i in &cells {
        acc += &grid.cells.row(i);
    }
    acc / cells.len() as f64
}

/// Central interval of Binomial(n, p) holding at least `coverage` of the mass,
/// from a log-space pmf.
pub fn binomial_interval(n: u64, p: f64, coverage: f64) -> (u64, u64) {
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for k in 1..=n as usize {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let pmf = |k: u64| {
        let k = k as usize;
        (ln_fact[n as usize] - ln_fact[k] - ln_fact[n as usize - k]
            + k as f64 * p.ln()
            + (n as usize - k) as f64 * (1.0 - p).ln())
        .exp()
    };
    let tail = (1.0 - coverage) / 2.0;
    let mut cdf = 0.0;
    let mut lo = 0;
    while cdf + pmf(lo) <= tail {
        cdf += pmf(lo);
        lo += 1;
    }
    let mut upper = 0.0;
    let mut hi = n;
    while upper + pmf(hi) <= tail {
        upper += pmf(hi);
        hi -= 1;
    }
    (lo, hi)
}
