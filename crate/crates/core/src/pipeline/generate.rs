use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dom::{load_boxes_jsonl, BoundingBox, BoxRecord};
use crate::error::{Error, Result};
use crate::objectives::derive_seed;
use crate::visual::Screenshot;

pub const HTML_FILE: &str = "page.html";
pub const PNG_FILE: &str = "screenshot.png";
pub const PPM_FILE: &str = "screenshot.ppm";
pub const BOXES_FILE: &str = "boxes.jsonl";
pub const CORPUS_FILE: &str = "corpus.toml";

const LEXICON: &[&str] = &[
    "the", "of", "and", "to", "in", "for", "is", "on", "with", "by", "as", "at", "from", "that", "this", "page",
    "home", "news", "about", "contact", "search", "price", "product", "review", "store", "shop", "cart", "order",
    "item", "new", "sale", "free", "shipping", "author", "title", "date", "year", "city", "team", "game", "score",
    "movie", "book", "music", "video", "photo", "travel", "hotel", "room", "rate", "phone", "email", "address",
    "school", "course", "student", "job", "salary", "company", "market", "stock", "report", "data", "table", "list",
    "menu", "link", "more", "read", "view", "open", "close", "help", "account", "login", "sign", "up", "user", "post",
    "comment", "share", "like", "follow", "top", "best", "latest", "popular", "local", "world", "sport", "health",
    "food", "recipe", "car", "house", "rent", "buy", "sell", "deal", "offer", "brand", "model", "color", "size",
    "weight", "length", "quality", "service", "support", "policy", "terms", "privacy", "blog", "event", "ticket",
    "show", "time", "day", "week", "month", "today", "open", "hours", "map", "guide", "tips",
];

const CONTAINERS: &[&str] = &[
    "div", "section", "article", "nav", "header", "footer", "main", "aside", "ul",
];
const LEAVES: &[&str] = &["p", "p", "p", "h1", "h2", "h3", "span", "a", "img"];

/// Glyph cell: a 5×7 dark block inside a 6×9 cell.
const GLYPH_W: i64 = 6;
const GLYPH_H: i64 = 9;

/// Parameters of the synthetic page corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub pages: usize,
    /// Levels below `<body>`, inclusive range.
    pub depth: [usize; 2],
    /// Children per container, inclusive range.
    pub branching: [usize; 2],
    /// Words per text element, inclusive range.
    pub words: [usize; 2],
    pub palette_seed: u64,
    pub width: usize,
    pub height: usize,
    /// Inset between a box and the boxes of its children.
    pub margin: i64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            pages: 20,
            depth: [2, 4],
            branching: [2, 4],
            words: [6, 40],
            palette_seed: 7,
            width: 800,
            height: 1200,
            margin: 4,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [usize; 2], min: usize| {
            if r[0] > r[1] || r[0] < min {
                Err(Error::Config(format!("{name} range {r:?} is empty or below {min}")))
            } else {
                Ok(())
            }
        };
        range("depth", self.depth, 1)?;
        range("branching", self.branching, 1)?;
        range("words", self.words, 1)?;
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(format!(
                "page must be at least 64x64, got {}x{}",
                self.width, self.height
            )));
        }
        if self.margin < 0 || 4 * self.margin >= self.width.min(self.height) as i64 {
            return Err(Error::Config(format!("margin {} does not fit the page", self.margin)));
        }
        Ok(())
    }

    pub fn page_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

/// Generated page: HTML, raster and per-element boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct PageBundle {
    pub html: String,
    pub screenshot: Screenshot,
    pub boxes: Vec<BoxRecord>,
}

impl PageBundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let html = dir.join(HTML_FILE);
        fs::write(&html, &self.html).map_err(|e| Error::io(&html, e))?;
        self.screenshot.save(&dir.join(PNG_FILE))?;
        let mut lines = String::new();
        for b in &self.boxes {
            lines.push_str(&serde_json::to_string(b).expect("box serializes"));
            lines.push('\n');
        }
        let boxes = dir.join(BOXES_FILE);
        fs::write(&boxes, lines).map_err(|e| Error::io(&boxes, e))
    }

    /// Reads `page.html`, `screenshot.png` (or `.ppm`) and `boxes.jsonl`.
    pub fn read(dir: &Path) -> Result<Self> {
        let html_path = dir.join(HTML_FILE);
        let html = fs::read_to_string(&html_path).map_err(|e| Error::io(&html_path, e))?;
        let png = dir.join(PNG_FILE);
        let raster = if png.exists() { png } else { dir.join(PPM_FILE) };
        let screenshot = Screenshot::load(&raster)?;
        let boxes = load_boxes_jsonl(&dir.join(BOXES_FILE))?;
        Ok(Self {
            html,
            screenshot,
            boxes,
        })
    }

    pub fn raster_path(dir: &Path) -> PathBuf {
        let png = dir.join(PNG_FILE);
        if png.exists() {
            png
        } else {
            dir.join(PPM_FILE)
        }
    }
}

struct GenNode {
    name: &'static str,
    children: Vec<usize>,
    text: Option<String>,
    bbox: Option<BoundingBox>,
    color: [f64; 3],
}

fn palette(seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..8)
        .map(|_| [0, 1, 2].map(|_| rng.random_range(170u8..=250) as f64 / 255.0))
        .collect()
}

fn inset(b: &BoundingBox, m: i64) -> BoundingBox {
    BoundingBox {
        x0: b.x0 + m,
        y0: b.y0 + m,
        w: (b.w - 2 * m).max(0),
        h: (b.h - 2 * m).max(0),
    }
}

/// Splits `area` into `n` boxes along one axis with `gap` between them.
fn split(area: &BoundingBox, n: usize, vertical: bool, gap: i64, rng: &mut ChaCha8Rng) -> Vec<BoundingBox> {
    let total = if vertical { area.h } else { area.w } - gap * (n as i64 - 1);
    let weights: Vec<i64> = (0..n).map(|_| rng.random_range(2..=5)).collect();
    let sum: i64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut at = 0;
    let mut used = 0;
    for (i, w) in weights.iter().enumerate() {
        let len = if i + 1 == n { total - used } else { total * w / sum };
        let b = if vertical {
            BoundingBox {
                x0: area.x0,
                y0: area.y0 + at,
                w: area.w,
                h: len,
            }
        } else {
            BoundingBox {
                x0: area.x0 + at,
                y0: area.y0,
                w: len,
                h: area.h,
            }
        };
        out.push(b);
        at += len + gap;
        used += len;
    }
    out
}

fn words(rng: &mut ChaCha8Rng, range: [usize; 2]) -> String {
    let n = rng.random_range(range[0]..=range[1]);
    (0..n)
        .map(|_| LEXICON[rng.random_range(0..LEXICON.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministically generates one page: a random element tree laid out by
/// recursive subdivision, painted as palette rectangles with block glyphs.
pub fn generate_page(spec: &CorpusSpec, page_seed: u64) -> Result<PageBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(page_seed);
    let colors = palette(spec.palette_seed);
    let m = spec.margin;
    let page = BoundingBox {
        x0: 0,
        y0: 0,
        w: spec.width as i64,
        h: spec.height as i64,
    };
    let white = [1.0, 1.0, 1.0];
    let mut nodes = vec![
        GenNode {
            name: "html",
            children: vec![1, 4],
            text: None,
            bbox: Some(page),
            color: white,
        },
        GenNode {
            name: "head",
            children: vec![2, 3],
            text: None,
            bbox: None,
            color: white,
        },
        GenNode {
            name: "title",
            children: vec![],
            text: Some(format!("page {page_seed}")),
            bbox: None,
            color: white,
        },
        GenNode {
            name: "script",
            children: vec![],
            text: Some("var seed = 1;".into()),
            bbox: None,
            color: white,
        },
        GenNode {
            name: "body",
            children: vec![],
            text: None,
            bbox: Some(inset(&page, m)),
            color: white,
        },
    ];
    let depth = rng.random_range(spec.depth[0]..=spec.depth[1]);
    // (node, level); body is level 0
    let mut stack = vec![(4usize, 0usize)];
    while let Some((id, level)) = stack.pop() {
        let area = inset(&nodes[id].bbox.expect("laid-out node"), m);
        let is_list = nodes[id].name == "ul";
        let n = rng.random_range(spec.branching[0]..=spec.branching[1]);
        let vertical = level % 2 == 0 || is_list;
        let min_len = if vertical { GLYPH_H + 2 * m } else { 4 * GLYPH_W + 2 * m };
        let room = if vertical { area.h } else { area.w } - m * (n as i64 - 1);
        if room < n as i64 * min_len || area.w < 4 * GLYPH_W + 2 * m {
            // too small to subdivide: turn into a text leaf
            nodes[id].name = if is_list { "li" } else { "p" };
            nodes[id].text = Some(words(&mut rng, spec.words));
            continue;
        }
        let boxes = split(&area, n, vertical, m, &mut rng);
        let mut children = Vec::with_capacity(n);
        for b in boxes {
            let child_level = level + 1;
            let leaf = is_list || child_level >= depth || (child_level > 1 && rng.random::<f64>() < 0.2);
            let (name, text) = if is_list {
                ("li", Some(words(&mut rng, spec.words)))
            } else if leaf {
                let name = LEAVES[rng.random_range(0..LEAVES.len())];
                let text = (name != "img").then(|| words(&mut rng, spec.words));
                (name, text)
            } else {
                (CONTAINERS[rng.random_range(0..CONTAINERS.len())], None)
            };
            let color = colors[rng.random_range(0..colors.len())];
            let cid = nodes.len();
            nodes.push(GenNode {
                name,
                children: vec![],
                text,
                bbox: Some(b),
                color,
            });
            children.push(cid);
            if !leaf && !is_list {
                stack.push((cid, child_level));
            }
        }
        // keep document order for later traversal; stack order does not matter
        nodes[id].children = children;
    }

    let mut shot = Screenshot::filled(spec.width, spec.height, white)?;
    let mut html = String::new();
    let mut boxes = Vec::new();
    enum Step {
        Open(usize, Vec<usize>),
        Close(usize),
    }
    let mut work = vec![Step::Open(0, vec![])];
    while let Some(step) = work.pop() {
        match step {
            Step::Open(id, path) => {
                let node = &nodes[id];
                if let Some(b) = node.bbox {
                    boxes.push(BoxRecord {
                        node_path: path.clone(),
                        x0: b.x0,
                        y0: b.y0,
                        w: b.w,
                        h: b.h,
                    });
                    if id != 0 && node.name != "body" {
                        shot.fill_rect(b.x0, b.y0, b.w, b.h, node.color);
                    }
                    if let Some(t) = &node.text {
                        draw_text(&mut shot, &inset(&b, 2), t);
                    }
                }
                html.push('<');
                html.push_str(node.name);
                html.push('>');
                if node.name == "img" {
                    continue;
                }
                if let Some(t) = &node.text {
                    html.push_str(t);
                }
                work.push(Step::Close(id));
                for (k, &c) in node.children.iter().enumerate().rev() {
                    let mut p = path.clone();
                    p.push(k);
                    work.push(Step::Open(c, p));
                }
            }
            Step::Close(id) => {
                html.push_str("</");
                html.push_str(nodes[id].name);
                html.push('>');
            }
        }
    }
    html.push('\n');
    Ok(PageBundle {
        html,
        screenshot: shot,
        boxes,
    })
}

/// Block glyph rows: one dark 5×7 block per character, wrapped by word.
fn draw_text(shot: &mut Screenshot, area: &BoundingBox, text: &str) {
    let ink = [30.0 / 255.0, 30.0 / 255.0, 36.0 / 255.0];
    let cols = (area.w / GLYPH_W).max(0);
    let rows = (area.h / GLYPH_H).max(0);
    let (mut col, mut row) = (0i64, 0i64);
    for word in text.split_whitespace() {
        let len = word.chars().count() as i64;
        if col > 0 && col + len > cols {
            col = 0;
            row += 1;
        }
        if row >= rows {
            return;
        }
        for k in 0..len.min(cols) {
            shot.fill_rect(
                area.x0 + (col + k) * GLYPH_W,
                area.y0 + row * GLYPH_H,
                GLYPH_W - 1,
                GLYPH_H - 2,
                ink,
            );
        }
        col += len + 1;
    }
}

/// Writes `pages` bundles (`page_00000`, ...) and a copy of the spec.
pub fn generate_corpus(spec: &CorpusSpec, out: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let spec_path = out.join(CORPUS_FILE);
    fs::write(&spec_path, spec.to_toml()).map_err(|e| Error::io(&spec_path, e))?;
    let mut dirs = Vec::with_capacity(spec.pages);
    for i in 0..spec.pages {
        let dir = out.join(format!("page_{i:05}"));
        generate_page(spec, spec.page_seed(i))?.write(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::{parse_html, TagVocab};

    fn spec() -> CorpusSpec {
        CorpusSpec {
            width: 400,
            height: 600,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn degenerate_spec_gives_single_leaf() {
        let s = CorpusSpec {
            depth: [1, 1],
            branching: [1, 1],
            ..spec()
        };
        let page = generate_page(&s, 3).unwrap();
        let tree = parse_html(&page.html, &TagVocab::default()).unwrap();
        let body = tree.node_at_path(&[1]).unwrap();
        assert_eq!(tree.get(body).name, "body");
        assert_eq!(tree.get(body).children.len(), 1);
        let leaf = tree.get(body).children[0];
        assert!(tree.get(leaf).children.is_empty());
        let body_box = page.boxes.iter().find(|b| b.node_path == [1]).unwrap();
        let leaf_box = page.boxes.iter().find(|b| b.node_path == [1, 0]).unwrap();
        let m = s.margin;
        assert_eq!(
            (leaf_box.x0, leaf_box.y0, leaf_box.w, leaf_box.h),
            (body_box.x0 + m, body_box.y0 + m, body_box.w - 2 * m, body_box.h - 2 * m)
        );
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let a = generate_page(&spec(), 42).unwrap();
        let b = generate_page(&spec(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.html, generate_page(&spec(), 43).unwrap().html);
    }

    #[test]
    fn boxes_nest_with_margin() {
        let s = spec();
        for seed in 0..20 {
            let page = generate_page(&s, seed).unwrap();
            for b in &page.boxes {
                if b.node_path.is_empty() {
                    continue;
                }
                let parent = &b.node_path[..b.node_path.len() - 1];
                let p = page.boxes.iter().find(|q| q.node_path == parent).unwrap();
                let m = s.margin;
                assert!(b.x0 >= p.x0 + m && b.y0 >= p.y0 + m, "{b:?} in {p:?}");
                assert!(
                    b.x0 + b.w <= p.x0 + p.w - m && b.y0 + b.h <= p.y0 + p.h - m,
                    "{b:?} in {p:?}"
                );
            }
        }
    }

    #[test]
    fn html_reparses_with_every_box_path() {
        for seed in 0..10 {
            let page = generate_page(&spec(), seed).unwrap();
            let mut tree = parse_html(&page.html, &TagVocab::default()).unwrap();
            tree.apply_boxes(&page.boxes).unwrap();
            let boxed = tree.nodes().iter().filter(|n| n.bbox.is_some()).count();
            assert_eq!(boxed, page.boxes.len());
            // head, title and script carry no box
            assert_eq!(tree.len(), boxed + 3);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(CorpusSpec {
            depth: [3, 2],
            ..spec()
        }
        .validate()
        .is_err());
        assert!(CorpusSpec { width: 32, ..spec() }.validate().is_err());
        assert!(CorpusSpec::parse("pages = 2\ndepth = [1, 2]\n").is_ok());
        assert!(CorpusSpec::parse("pagez = 2\n").is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let page = generate_page(&spec(), 5).unwrap();
        page.write(dir.path()).unwrap();
        assert_eq!(PageBundle::read(dir.path()).unwrap(), page);
    }
}
