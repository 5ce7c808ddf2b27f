//! Tolerant HTML tokenizer and tree builder.
//!
//! Never fails on tag soup: stray end tags are ignored, unclosed elements
//! are closed by the nearest matching end tag of an ancestor or at end of
//! input, and a handful of HTML's implicit-close rules (`p`, `li`, table
//! cells, headings, ...) are applied when a start tag arrives.

use super::{BoundingBox, DomTree, RawNode, TagVocab, TextRun};
use crate::error::{Error, Result};

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

/// Raw-text elements whose content is never rendered as text.
const HIDDEN_RAW_TEXT: &[&str] = &["script", "style", "title", "noscript"];

/// Raw-text elements whose content is kept.
const RCDATA: &[&str] = &["textarea"];

/// Start tags that implicitly close an open `p`.
const CLOSES_P: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "details",
    "dialog",
    "div",
    "dl",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hgroup",
    "hr",
    "main",
    "menu",
    "nav",
    "ol",
    "p",
    "pre",
    "search",
    "section",
    "table",
    "ul",
    "li",
    "dt",
    "dd",
];

const HEADINGS: &[&str] = &["h1", "h2", "h3", "h4", "h5", "h6"];

/// Elements that stop the search for an element to implicitly close.
const SCOPE_BOUNDARY: &[&str] = &[
    "html", "body", "table", "td", "th", "caption", "button", "object", "template", "marquee", "applet",
];

pub(crate) fn is_void(name: &str) -> bool {
    VOID.contains(&name)
}

pub(crate) fn escape_text(text: &str, out: &mut String) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
}

#[derive(Debug, PartialEq)]
enum Lexeme {
    Start {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    End(String),
    Text(String),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    /// Set after a raw-text start tag; the next lexeme is its body.
    raw_until: Option<String>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            raw_until: None,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_past(&mut self, needle: &str) {
        match self.rest().find(needle) {
            Some(i) => self.pos += i + needle.len(),
            None => self.pos = self.src.len(),
        }
    }

    fn raw_text(&mut self, name: &str) -> Lexeme {
        let rest = self.rest();
        let lower = rest.to_ascii_lowercase();
        let close = format!("</{name}");
        let end = lower.find(&close).unwrap_or(rest.len());
        let body = &rest[..end];
        self.pos += end;
        if RCDATA.contains(&name) {
            Lexeme::Text(decode_entities(body))
        } else {
            Lexeme::Text(body.to_string())
        }
    }

    fn next(&mut self) -> Option<Lexeme> {
        if let Some(name) = self.raw_until.take() {
            let lx = self.raw_text(&name);
            if !matches!(&lx, Lexeme::Text(t) if t.is_empty()) {
                return Some(lx);
            }
        }
        loop {
            let rest = self.rest();
            if rest.is_empty() {
                return None;
            }
            if !rest.starts_with('<') {
                let end = rest.find('<').unwrap_or(rest.len());
                self.pos += end;
                return Some(Lexeme::Text(decode_entities(&rest[..end])));
            }
            let bytes = rest.as_bytes();
            if rest.starts_with("<!--") {
                self.pos += 4;
                self.skip_past("-->");
                continue;
            }
            if rest.starts_with("<!") || rest.starts_with("<?") {
                if rest.starts_with("<![CDATA[") {
                    self.skip_past("]]>");
                } else {
                    self.skip_past(">");
                }
                continue;
            }
            if rest.starts_with("</") && bytes.get(2).is_some_and(|b| b.is_ascii_alphabetic()) {
                self.pos += 2;
                let name = self.read_name();
                self.skip_past(">");
                return Some(Lexeme::End(name));
            }
            if bytes.get(1).is_some_and(|b| b.is_ascii_alphabetic()) {
                self.pos += 1;
                return Some(self.start_tag());
            }
            // A lone '<' is literal text.
            self.pos += 1;
            return Some(Lexeme::Text("<".into()));
        }
    }

    fn read_name(&mut self) -> String {
        let rest = self.rest();
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '/' || c == '>')
            .unwrap_or(rest.len());
        self.pos += end;
        rest[..end].to_ascii_lowercase()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        let n = rest.len() - rest.trim_start().len();
        self.pos += n;
    }

    fn start_tag(&mut self) -> Lexeme {
        let name = self.read_name();
        let mut attrs = Vec::new();
        let mut self_closing = false;
        loop {
            self.skip_ws();
            let rest = self.rest();
            if rest.is_empty() {
                break;
            }
            if rest.starts_with('>') {
                self.pos += 1;
                break;
            }
            if rest.starts_with("/>") {
                self.pos += 2;
                self_closing = true;
                break;
            }
            if rest.starts_with('/') {
                self.pos += 1;
                continue;
            }
            let end = rest
                .find(|c: char| c.is_whitespace() || c == '=' || c == '>' || c == '/')
                .unwrap_or(rest.len())
                .max(1);
            let key = rest[..end].to_ascii_lowercase();
            self.pos += end;
            self.skip_ws();
            let mut value = String::new();
            if self.rest().starts_with('=') {
                self.pos += 1;
                self.skip_ws();
                let rest = self.rest();
                if let Some(q) = rest.chars().next().filter(|&c| c == '"' || c == '\'') {
                    let body = &rest[1..];
                    let end = body.find(q).unwrap_or(body.len());
                    value = decode_entities(&body[..end]);
                    self.pos += 1 + end + usize::from(end < body.len());
                } else {
                    let end = rest.find(|c: char| c.is_whitespace() || c == '>').unwrap_or(rest.len());
                    value = decode_entities(&rest[..end]);
                    self.pos += end;
                }
            }
            attrs.push((key, value));
        }
        if !self_closing && (HIDDEN_RAW_TEXT.contains(&name.as_str()) || RCDATA.contains(&name.as_str())) {
            self.raw_until = Some(name.clone());
        }
        Lexeme::Start {
            name,
            attrs,
            self_closing,
        }
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let semi = rest[1..].find(';').map(|j| j + 1).filter(|&j| j <= 10);
        let decoded = semi.and_then(|j| {
            let ent = &rest[1..j];
            let ch = match ent {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => {
                    if let Some(hex) = ent.strip_prefix("#x").or_else(|| ent.strip_prefix("#X")) {
                        u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
                    } else if let Some(dec) = ent.strip_prefix('#') {
                        dec.parse::<u32>().ok().and_then(char::from_u32)
                    } else {
                        None
                    }
                }
            };
            ch.map(|c| (c, j + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Optional inline geometry: `data-box="x0,y0,w,h"`.
fn box_attr(attrs: &[(String, String)]) -> Option<BoundingBox> {
    let (_, v) = attrs.iter().find(|(k, _)| k == "data-box")?;
    let nums: Vec<i64> = v.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match nums[..] {
        [x0, y0, w, h] => BoundingBox::new(x0, y0, w, h).ok(),
        _ => None,
    }
}

struct Builder<'v> {
    vocab: &'v TagVocab,
    nodes: Vec<RawNode>,
    stack: Vec<usize>,
    root: Option<usize>,
    body: Option<usize>,
}

impl<'v> Builder<'v> {
    fn push_node(&mut self, name: &str, bbox: Option<BoundingBox>) -> usize {
        self.nodes.push(RawNode {
            name: name.to_string(),
            tag: self.vocab.id(name),
            children: Vec::new(),
            text_runs: Vec::new(),
            bbox,
        });
        self.nodes.len() - 1
    }

    fn ensure_root(&mut self) -> usize {
        if let Some(r) = self.root {
            return r;
        }
        let r = self.push_node("html", None);
        self.root = Some(r);
        self.stack.push(r);
        r
    }

    fn current(&mut self) -> usize {
        let root = self.ensure_root();
        *self.stack.last().unwrap_or(&root)
    }

    fn name_of(&self, i: usize) -> &str {
        &self.nodes[i].name
    }

    /// Pops up to and including the nearest open element named in `targets`,
    /// unless a scope boundary is met first.
    fn close_in_scope(&mut self, targets: &[&str], extra_boundary: &[&str]) {
        for k in (1..self.stack.len()).rev() {
            let name = self.name_of(self.stack[k]);
            if targets.contains(&name) {
                self.stack.truncate(k);
                return;
            }
            if SCOPE_BOUNDARY.contains(&name) || extra_boundary.contains(&name) {
                return;
            }
        }
    }

    fn start(&mut self, name: &str, attrs: &[(String, String)], self_closing: bool) {
        let bbox = box_attr(attrs);
        if name == "html" {
            if self.root.is_none() {
                let r = self.push_node("html", bbox);
                self.root = Some(r);
                self.stack.push(r);
            } else if let (Some(r), Some(b)) = (self.root, bbox) {
                self.nodes[r].bbox.get_or_insert(b);
            }
            return;
        }
        self.ensure_root();
        if name == "body" && self.body.is_some() {
            return;
        }
        if CLOSES_P.contains(&name) {
            self.close_in_scope(&["p"], &[]);
        }
        match name {
            "li" => self.close_in_scope(&["li"], &["ul", "ol", "menu"]),
            "dt" | "dd" => self.close_in_scope(&["dt", "dd"], &["dl"]),
            "tr" => self.close_in_scope(&["tr"], &["tbody", "thead", "tfoot"]),
            "td" | "th" => {
                // Cells close at the row boundary, which td/th themselves bound.
                if let Some(&top) = self.stack.last() {
                    if matches!(self.name_of(top), "td" | "th") {
                        self.stack.pop();
                    }
                }
            }
            "option" => self.close_in_scope(&["option"], &["select", "datalist"]),
            _ => {}
        }
        if HEADINGS.contains(&name) {
            if let Some(&top) = self.stack.last() {
                if HEADINGS.contains(&self.name_of(top)) {
                    self.stack.pop();
                }
            }
        }
        let parent = self.current();
        let id = self.push_node(name, bbox);
        self.nodes[parent].children.push(id);
        if name == "body" {
            self.body = Some(id);
        }
        if !(self_closing || is_void(name)) {
            self.stack.push(id);
        }
    }

    fn end(&mut self, name: &str) {
        if matches!(name, "html" | "body") {
            return;
        }
        if let Some(k) = (1..self.stack.len())
            .rev()
            .find(|&k| self.name_of(self.stack[k]) == name)
        {
            self.stack.truncate(k);
        }
    }

    fn text(&mut self, text: String, hidden: bool) {
        if hidden || text.trim().is_empty() {
            return;
        }
        let cur = self.current();
        let node = &mut self.nodes[cur];
        let slot = node.children.len();
        match node.text_runs.last_mut() {
            Some(run) if run.slot == slot => run.text.push_str(&text),
            _ => node.text_runs.push(TextRun { slot, text }),
        }
    }
}

/// Parses HTML into an element tree rooted at `html`.
///
/// Attributes are discarded except for an optional `data-box` geometry
/// annotation. Comments, doctype, CDATA and processing instructions are
/// dropped, as is the content of `script`, `style`, `title` and `noscript`.
pub fn parse_html(source: &str, vocab: &TagVocab) -> Result<DomTree> {
    if source.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let mut lexer = Lexer::new(source);
    let mut b = Builder {
        vocab,
        nodes: Vec::new(),
        stack: Vec::new(),
        root: None,
        body: None,
    };
    let mut saw_element = false;
    let mut hidden_body = false;
    while let Some(lx) = lexer.next() {
        match lx {
            Lexeme::Start {
                name,
                attrs,
                self_closing,
            } => {
                saw_element = true;
                hidden_body = !self_closing && HIDDEN_RAW_TEXT.contains(&name.as_str());
                b.start(&name, &attrs, self_closing);
            }
            Lexeme::End(name) => {
                hidden_body = false;
                b.end(&name);
            }
            Lexeme::Text(t) => {
                if saw_element || !t.trim().is_empty() {
                    b.text(t, hidden_body);
                }
                hidden_body = false;
            }
        }
    }
    if !saw_element {
        return Err(Error::EmptyDocument);
    }
    let root = b.root.ok_or(Error::EmptyDocument)?;
    Ok(DomTree::from_raw(b.nodes, root))
}
