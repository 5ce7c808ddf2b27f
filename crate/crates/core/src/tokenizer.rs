//! Text tokenization behind a pluggable trait, with a deterministic
//! word-level default that falls back to characters for unknown words.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;
pub const START_TAG_ID: u32 = 5;
pub const END_TAG_ID: u32 = 6;
pub const LEAF_TAG_ID: u32 = 7;
/// First id available to ordinary text tokens.
pub const FIRST_TEXT_ID: u32 = 8;

/// Reserved vocabulary entries, in id order.
pub const RESERVED_TOKENS: [&str; 8] = [
    "[PAD]",
    "[CLS]",
    "[SEP]",
    "[MASK]",
    "[UNK]",
    "<start_tag>",
    "<end_tag>",
    "<leaf_tag>",
];

const CONTINUATION: &str = "##";

pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }

    fn token(&self, id: u32) -> Option<&str>;

    fn vocab_size(&self) -> usize;

    fn detokenize(&self, ids: &[u32]) -> String;
}

/// Lowercases and splits on whitespace, with every non-alphanumeric
/// character becoming a word of its own.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            words.push(ch.to_lowercase().collect());
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    fn from_vocab(vocab: Vec<String>) -> Result<Self> {
        if vocab.len() < RESERVED_TOKENS.len() || vocab[..RESERVED_TOKENS.len()] != RESERVED_TOKENS {
            return Err(Error::Format("vocabulary must start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, t) in vocab.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Self { vocab, index })
    }

    fn with_entries<I: IntoIterator<Item = String>>(entries: I) -> Self {
        let mut vocab: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = vocab.iter().cloned().collect();
        for e in entries {
            if seen.insert(e.clone()) {
                vocab.push(e);
            }
        }
        Self::from_vocab(vocab).expect("constructed vocabulary is valid")
    }

    /// Vocabulary of exactly the given words plus the reserved entries.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::with_entries(words.into_iter().map(|w| w.as_ref().to_string()))
    }

    /// Builds a vocabulary from a corpus: words seen at least `min_freq`
    /// times (most frequent first, ties by spelling, at most `max_words`),
    /// followed by every character seen as initial and continuation piece.
    pub fn build<'a, I>(texts: I, min_freq: usize, max_words: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars: BTreeSet<char> = BTreeSet::new();
        for text in texts {
            for w in pre_tokenize(text) {
                chars.extend(w.chars());
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(max_words);
        let pieces = chars
            .iter()
            .map(|c| c.to_string())
            .chain(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        Self::with_entries(words.into_iter().map(|(w, _)| w).chain(pieces))
    }

    /// Parses `vocab.txt`: one token per line, line number is the id.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_vocab(text.lines().map(str::to_string).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.vocab.join("\n");
        s.push('\n');
        s
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    fn push_word(&self, word: &str, out: &mut Vec<u32>) {
        if let Some(id) = self.id(word) {
            out.push(id);
            return;
        }
        let mut buf = String::new();
        for (i, ch) in word.chars().enumerate() {
            buf.clear();
            if i > 0 {
                buf.push_str(CONTINUATION);
            }
            buf.push(ch);
            out.push(self.id(&buf).unwrap_or(UNK_ID));
        }
    }
}

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in pre_tokenize(text) {
            self.push_word(&w, &mut out);
        }
        out
    }

    fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).unwrap_or("[UNK]");
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reserved_layout() {
        let t = WordTokenizer::from_words(["hi"]);
        assert_eq!(t.token(CLS_ID), Some("[CLS]"));
        assert_eq!(t.token(LEAF_TAG_ID), Some("<leaf_tag>"));
        assert_eq!(t.id("hi"), Some(FIRST_TEXT_ID));
        assert_eq!(t.vocab_size(), 9);
    }

    #[test]
    fn splits_punctuation_and_case() {
        assert_eq!(pre_tokenize("Hello, World!  x"), ["hello", ",", "world", "!", "x"]);
        assert_eq!(pre_tokenize(" \t\n"), Vec::<String>::new());
    }

    #[test]
    fn char_fallback() {
        let t = WordTokenizer::build(["ab ab ab c"], 2, 100);
        let ids = t.tokenize("ab ba zz");
        assert_eq!(t.detokenize(&ids), "ab ba [UNK] [UNK]");
        assert_eq!(ids.len(), 5);
        assert_eq!(ids[0], t.id("ab").unwrap());
        assert_eq!(ids[1], t.id("b").unwrap());
        assert_eq!(ids[2], t.id("##a").unwrap());
    }

    #[test]
    fn build_is_frequency_ordered() {
        let t = WordTokenizer::build(["b a b c b a"], 1, 2);
        assert_eq!(t.token(FIRST_TEXT_ID), Some("b"));
        assert_eq!(t.token(FIRST_TEXT_ID + 1), Some("a"));
        assert!(t.id("c").is_some(), "characters are always present");
    }

    #[test]
    fn vocab_file_round_trip() {
        let t = WordTokenizer::build(["the quick brown fox"], 1, 10);
        assert_eq!(WordTokenizer::parse(&t.to_text()).unwrap(), t);
        assert!(WordTokenizer::parse("a\nb\n").is_err());
    }

    proptest! {
        #[test]
        fn detokenize_round_trips(text in "[helowrdtisaHEL ,.]{0,60}") {
            let t = WordTokenizer::build(["hello world, this is a test."], 1, 100);
            let ids = t.tokenize(&text);
            prop_assert_eq!(t.tokenize(&t.detokenize(&ids)), ids);
        }
    }
}
