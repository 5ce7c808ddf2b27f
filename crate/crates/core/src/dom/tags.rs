use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default common-tag list, one lowercase name per line.
pub const DEFAULT_TAGS: &str = include_str!("../../data/tags.txt");

/// Name reported for the reserved unknown tag.
pub const UNKNOWN_TAG_NAME: &str = "<unk>";

/// Dense identifier of an HTML tag in a [`TagVocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagId(pub u16);

impl TagId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tag#{}", self.0)
    }
}

/// Common-tag vocabulary. Listed names take ids `0..n` in list order and
/// everything else maps to the reserved id `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagVocab {
    names: Vec<String>,
    index: HashMap<String, TagId>,
}

impl TagVocab {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name = name.as_ref().trim().to_ascii_lowercase();
            if name.is_empty() || name.starts_with('#') {
                continue;
            }
            if index.contains_key(&name) {
                return Err(Error::Config(format!("duplicate tag name {name:?}")));
            }
            let id = u16::try_from(out.len())
                .ok()
                .filter(|&id| id < u16::MAX)
                .ok_or_else(|| Error::Config("too many tags".into()))?;
            index.insert(name.clone(), TagId(id));
            out.push(name);
        }
        if out.is_empty() {
            return Err(Error::Config("tag list is empty".into()));
        }
        Ok(Self { names: out, index })
    }

    /// Parses the `tags.txt` format.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_names(text.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }

    pub fn id(&self, name: &str) -> TagId {
        match self.index.get(name) {
            Some(&id) => id,
            None => match self.index.get(&name.to_ascii_lowercase()) {
                Some(&id) => id,
                None => self.unknown(),
            },
        }
    }

    pub fn unknown(&self) -> TagId {
        TagId(self.names.len() as u16)
    }

    pub fn name(&self, id: TagId) -> &str {
        self.names
            .get(id.index())
            .map(String::as_str)
            .unwrap_or(UNKNOWN_TAG_NAME)
    }

    /// Number of ids including the unknown id.
    pub fn len(&self) -> usize {
        self.names.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Listed names in id order (the unknown id is not included).
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Default for TagVocab {
    fn default() -> Self {
        Self::parse(DEFAULT_TAGS).expect("shipped tag list is valid")
    }
}
