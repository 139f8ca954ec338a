use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recognizer routing group of a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coarse {
    Text,
    Figure,
    Equation,
    Table,
    Other,
}

impl Coarse {
    pub const ALL: [Coarse; 5] = [Coarse::Text, Coarse::Figure, Coarse::Equation, Coarse::Table, Coarse::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Coarse::Text => "text",
            Coarse::Figure => "figure",
            Coarse::Equation => "equation",
            Coarse::Table => "table",
            Coarse::Other => "other",
        }
    }
}

impl fmt::Display for Coarse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Coarse {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Coarse::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown coarse group `{s}`")))
    }
}

/// Toy classes in generator order.
pub const TOY_CLASSES: [(&str, Coarse); 5] = [
    ("title", Coarse::Text),
    ("text", Coarse::Text),
    ("figure", Coarse::Figure),
    ("table", Coarse::Table),
    ("equation", Coarse::Equation),
];

/// 25 region categories in the style of the WiSe/SPaSe annotations. The exact
/// published list is not reproduced here; use a manifest to match a release.
pub const DEFAULT_CLASSES: [(&str, Coarse); 25] = [
    ("title", Coarse::Text),
    ("heading", Coarse::Text),
    ("paragraph", Coarse::Text),
    ("enumeration", Coarse::Text),
    ("text", Coarse::Text),
    ("caption", Coarse::Text),
    ("footnote", Coarse::Text),
    ("slide_number", Coarse::Text),
    ("code", Coarse::Text),
    ("equation", Coarse::Equation),
    ("table", Coarse::Table),
    ("diagram", Coarse::Figure),
    ("drawing", Coarse::Figure),
    ("plot", Coarse::Figure),
    ("chart", Coarse::Figure),
    ("sketch", Coarse::Figure),
    ("map", Coarse::Figure),
    ("realistic", Coarse::Figure),
    ("screenshot", Coarse::Figure),
    ("legend", Coarse::Figure),
    ("logo", Coarse::Other),
    ("comment", Coarse::Text),
    ("date", Coarse::Text),
    ("frame", Coarse::Other),
    ("other", Coarse::Other),
];

/// Ordered class names plus their coarse routing group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
    coarse: Vec<Coarse>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl LabelSet {
    pub fn new(entries: Vec<(String, Coarse)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::config("label set is empty"));
        }
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !is_identifier(name) {
                return Err(Error::config(format!("class name `{name}` is not an identifier")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::config(format!("duplicate class name `{name}`")));
            }
        }
        let (names, coarse) = entries.into_iter().unzip();
        Ok(Self { names, coarse })
    }

    /// First `k` toy classes (2..=5).
    pub fn toy(k: usize) -> Result<Self> {
        if !(2..=TOY_CLASSES.len()).contains(&k) {
            return Err(Error::config(format!("toy label sets have 2 to 5 classes, got {k}")));
        }
        Self::new(TOY_CLASSES[..k].iter().map(|(n, c)| (n.to_string(), *c)).collect())
    }

    pub fn default_slides() -> Self {
        Self::new(DEFAULT_CLASSES.iter().map(|(n, c)| (n.to_string(), *c)).collect()).expect("valid default list")
    }

    /// One `name coarse` pair per line; `#` starts a comment.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let name = parts.next().unwrap_or_default();
            let coarse = parts
                .next()
                .ok_or_else(|| Error::config(format!("manifest line {}: missing coarse group", lineno + 1)))?;
            if parts.next().is_some() {
                return Err(Error::config(format!("manifest line {}: trailing fields", lineno + 1)));
            }
            entries.push((name.to_string(), coarse.parse()?));
        }
        Self::new(entries)
    }

    pub fn to_manifest(&self) -> String {
        self.names
            .iter()
            .zip(&self.coarse)
            .map(|(n, c)| format!("{n} {c}\n"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn coarse(&self, k: usize) -> Coarse {
        self.coarse[k]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Classes narrated before everything else.
    pub fn is_title(&self, k: usize) -> bool {
        matches!(self.names[k].as_str(), "title" | "heading")
    }
}
