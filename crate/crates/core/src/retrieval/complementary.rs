use std::collections::BTreeMap;

use crate::category::{Category, CategoryVocab};
use crate::error::{Error, Result};

/// Curated rows applied on top of the all-other-categories default.
pub const CURATED_OVERRIDES: &str = "Shirts & Tops: Shoes, Sunglasses, Jewelry, Watches\n";

/// Category to ordered list of categories that can complete its look.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplementaryMap {
    map: BTreeMap<Category, Vec<Category>>,
}

impl ComplementaryMap {
    pub fn empty() -> Self {
        Self { map: BTreeMap::new() }
    }

    /// Every category maps to all other categories in vocabulary order.
    pub fn all_others(vocab: &CategoryVocab) -> Self {
        let cats: Vec<Category> = vocab.iter().map(|(c, _)| c).collect();
        let map = cats
            .iter()
            .map(|&c| (c, cats.iter().copied().filter(|&o| o != c).collect()))
            .collect();
        Self { map }
    }

    /// [`Self::all_others`] with [`CURATED_OVERRIDES`] applied where the vocabulary allows.
    pub fn with_curated_defaults(vocab: &CategoryVocab) -> Self {
        let mut m = Self::all_others(vocab);
        if let Ok(over) = Self::parse(CURATED_OVERRIDES, vocab) {
            m.apply(&over);
        }
        m
    }

    /// Parses `category: c1, c2, ...` lines; blank lines and `#` comments are ignored.
    pub fn parse(text: &str, vocab: &CategoryVocab) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let (key, values) = line
                .split_once(':')
                .ok_or_else(|| parse_err("expected `category: c1, c2, ...`".into()))?;
            let lookup = |name: &str| {
                vocab
                    .lookup(name.trim())
                    .ok_or_else(|| parse_err(format!("unknown category {:?}", name.trim())))
            };
            let key = lookup(key)?;
            let mut list = Vec::new();
            for v in values.split(',').filter(|v| !v.trim().is_empty()) {
                let c = lookup(v)?;
                if c == key {
                    return Err(parse_err(format!("{:?} cannot complement itself", vocab.name(c))));
                }
                if !list.contains(&c) {
                    list.push(c);
                }
            }
            if map.insert(key, list).is_some() {
                return Err(parse_err(format!("duplicate row for {:?}", vocab.name(key))));
            }
        }
        Ok(Self { map })
    }

    pub fn apply(&mut self, overrides: &Self) {
        for (k, v) in &overrides.map {
            self.map.insert(*k, v.clone());
        }
    }

    pub fn get(&self, category: Category) -> Option<&[Category]> {
        self.map.get(&category).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn to_text(&self, vocab: &CategoryVocab) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            let names: Vec<&str> = v.iter().map(|&c| vocab.name(c)).collect();
            out.push_str(&format!("{}: {}\n", vocab.name(*k), names.join(", ")));
        }
        out
    }
}
