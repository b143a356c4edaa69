//! Category vocabulary with stable dense ids.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The 13 most frequent fashion categories, in descending frequency order.
pub const DEFAULT_CATEGORIES: [&str; 13] = [
    "Shoes",
    "Handbags",
    "Shirts & Tops",
    "Pants",
    "Coats & Jackets",
    "Dresses",
    "Jewelry",
    "Hats",
    "Skirts",
    "Sunglasses",
    "Shorts",
    "Scarves & Shawls",
    "Watches",
];

/// Dense category id into a [`CategoryVocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(pub u16);

impl Category {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryVocab {
    names: Vec<String>,
    lookup: HashMap<String, Category>,
}

impl Default for CategoryVocab {
    fn default() -> Self {
        Self::new(DEFAULT_CATEGORIES.iter().map(|s| s.to_string()))
            .expect("default vocabulary is valid")
    }
}

/// Case-insensitive canonical key: lowercase, `_`/`-` as spaces, `and` as `&`, collapsed whitespace.
pub fn normalize_category_name(name: &str) -> String {
    let lowered = name.trim().to_lowercase().replace(['_', '-'], " ");
    lowered
        .split_whitespace()
        .map(|w| if w == "and" { "&" } else { w })
        .collect::<Vec<_>>()
        .join(" ")
}

impl CategoryVocab {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::invalid("category vocabulary is empty"));
        }
        if names.len() > u16::MAX as usize {
            return Err(Error::invalid("category vocabulary too large"));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let key = normalize_category_name(name);
            if key.is_empty() {
                return Err(Error::invalid("empty category name"));
            }
            if lookup.insert(key, Category(i as u16)).is_some() {
                return Err(Error::invalid(format!("duplicate category name {name:?}")));
            }
        }
        Ok(Self { names, lookup })
    }

    /// Reads one category name per line; blank lines and `#` comments are ignored.
    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, category: Category) -> &str {
        &self.names[category.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, category: Category) -> Option<&str> {
        self.names.get(category.index()).map(String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Option<Category> {
        self.lookup.get(&normalize_category_name(name)).copied()
    }

    pub fn contains(&self, category: Category) -> bool {
        category.index() < self.names.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (Category(i as u16), n.as_str()))
    }

    /// Hex SHA-256 over the ordered names; stored in checkpoints and indices.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}
