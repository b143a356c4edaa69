//! Training-example samplers over a flattened item table.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::outfit::Outfit;

/// Items of a corpus in outfit order; each outfit occupies a contiguous index range.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemTable {
    pub item_ids: Vec<String>,
    pub feature_refs: Vec<String>,
    pub categories: Vec<Category>,
    pub outfit_of: Vec<usize>,
    pub outfit_ranges: Vec<Range<usize>>,
    pub by_category: Vec<Vec<usize>>,
}

impl ItemTable {
    pub fn new(outfits: &[Outfit], n_categories: usize) -> Result<Self> {
        let mut t = Self {
            item_ids: Vec::new(),
            feature_refs: Vec::new(),
            categories: Vec::new(),
            outfit_of: Vec::new(),
            outfit_ranges: Vec::with_capacity(outfits.len()),
            by_category: vec![Vec::new(); n_categories],
        };
        for (o, outfit) in outfits.iter().enumerate() {
            let start = t.item_ids.len();
            for item in &outfit.items {
                let c = item.category.index();
                if c >= n_categories {
                    return Err(Error::invalid(format!(
                        "item {} has category id {c} outside a vocabulary of {n_categories}",
                        item.item_id
                    )));
                }
                t.by_category[c].push(t.item_ids.len());
                t.item_ids.push(item.item_id.clone());
                t.feature_refs.push(item.feature_ref.clone());
                t.categories.push(item.category);
                t.outfit_of.push(o);
            }
            t.outfit_ranges.push(start..t.item_ids.len());
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn outfits(&self) -> usize {
        self.outfit_ranges.len()
    }

    /// Uniform item outside the outfit of `item`; `None` if every item is in that outfit.
    fn other_outfit_item<R: Rng + ?Sized>(&self, item: usize, rng: &mut R) -> Option<usize> {
        let own = &self.outfit_ranges[self.outfit_of[item]];
        let available = self.len() - own.len();
        if available == 0 {
            return None;
        }
        let k = rng.random_range(0..available);
        Some(if k < own.start { k } else { k + own.len() })
    }

    /// Uniform item of `category` outside the outfit of `item`.
    fn same_category_item<R: Rng + ?Sized>(&self, item: usize, category: Category, rng: &mut R) -> Option<usize> {
        let pool = &self.by_category[category.index()];
        let own = &self.outfit_ranges[self.outfit_of[item]];
        let inside = pool.iter().filter(|i| own.contains(i)).count();
        if pool.len() == inside {
            return None;
        }
        loop {
            let cand = pool[rng.random_range(0..pool.len())];
            if !own.contains(&cand) {
                return Some(cand);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeRatio {
    #[serde(rename = "1:1")]
    OneToOne,
    #[serde(rename = "16:1")]
    SixteenToOne,
}

impl NegativeRatio {
    pub fn negatives_per_positive(self) -> usize {
        match self {
            NegativeRatio::OneToOne => 1,
            NegativeRatio::SixteenToOne => 16,
        }
    }
}

impl fmt::Display for NegativeRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:1", self.negatives_per_positive())
    }
}

impl FromStr for NegativeRatio {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1:1" | "1" => Ok(Self::OneToOne),
            "16:1" | "16" => Ok(Self::SixteenToOne),
            _ => Err(Error::invalid(format!("negative ratio must be 1:1 or 16:1, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    Random,
    SameCategory,
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::Random => "random",
            NegativeMode::SameCategory => "same_category",
        })
    }
}

impl FromStr for NegativeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "same_category" | "same-category" | "cat" => Ok(Self::SameCategory),
            _ => Err(Error::invalid(format!("negative mode must be random or same_category, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairExample {
    pub i: usize,
    pub j: usize,
    pub same: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletExample {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// One epoch of pairs: every item anchors one cross-category positive and
/// `ratio` negatives drawn uniformly from other outfits. Shuffled.
pub fn sample_pairs(table: &ItemTable, ratio: NegativeRatio, seed: u64) -> Result<Vec<PairExample>> {
    if table.outfits() < 2 {
        return Err(Error::InsufficientData(
            "negative pairs need at least two outfits".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = ratio.negatives_per_positive();
    let mut pairs = Vec::with_capacity(table.len() * (per + 1));
    let mut mates = Vec::new();
    for i in 0..table.len() {
        mates.clear();
        mates.extend(
            table.outfit_ranges[table.outfit_of[i]]
                .clone()
                .filter(|&j| table.categories[j] != table.categories[i]),
        );
        let Some(&j) = mates.choose(&mut rng) else {
            continue;
        };
        pairs.push(PairExample { i, j, same: true });
        for _ in 0..per {
            let j = table.other_outfit_item(i, &mut rng).expect("two outfits");
            pairs.push(PairExample { i, j, same: false });
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no cross-category positive pairs".into()));
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletEpoch {
    pub triplets: Vec<TripletExample>,
    /// Anchors dropped because no valid negative existed.
    pub skipped: usize,
}

/// One epoch of triplets: every item anchors one triplet with a random outfit-mate as
/// positive. Shuffled.
pub fn sample_triplets(table: &ItemTable, mode: NegativeMode, seed: u64) -> Result<TripletEpoch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(table.len());
    let mut skipped = 0;
    for anchor in 0..table.len() {
        let range = table.outfit_ranges[table.outfit_of[anchor]].clone();
        if range.len() < 2 {
            skipped += 1;
            continue;
        }
        let mut positive = rng.random_range(range.start..range.end - 1);
        if positive >= anchor {
            positive += 1;
        }
        let negative = match mode {
            NegativeMode::Random => table.other_outfit_item(anchor, &mut rng),
            NegativeMode::SameCategory => table.same_category_item(anchor, table.categories[positive], &mut rng),
        };
        match negative {
            Some(negative) => triplets.push(TripletExample {
                anchor,
                positive,
                negative,
            }),
            None => skipped += 1,
        }
    }
    triplets.shuffle(&mut rng);
    Ok(TripletEpoch { triplets, skipped })
}
