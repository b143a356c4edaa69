use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Outfit;
use crate::category::CategoryVocab;
use crate::error::{Error, Result};

/// 64-bit value derived from `(seed, key)` by SHA-256.
pub(crate) fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Uniform value in [0, 1) derived from `(seed, key)`; independent of corpus contents.
pub(crate) fn seeded_unit(seed: u64, key: &str) -> f64 {
    (derive_seed(seed, key) >> 11) as f64 / (1u64 << 53) as f64
}

/// Splits by a seeded hash of `outfit_id`, so membership survives corpus growth and reordering.
pub fn split_dataset(
    outfits: &[Outfit],
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<Outfit>, Vec<Outfit>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction {holdout_fraction} must lie in (0, 1)"
        )));
    }
    let (test, train): (Vec<_>, Vec<_>) = outfits
        .iter()
        .cloned()
        .partition(|o| seeded_unit(seed, &o.outfit_id) < holdout_fraction);
    Ok((train, test))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_outfits: usize,
    pub total_items: usize,
    /// Item count per category name, in vocabulary order; zero counts included.
    pub per_category: Vec<(String, usize)>,
    pub items_per_outfit: BTreeMap<usize, usize>,
}

pub fn dataset_stats(outfits: &[Outfit], vocab: &CategoryVocab) -> DatasetStats {
    let mut per_cat = vec![0usize; vocab.len()];
    let mut hist = BTreeMap::new();
    let mut total_items = 0;
    for o in outfits {
        *hist.entry(o.len()).or_default() += 1;
        total_items += o.len();
        for item in &o.items {
            if let Some(c) = per_cat.get_mut(item.category.index()) {
                *c += 1;
            }
        }
    }
    DatasetStats {
        total_outfits: outfits.len(),
        total_items,
        per_category: vocab
            .names()
            .iter()
            .cloned()
            .zip(per_cat)
            .collect(),
        items_per_outfit: hist,
    }
}

impl DatasetStats {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "outfits: {}\nitems: {}\n\n{:<20} {:>10}\n",
            self.total_outfits, self.total_items, "category", "#items"
        );
        for (name, n) in &self.per_category {
            out.push_str(&format!("{name:<20} {n:>10}\n"));
        }
        out.push_str(&format!("\n{:<20} {:>10}\n", "#items/outfit", "#outfits"));
        for (k, n) in &self.items_per_outfit {
            out.push_str(&format!("{k:<20} {n:>10}\n"));
        }
        out
    }
}
