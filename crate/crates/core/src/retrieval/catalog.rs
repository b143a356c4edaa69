use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::category::CategoryVocab;
use crate::error::{Error, Result};
use crate::eval::judgment::{read_jsonl, write_jsonl};
use crate::outfit::{seeded_unit, Outfit, StyleScores};

pub const DEFAULT_PRODUCT_SHOT_THRESHOLD: f64 = 0.9;

/// One servable product image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    pub feature_ref: String,
    /// Category from product metadata; may be wrong and is never used for indexing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub style_scores: StyleScores,
}

/// True iff the ProductShot score reaches `threshold` (inclusive).
pub fn filter_product_shot(scores: &StyleScores, threshold: f64) -> bool {
    scores.product_shot >= threshold
}

pub fn read_catalog<R: BufRead>(reader: R) -> Result<Vec<CatalogItem>> {
    let items: Vec<CatalogItem> = read_jsonl(reader)?;
    for (i, item) in items.iter().enumerate() {
        if item.item_id.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty item_id".into(),
            });
        }
        item.style_scores.validate()?;
    }
    Ok(items)
}

pub fn write_catalog<W: Write>(writer: W, items: &[CatalogItem]) -> Result<()> {
    write_jsonl(writer, items)
}

/// Catalog over every outfit item. A seeded `non_product_fraction` of items get a
/// ProductShot score of 0.5; the rest get 0.95.
pub fn catalog_from_outfits(
    outfits: &[Outfit],
    vocab: &CategoryVocab,
    non_product_fraction: f64,
    seed: u64,
) -> Vec<CatalogItem> {
    outfits
        .iter()
        .flat_map(|o| &o.items)
        .map(|item| {
            let product_shot = if seeded_unit(seed, &item.item_id) < non_product_fraction { 0.5 } else { 0.95 };
            CatalogItem {
                item_id: item.item_id.clone(),
                feature_ref: item.feature_ref.clone(),
                category: Some(vocab.name(item.category).to_string()),
                style_scores: StyleScores {
                    polyvore: 0.0,
                    product_shot,
                    stock_photo: 1.0 - product_shot,
                    full_outfit: 0.0,
                    cropped_outfit: 0.0,
                },
            }
        })
        .collect()
}
