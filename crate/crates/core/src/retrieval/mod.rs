//! Complementary-item retrieval: query understanding, per-category candidate search and
//! blending into one presentation order.

mod ann;
mod catalog;
mod complementary;
mod engine;
mod index;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use ann::{
    ann_search, build_ann_index, default_partitions, default_probes, euclidean, exact_search, AnnIndex, Hit,
    EXACT_SEARCH_BELOW, KMEANS_ITERATIONS,
};
pub use catalog::{
    catalog_from_outfits, filter_product_shot, read_catalog, write_catalog, CatalogItem,
    DEFAULT_PRODUCT_SHOT_THRESHOLD,
};
pub use complementary::{ComplementaryMap, CURATED_OVERRIDES};
pub use engine::{
    understand_query, CategoryResults, CompleteRequest, Engine, EngineConfig, QueryContext, RecommendationSet,
    RetrievalError,
};
pub use index::{build_inverted_index, IndexBuildConfig, IndexMeta, InvertedIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendedItem {
    pub item_id: String,
    pub category: String,
    pub distance: f32,
}

/// Round-robin over categories ordered by their best distance (ties keep input order);
/// repeated items are dropped and the result is cut at `k_final`.
pub fn blend(lists: &[CategoryResults], k_final: usize) -> Vec<BlendedItem> {
    let mut order: Vec<usize> = (0..lists.len()).filter(|&i| !lists[i].items.is_empty()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (lists[a].items[0].distance, lists[b].items[0].distance);
        da.partial_cmp(&db).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let rounds = order.iter().map(|&i| lists[i].items.len()).max().unwrap_or(0);
    'outer: for r in 0..rounds {
        for &i in &order {
            if out.len() >= k_final {
                break 'outer;
            }
            if let Some(hit) = lists[i].items.get(r) {
                if seen.insert(hit.item_id.as_str()) {
                    out.push(BlendedItem {
                        item_id: hit.item_id.clone(),
                        category: lists[i].category.clone(),
                        distance: hit.distance,
                    });
                }
            }
        }
    }
    out
}
