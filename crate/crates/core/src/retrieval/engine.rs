use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ann::{ann_search, Hit};
use super::catalog::{filter_product_shot, CatalogItem, DEFAULT_PRODUCT_SHOT_THRESHOLD};
use super::complementary::ComplementaryMap;
use super::index::InvertedIndex;
use super::{blend, BlendedItem};
use crate::category::{Category, CategoryVocab};
use crate::error::Error;
use crate::eval::judgment::Recommender;
use crate::features::FeatureStore;
use crate::model::ModelParams;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("item {item_id:?} is not a product shot (score {score:.3} < {threshold})")]
    NotProductShot { item_id: String, score: f64, threshold: f64 },
    #[error("no features for query item {0:?}")]
    UnknownQueryFeatures(String),
    #[error("no complementary categories for {0:?}")]
    EmptyComplementarySet(String),
    #[error("{requested:?} is not complementary to {query:?}")]
    NotComplementary { requested: String, query: String },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub product_shot_threshold: f64,
    pub k_per_category: usize,
    pub k_final: usize,
    /// Partition probes per search; `None` uses each index's default.
    pub probes: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            product_shot_threshold: DEFAULT_PRODUCT_SHOT_THRESHOLD,
            k_per_category: 10,
            k_final: 10,
            probes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub item_id: String,
    pub category: Category,
    pub complementary: Vec<Category>,
    pub embedding: Vec<f32>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResults {
    pub category: String,
    pub items: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub query_item: String,
    pub query_category: String,
    pub per_category: Vec<CategoryResults>,
    pub blended: Vec<BlendedItem>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompleteRequest {
    pub k_per_category: Option<usize>,
    pub k_final: Option<usize>,
    /// Restricts results to these categories; each must be complementary to the query.
    pub categories: Option<Vec<Category>>,
}

/// Predicts the query's category and style embedding and looks up its complementary
/// categories. A category without a map row falls back to every other category.
pub fn understand_query(
    item_id: &str,
    features: &[f32],
    params: &ModelParams,
    map: &ComplementaryMap,
    vocab: &CategoryVocab,
) -> crate::error::Result<QueryContext> {
    if features.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: features.len(),
        });
    }
    let x = ArrayView2::from_shape((1, features.len()), features).expect("one row");
    let category = params.predict_category(x)?[0];
    let embedding = params.forward_style(x)?.row(0).to_vec();
    let mut diagnostics = Vec::new();
    let complementary = match map.get(category) {
        Some(list) => list.to_vec(),
        None => {
            diagnostics.push(format!(
                "no complementary row for {:?}; using every other category",
                vocab.name(category)
            ));
            vocab.iter().map(|(c, _)| c).filter(|&c| c != category).collect()
        }
    };
    Ok(QueryContext {
        item_id: item_id.to_string(),
        category,
        complementary,
        embedding,
        diagnostics,
    })
}

/// An immutable serving snapshot: model, catalog, complementary map and indices.
pub struct Engine {
    params: ModelParams,
    vocab: CategoryVocab,
    map: ComplementaryMap,
    index: InvertedIndex,
    catalog: HashMap<String, CatalogItem>,
    features: FeatureStore,
    cfg: EngineConfig,
}

impl Engine {
    pub fn new(
        params: ModelParams,
        vocab: CategoryVocab,
        map: ComplementaryMap,
        index: InvertedIndex,
        catalog: Vec<CatalogItem>,
        features: FeatureStore,
        cfg: EngineConfig,
    ) -> crate::error::Result<Self> {
        if cfg.k_per_category == 0 || cfg.k_final == 0 {
            return Err(Error::invalid("k defaults must be at least 1"));
        }
        if index.meta.vocab_digest != vocab.digest() {
            return Err(Error::invalid("index and engine use different category vocabularies"));
        }
        if params.shape().classes != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                actual: params.shape().classes,
            });
        }
        if features.dim() != params.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.input_dim(),
                actual: features.dim(),
            });
        }
        let catalog = catalog.into_iter().map(|c| (c.item_id.clone(), c)).collect();
        Ok(Self {
            params,
            vocab,
            map,
            index,
            catalog,
            features,
            cfg,
        })
    }

    pub fn vocab(&self) -> &CategoryVocab {
        &self.vocab
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn catalog_len(&self) -> usize {
        self.catalog.len()
    }

    pub fn query_context(&self, item_id: &str) -> Result<QueryContext, RetrievalError> {
        let item = self
            .catalog
            .get(item_id)
            .ok_or_else(|| RetrievalError::UnknownItem(item_id.to_string()))?;
        let threshold = self.cfg.product_shot_threshold;
        if !filter_product_shot(&item.style_scores, threshold) {
            return Err(RetrievalError::NotProductShot {
                item_id: item_id.to_string(),
                score: item.style_scores.product_shot,
                threshold,
            });
        }
        let feats = self
            .features
            .get(&item.feature_ref)
            .ok_or_else(|| RetrievalError::UnknownQueryFeatures(item_id.to_string()))?;
        Ok(understand_query(item_id, feats, &self.params, &self.map, &self.vocab)?)
    }

    /// Query understanding, per-category candidate search and blending.
    pub fn complete_the_look(&self, item_id: &str, req: &CompleteRequest) -> Result<RecommendationSet, RetrievalError> {
        let k = req.k_per_category.unwrap_or(self.cfg.k_per_category);
        let k_final = req.k_final.unwrap_or(self.cfg.k_final);
        if k == 0 || k_final == 0 {
            return Err(RetrievalError::BadRequest("k must be at least 1".into()));
        }
        let ctx = self.query_context(item_id)?;
        let query_name = self.vocab.name(ctx.category).to_string();
        let categories = match &req.categories {
            None => ctx.complementary.clone(),
            Some(wanted) => {
                if wanted.is_empty() {
                    return Err(RetrievalError::BadRequest("empty category filter".into()));
                }
                for c in wanted {
                    if !ctx.complementary.contains(c) {
                        return Err(RetrievalError::NotComplementary {
                            requested: self.vocab.get(*c).unwrap_or("?").to_string(),
                            query: query_name,
                        });
                    }
                }
                ctx.complementary.iter().copied().filter(|c| wanted.contains(c)).collect()
            }
        };
        if categories.is_empty() {
            return Err(RetrievalError::EmptyComplementarySet(query_name));
        }
        let mut diagnostics = ctx.diagnostics;
        let mut per_category = Vec::new();
        for cat in categories {
            let name = self.vocab.name(cat).to_string();
            let Some(ann) = self.index.get(cat) else {
                diagnostics.push(format!("no indexed items for {name:?}"));
                continue;
            };
            let mut items = ann_search(ann, &ctx.embedding, k + 1, self.cfg.probes);
            items.retain(|h| h.item_id != item_id);
            items.truncate(k);
            per_category.push(CategoryResults { category: name, items });
        }
        let blended = blend(&per_category, k_final);
        Ok(RecommendationSet {
            query_item: item_id.to_string(),
            query_category: query_name,
            per_category,
            blended,
            diagnostics,
        })
    }
}

impl Recommender for Engine {
    fn recommend(&self, query_item: &str, k: usize) -> crate::error::Result<Vec<(String, String)>> {
        let req = CompleteRequest {
            k_per_category: Some(k),
            k_final: Some(k),
            categories: None,
        };
        match self.complete_the_look(query_item, &req) {
            Ok(set) => Ok(set.blended.into_iter().map(|b| (b.item_id, b.category)).collect()),
            Err(RetrievalError::Core(e)) => Err(e),
            Err(e) => Err(Error::invalid(e.to_string())),
        }
    }
}
