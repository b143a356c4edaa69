//! Per-category inverted index over catalog embeddings, built by offline batch inference.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ann::{build_ann_index, AnnIndex, EXACT_SEARCH_BELOW};
use super::catalog::{filter_product_shot, CatalogItem};
use crate::category::{Category, CategoryVocab};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::model::{gather_features, ModelParams};
use crate::outfit::derive_seed;
use crate::tensor_io::TensorFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexBuildConfig {
    pub product_shot_threshold: f64,
    /// Categories with fewer items use one partition, i.e. exact search.
    pub exact_below: usize,
    pub seed: u64,
}

impl Default for IndexBuildConfig {
    fn default() -> Self {
        Self {
            product_shot_threshold: super::DEFAULT_PRODUCT_SHOT_THRESHOLD,
            exact_below: EXACT_SEARCH_BELOW,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub checkpoint_digest: String,
    pub vocab_digest: String,
    pub built_at_unix: u64,
    pub catalog_items: usize,
    pub indexed: usize,
    pub skipped_missing_features: usize,
    pub filtered_not_product_shot: usize,
    /// Indexed items whose metadata category differs from the predicted one.
    pub label_disagreements: usize,
    pub config: IndexBuildConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub meta: IndexMeta,
    pub categories: BTreeMap<Category, AnnIndex>,
}

impl InvertedIndex {
    pub fn len(&self) -> usize {
        self.categories.values().map(AnnIndex::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, category: Category) -> Option<&AnnIndex> {
        self.categories.get(&category)
    }
}

/// Embeds and categorizes every product-shot catalog item, then builds one partitioned
/// index per predicted category. Items are processed in `item_id` order.
pub fn build_inverted_index(
    catalog: &[CatalogItem],
    features: &FeatureStore,
    params: &ModelParams,
    vocab: &CategoryVocab,
    checkpoint_digest: &str,
    cfg: &IndexBuildConfig,
) -> Result<InvertedIndex> {
    const CHUNK: usize = 4096;
    let mut meta = IndexMeta {
        checkpoint_digest: checkpoint_digest.to_string(),
        vocab_digest: vocab.digest(),
        built_at_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        catalog_items: catalog.len(),
        indexed: 0,
        skipped_missing_features: 0,
        filtered_not_product_shot: 0,
        label_disagreements: 0,
        config: cfg.clone(),
    };
    let mut items: Vec<&CatalogItem> = Vec::with_capacity(catalog.len());
    for item in catalog {
        if !filter_product_shot(&item.style_scores, cfg.product_shot_threshold) {
            meta.filtered_not_product_shot += 1;
        } else if !features.contains(&item.feature_ref) {
            meta.skipped_missing_features += 1;
        } else {
            items.push(item);
        }
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    if items.windows(2).any(|w| w[0].item_id == w[1].item_id) {
        return Err(Error::invalid("catalog contains duplicate item ids"));
    }

    let dim = params.embedding_dim();
    let mut buckets: BTreeMap<Category, (Vec<String>, Vec<f32>)> = BTreeMap::new();
    for chunk in items.chunks(CHUNK) {
        let x = gather_features(chunk.iter().map(|i| i.feature_ref.as_str()), features)?;
        let cats = params.predict_category(x.view())?;
        let emb = params.forward_style(x.view())?;
        for ((item, cat), row) in chunk.iter().zip(cats).zip(emb.outer_iter()) {
            if let Some(label) = &item.category {
                if vocab.lookup(label) != Some(cat) {
                    meta.label_disagreements += 1;
                }
            }
            let (ids, vecs) = buckets.entry(cat).or_default();
            ids.push(item.item_id.clone());
            vecs.extend(row.iter());
        }
    }
    let mut categories = BTreeMap::new();
    for (cat, (ids, vecs)) in buckets {
        let partitions = (ids.len() < cfg.exact_below).then_some(1);
        let seed = derive_seed(cfg.seed, vocab.name(cat));
        meta.indexed += ids.len();
        categories.insert(cat, build_ann_index(&ids, &vecs, dim, partitions, seed)?);
    }
    Ok(InvertedIndex { meta, categories })
}

#[derive(Serialize, Deserialize)]
struct CategoryEntry {
    category: String,
    ids: Vec<String>,
    offsets: Vec<usize>,
    probes: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    kind: String,
    meta: IndexMeta,
    categories: Vec<CategoryEntry>,
}

const INDEX_KIND: &str = "ctl-inverted-index";

impl InvertedIndex {
    pub fn to_tensor_file(&self, vocab: &CategoryVocab) -> Result<TensorFile> {
        let mut entries = Vec::new();
        let mut tensors = Vec::new();
        for (i, (cat, ann)) in self.categories.iter().enumerate() {
            entries.push(CategoryEntry {
                category: vocab.name(*cat).to_string(),
                ids: ann.ids().to_vec(),
                offsets: ann.offsets().to_vec(),
                probes: ann.probes,
            });
            let vectors = Array2::from_shape_vec((ann.len(), ann.dim()), ann.vectors().to_vec())
                .expect("consistent shape");
            tensors.push((format!("{i}.centroids"), ann.centroids().clone()));
            tensors.push((format!("{i}.vectors"), vectors));
        }
        let header = IndexHeader {
            kind: INDEX_KIND.into(),
            meta: self.meta.clone(),
            categories: entries,
        };
        let mut f = TensorFile::new(serde_json::to_value(header)?);
        for (name, t) in &tensors {
            f.push_array2(name, t)?;
        }
        Ok(f)
    }

    pub fn from_tensor_file(file: &TensorFile, vocab: &CategoryVocab) -> Result<Self> {
        let header: IndexHeader = serde_json::from_value(file.metadata.clone())?;
        if header.kind != INDEX_KIND {
            return Err(Error::invalid(format!("not an index file (kind {:?})", header.kind)));
        }
        if header.meta.vocab_digest != vocab.digest() {
            return Err(Error::invalid("index was built with a different category vocabulary"));
        }
        let mut categories = BTreeMap::new();
        for (i, e) in header.categories.into_iter().enumerate() {
            let cat = vocab
                .lookup(&e.category)
                .ok_or_else(|| Error::invalid(format!("unknown category {:?} in index", e.category)))?;
            let centroids = file.array2(&format!("{i}.centroids"))?;
            let vectors = file.array2(&format!("{i}.vectors"))?;
            let ann = AnnIndex::from_parts(centroids, e.offsets, e.ids, vectors.into_raw_vec_and_offset().0, e.probes)?;
            categories.insert(cat, ann);
        }
        Ok(Self {
            meta: header.meta,
            categories,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab: &CategoryVocab) -> Result<()> {
        self.to_tensor_file(vocab)?.save(path)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &CategoryVocab) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?, vocab)
    }
}
