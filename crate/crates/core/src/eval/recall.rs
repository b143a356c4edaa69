use std::cmp::Ordering;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{distance, lookup};
use crate::category::Category;
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::outfit::{derive_seed, Outfit};
use crate::sampling::ItemTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusMode {
    AllCategories,
    PerCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub corpus_size: usize,
    pub mode: CorpusMode,
    /// Only outfits with exactly this many items supply queries.
    pub outfit_size: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10],
            corpus_size: 200,
            mode: CorpusMode::PerCategory,
            outfit_size: 5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks[0] == 0 || self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("K values must be positive and strictly ascending"));
        }
        if self.corpus_size <= *self.ks.last().unwrap() {
            return Err(Error::invalid("corpus size must exceed the largest K"));
        }
        if self.outfit_size < 2 {
            return Err(Error::invalid("outfit size filter must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallCorpus {
    pub query: String,
    /// Restricting category in per-category mode.
    pub category: Option<Category>,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl RecallCorpus {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pool `pool` (sorted item indices) minus the contiguous `own` range: draws `n` distinct.
fn sample_excluding<R: Rng + ?Sized>(
    pool: &[usize],
    own: std::ops::Range<usize>,
    n: usize,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let lo = pool.partition_point(|&i| i < own.start);
    let hi = pool.partition_point(|&i| i < own.end);
    let available = pool.len() - (hi - lo);
    if available < n {
        return None;
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, available, n)
        .into_iter()
        .map(|k| if k < lo { pool[k] } else { pool[k + hi - lo] })
        .collect();
    picked.sort_unstable();
    Some(picked)
}

fn corpus_for(
    table: &ItemTable,
    all_items: &[usize],
    query: usize,
    category: Option<Category>,
    corpus_size: usize,
    seed: u64,
) -> Result<RecallCorpus> {
    let own = table.outfit_ranges[table.outfit_of[query]].clone();
    let positives: Vec<usize> = own
        .clone()
        .filter(|&j| j != query && category.is_none_or(|c| table.categories[j] == c))
        .collect();
    if positives.is_empty() {
        return Err(Error::invalid(format!(
            "query {} has no outfit-mates in the requested category",
            table.item_ids[query]
        )));
    }
    let needed = corpus_size.checked_sub(positives.len()).ok_or_else(|| {
        Error::invalid(format!("corpus size {corpus_size} smaller than {} positives", positives.len()))
    })?;
    let pool = match category {
        Some(c) => &table.by_category[c.index()][..],
        None => all_items,
    };
    let key = format!(
        "{}\u{1f}{}",
        table.item_ids[query],
        category.map_or(-1, |c| c.index() as i64)
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &key));
    let negatives = sample_excluding(pool, own.clone(), needed, &mut rng).ok_or_else(|| {
        let available = pool.len() - pool.iter().filter(|i| own.contains(i)).count();
        Error::InsufficientData(format!(
            "corpus for {} needs {needed} negatives, only {available} available",
            table.item_ids[query]
        ))
    })?;
    let ids = |v: Vec<usize>| v.into_iter().map(|i| table.item_ids[i].clone()).collect();
    Ok(RecallCorpus {
        query: table.item_ids[query].clone(),
        category,
        positives: ids(positives),
        negatives: ids(negatives),
    })
}

/// Builds the corpus for one query item (located by id) of an outfit in `test_outfits`.
pub fn build_recall_corpus(
    test_outfits: &[Outfit],
    query_item: &str,
    category: Option<Category>,
    cfg: &EvalConfig,
) -> Result<RecallCorpus> {
    cfg.validate()?;
    let n_cats = test_outfits
        .iter()
        .flat_map(|o| &o.items)
        .map(|i| i.category.index() + 1)
        .max()
        .unwrap_or(0);
    let table = ItemTable::new(test_outfits, n_cats)?;
    let query = table
        .item_ids
        .iter()
        .position(|id| id == query_item)
        .ok_or_else(|| Error::invalid(format!("unknown query item {query_item:?}")))?;
    let outfit_len = table.outfit_ranges[table.outfit_of[query]].len();
    if outfit_len != cfg.outfit_size {
        return Err(Error::invalid(format!(
            "query outfit has {outfit_len} items, expected {}",
            cfg.outfit_size
        )));
    }
    let all: Vec<usize> = (0..table.len()).collect();
    corpus_for(&table, &all, query, category, cfg.corpus_size, cfg.seed)
}

/// Corpus items ranked by ascending distance to the query, ties by `item_id`.
pub fn rank_corpus<'a>(emb: &FeatureStore, corpus: &'a RecallCorpus) -> Result<Vec<(&'a str, f64, bool)>> {
    let q = lookup(emb, &corpus.query)?;
    let mut ranked = Vec::with_capacity(corpus.len());
    for (ids, positive) in [(&corpus.positives, true), (&corpus.negatives, false)] {
        for id in ids {
            ranked.push((id.as_str(), distance(q, lookup(emb, id)?), positive));
        }
    }
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0)));
    Ok(ranked)
}

/// Recall at each K: positives in the top K over `min(#positives, K)`.
pub fn recall_scores(emb: &FeatureStore, corpus: &RecallCorpus, ks: &[usize]) -> Result<Vec<f64>> {
    let ranked = rank_corpus(emb, corpus)?;
    let p = corpus.positives.len();
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranked.iter().take(k).filter(|r| r.2).count();
            hits as f64 / p.min(k).max(1) as f64
        })
        .collect())
}

pub fn recall_at_k(emb: &FeatureStore, corpus: &RecallCorpus, k: usize) -> Result<f64> {
    Ok(recall_scores(emb, corpus, &[k])?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub ks: Vec<usize>,
    /// Mean recall per K as a fraction in [0, 1].
    pub recall: Vec<f64>,
    pub corpora: usize,
    /// Corpora that could not be filled to the configured size.
    pub skipped: usize,
}

/// Mean recall over every query of every eligible outfit. In per-category mode each query
/// yields one corpus per distinct outfit-mate category; scores are averaged within each
/// category first and then across categories.
pub fn evaluate_recall(emb: &FeatureStore, test_outfits: &[Outfit], cfg: &EvalConfig) -> Result<RecallReport> {
    cfg.validate()?;
    let n_cats = test_outfits
        .iter()
        .flat_map(|o| &o.items)
        .map(|i| i.category.index() + 1)
        .max()
        .unwrap_or(0);
    let table = ItemTable::new(test_outfits, n_cats)?;
    let all: Vec<usize> = (0..table.len()).collect();

    let mut jobs: Vec<(usize, Option<Category>)> = Vec::new();
    for range in table.outfit_ranges.iter().filter(|r| r.len() == cfg.outfit_size) {
        for q in range.clone() {
            match cfg.mode {
                CorpusMode::AllCategories => jobs.push((q, None)),
                CorpusMode::PerCategory => {
                    let mut cats: Vec<Category> =
                        range.clone().filter(|&j| j != q).map(|j| table.categories[j]).collect();
                    cats.sort_unstable();
                    cats.dedup();
                    jobs.extend(cats.into_iter().map(|c| (q, Some(c))));
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no test outfits with exactly {} items",
            cfg.outfit_size
        )));
    }

    let results: Vec<Result<Option<Vec<f64>>>> = jobs
        .par_iter()
        .map(|&(q, c)| match corpus_for(&table, &all, q, c, cfg.corpus_size, cfg.seed) {
            Ok(corpus) => recall_scores(emb, &corpus, &cfg.ks).map(Some),
            Err(Error::InsufficientData(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    // fixed-order reduction
    let groups = match cfg.mode {
        CorpusMode::AllCategories => 1,
        CorpusMode::PerCategory => n_cats,
    };
    let mut sums = vec![vec![0.0; cfg.ks.len()]; groups];
    let mut counts = vec![0usize; groups];
    let mut skipped = 0;
    for (&(_, c), r) in jobs.iter().zip(results) {
        match r? {
            Some(scores) => {
                let g = c.map_or(0, |c| c.index());
                for (s, v) in sums[g].iter_mut().zip(&scores) {
                    *s += v;
                }
                counts[g] += 1;
            }
            None => skipped += 1,
        }
    }
    let filled: Vec<usize> = (0..groups).filter(|&g| counts[g] > 0).collect();
    if filled.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no corpus could be filled to {} items",
            cfg.corpus_size
        )));
    }
    let recall = (0..cfg.ks.len())
        .map(|k| filled.iter().map(|&g| sums[g][k] / counts[g] as f64).sum::<f64>() / filled.len() as f64)
        .collect();
    Ok(RecallReport {
        ks: cfg.ks.clone(),
        recall,
        corpora: counts.iter().sum(),
        skipped,
    })
}
