use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{distance, lookup};
use crate::category::Category;
use crate::error::Result;
use crate::features::FeatureStore;
use crate::outfit::{derive_seed, Outfit};
use crate::sampling::ItemTable;

pub const FITB_CANDIDATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitbQuestion {
    pub outfit_id: String,
    pub query_items: Vec<String>,
    pub candidates: Vec<String>,
    pub answer: usize,
    pub category: Category,
}

/// Index of the candidate with the smallest mean distance to the query items; ties go to
/// the lowest `item_id`.
pub fn answer_fitb(emb: &FeatureStore, q: &FitbQuestion) -> Result<usize> {
    let queries = q
        .query_items
        .iter()
        .map(|id| lookup(emb, id))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, &str, usize)> = None;
    for (idx, cand) in q.candidates.iter().enumerate() {
        let c = lookup(emb, cand)?;
        let mean = queries.iter().map(|qv| distance(qv, c)).sum::<f64>() / queries.len().max(1) as f64;
        let better = match best {
            None => true,
            Some((d, id, _)) => mean < d || (mean == d && cand.as_str() < id),
        };
        if better {
            best = Some((mean, cand.as_str(), idx));
        }
    }
    Ok(best.map_or(0, |b| b.2))
}

/// One question per outfit: a seeded item is removed and must be picked out from three
/// same-category distractors drawn from other test outfits. Returns the questions and the
/// number of outfits skipped for lack of distractors.
pub fn build_fitb_questions(test_outfits: &[Outfit], seed: u64) -> Result<(Vec<FitbQuestion>, usize)> {
    let n_cats = test_outfits
        .iter()
        .flat_map(|o| &o.items)
        .map(|i| i.category.index() + 1)
        .max()
        .unwrap_or(0);
    let table = ItemTable::new(test_outfits, n_cats)?;
    let mut questions = Vec::with_capacity(test_outfits.len());
    let mut skipped = 0;
    for (o, outfit) in test_outfits.iter().enumerate() {
        if outfit.items.len() < 2 {
            skipped += 1;
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &outfit.outfit_id));
        let range = table.outfit_ranges[o].clone();
        let removed = range.start + rng.random_range(0..range.len());
        let category = table.categories[removed];
        let pool: Vec<usize> = table.by_category[category.index()]
            .iter()
            .copied()
            .filter(|i| !range.contains(i))
            .collect();
        if pool.len() < FITB_CANDIDATES - 1 {
            skipped += 1;
            continue;
        }
        let mut candidates: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), FITB_CANDIDATES - 1)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        candidates.push(removed);
        candidates.shuffle(&mut rng);
        let answer = candidates.iter().position(|&c| c == removed).expect("positive present");
        questions.push(FitbQuestion {
            outfit_id: outfit.outfit_id.clone(),
            query_items: range
                .filter(|&i| i != removed)
                .map(|i| table.item_ids[i].clone())
                .collect(),
            candidates: candidates.into_iter().map(|i| table.item_ids[i].clone()).collect(),
            answer,
            category,
        });
    }
    Ok((questions, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitbReport {
    /// Fraction in [0, 1].
    pub accuracy: f64,
    pub questions: usize,
    pub skipped: usize,
}

pub fn evaluate_fitb(emb: &FeatureStore, test_outfits: &[Outfit], seed: u64) -> Result<FitbReport> {
    let (questions, skipped) = build_fitb_questions(test_outfits, seed)?;
    let answers: Vec<Result<bool>> = questions
        .par_iter()
        .map(|q| answer_fitb(emb, q).map(|a| a == q.answer))
        .collect();
    let mut correct = 0usize;
    for a in answers {
        correct += usize::from(a?);
    }
    Ok(FitbReport {
        accuracy: if questions.is_empty() {
            0.0
        } else {
            correct as f64 / questions.len() as f64
        },
        questions: questions.len(),
        skipped,
    })
}
