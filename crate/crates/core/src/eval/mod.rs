//! Offline evaluation: recall@K over sampled retrieval corpora, fill-in-the-blank, ablation
//! tables and human-judgment bookkeeping.
//!
//! Evaluators consume precomputed embeddings keyed by `item_id`. Distances are accumulated
//! in `f64` in coordinate order so results are reproducible bit for bit.

pub mod ablation;
mod fitb;
pub mod judgment;
mod recall;
mod report;

pub use fitb::{answer_fitb, build_fitb_questions, evaluate_fitb, FitbQuestion, FitbReport};
pub use recall::{
    build_recall_corpus, evaluate_recall, rank_corpus, recall_at_k, recall_scores, CorpusMode, EvalConfig,
    RecallCorpus, RecallReport,
};
pub use report::{EvalReport, EvalTable};

use crate::error::{Error, Result};
use crate::features::FeatureStore;

/// Euclidean distance accumulated in `f64`.
pub fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn lookup<'a>(emb: &'a FeatureStore, id: &str) -> Result<&'a [f32]> {
    emb.get(id).ok_or_else(|| Error::MissingFeature(id.to_string()))
}
