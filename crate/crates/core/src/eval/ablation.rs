//! Grid runner over training methods, feature sets and training-set sizes.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_fitb, evaluate_recall, EvalConfig, EvalReport};
use crate::category::CategoryVocab;
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::model::ModelParams;
use crate::outfit::Outfit;
use crate::sampling::{NegativeMode, NegativeRatio};
use crate::train::{train, Method, TrainConfig, TrainError, TrainInput};

/// A training recipe: loss plus sampling options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub method: Method,
    pub negative_mode: NegativeMode,
    pub negative_ratio: NegativeRatio,
}

impl MethodSpec {
    /// Accepts `proxy`, `contrastive`, `contrastive_16`, `triplet` and `triplet_cat`.
    pub fn parse(name: &str) -> Result<Self> {
        let (method, mode, ratio) = match name {
            "proxy" => (Method::Proxy, NegativeMode::Random, NegativeRatio::OneToOne),
            "contrastive" => (Method::Contrastive, NegativeMode::Random, NegativeRatio::OneToOne),
            "contrastive_16" => (Method::Contrastive, NegativeMode::Random, NegativeRatio::SixteenToOne),
            "triplet" => (Method::Triplet, NegativeMode::Random, NegativeRatio::OneToOne),
            "triplet_cat" => (Method::Triplet, NegativeMode::SameCategory, NegativeRatio::OneToOne),
            _ => return Err(Error::invalid(format!("unknown method spec {name:?}"))),
        };
        Ok(Self {
            name: name.to_string(),
            method,
            negative_mode: mode,
            negative_ratio: ratio,
        })
    }

    pub fn all() -> Vec<Self> {
        ["proxy", "contrastive", "contrastive_16", "triplet", "triplet_cat"]
            .into_iter()
            .map(|n| Self::parse(n).expect("known"))
            .collect()
    }

    pub fn apply(&self, cfg: &TrainConfig) -> TrainConfig {
        TrainConfig {
            negative_mode: self.negative_mode,
            negative_ratio: self.negative_ratio,
            ..cfg.clone()
        }
    }
}

pub struct FeatureSet<'a> {
    pub name: String,
    pub store: &'a FeatureStore,
}

pub struct AblationPlan<'a> {
    pub methods: Vec<MethodSpec>,
    pub feature_sets: Vec<FeatureSet<'a>>,
    /// Training-set sizes; each uses the first `n` training outfits.
    pub dataset_sizes: Vec<usize>,
    pub train_outfits: &'a [Outfit],
    pub test_outfits: &'a [Outfit],
    pub vocab: &'a CategoryVocab,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub feature_set: String,
    pub train_size: usize,
    pub train_seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub train_seconds: f64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn find(&self, method: &str, feature_set: &str, size: usize) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.feature_set == feature_set && r.train_size == size)
    }

    pub fn to_text(&self) -> String {
        let mut cells = vec![["Method", "Features", "Train", "R@1", "R@5", "R@10", "FITB", "Status"].map(String::from).to_vec()];
        for r in &self.rows {
            let metric = |k: Option<usize>| match (&r.report, k) {
                (Some(rep), Some(k)) => rep.recall(k).map_or("-".into(), |v| format!("{v:.1}")),
                (Some(rep), None) => format!("{:.1}", rep.fitb),
                (None, _) => "-".into(),
            };
            cells.push(vec![
                r.method.clone(),
                r.feature_set.clone(),
                r.train_size.to_string(),
                metric(Some(1)),
                metric(Some(5)),
                metric(Some(10)),
                metric(None),
                r.error.clone().unwrap_or_else(|| "ok".into()),
            ]);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if c < 2 || c == 7 {
                        format!("{v:<w$}", w = widths[c])
                    } else {
                        format!("{v:>w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Embeds the test outfits and runs both evaluators.
pub fn evaluate_model(
    name: &str,
    params: &ModelParams,
    test_outfits: &[Outfit],
    features: &FeatureStore,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let emb = params.embed_outfits(test_outfits, features)?;
    let recall = evaluate_recall(&emb, test_outfits, cfg)?;
    let fitb = evaluate_fitb(&emb, test_outfits, cfg.seed)?;
    Ok(EvalReport::new(name, &recall, &fitb, cfg))
}

/// Runs every (method, feature set, size) cell in order. A failing cell is recorded and
/// the run continues.
pub fn run_ablation(plan: &AblationPlan<'_>) -> AblationTable {
    let mut rows = Vec::new();
    for fs in &plan.feature_sets {
        for &size in &plan.dataset_sizes {
            for spec in &plan.methods {
                let cfg = spec.apply(&plan.train);
                let start = Instant::now();
                let result = (|| -> Result<EvalReport> {
                    if size > plan.train_outfits.len() {
                        return Err(Error::InsufficientData(format!(
                            "requested {size} training outfits, have {}",
                            plan.train_outfits.len()
                        )));
                    }
                    let input = TrainInput {
                        outfits: &plan.train_outfits[..size],
                        features: fs.store,
                        vocab: plan.vocab,
                    };
                    let outcome = train(spec.method, input, &cfg, None).map_err(|e| match e {
                        TrainError::Core(e) => e,
                        other => Error::NonFinite(other.to_string()),
                    })?;
                    evaluate_model(&spec.name, &outcome.params, plan.test_outfits, fs.store, &plan.eval)
                })();
                let train_seconds = start.elapsed().as_secs_f64();
                let (report, error) = match result {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(AblationRow {
                    method: spec.name.clone(),
                    feature_set: fs.name.clone(),
                    train_size: size,
                    train_seed: cfg.seed,
                    lr: cfg.adam.lr,
                    epochs: cfg.epochs,
                    train_seconds,
                    report,
                    error,
                });
            }
        }
    }
    AblationTable { rows }
}
