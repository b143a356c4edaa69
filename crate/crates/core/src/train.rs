//! Deterministic single-threaded trainer for both heads over frozen features.
//!
//! The category head is fit with softmax cross-entropy on item labels; the style head
//! with one of the three metric-learning objectives. Each head has its own optimizer.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::CategoryVocab;
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::losses::{contrastive_loss, proxy_batch_loss, triplet_loss, LossConfig, ProxyBank, DEFAULT_PROXY_SAMPLE};
use crate::model::{gather_features, Checkpoint, CheckpointMeta, ModelParams, ModelShape, DEFAULT_DROPOUT, EMBEDDING_DIM, HIDDEN_DIM};
use crate::nn::softmax_cross_entropy;
use crate::optim::{Adam, AdamConfig, RowAdam};
use crate::outfit::Outfit;
use crate::sampling::{sample_pairs, sample_triplets, ItemTable, NegativeMode, NegativeRatio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proxy,
    Contrastive,
    Triplet,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Proxy => "proxy",
            Method::Contrastive => "contrastive",
            Method::Triplet => "triplet",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy" => Ok(Self::Proxy),
            "contrastive" => Ok(Self::Contrastive),
            "triplet" => Ok(Self::Triplet),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Examples (pairs, triplets or items) per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub negative_ratio: NegativeRatio,
    pub negative_mode: NegativeMode,
    pub loss: LossConfig,
    pub proxy_samples: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 128,
            epochs: 5,
            dropout: DEFAULT_DROPOUT,
            seed: 0,
            negative_ratio: NegativeRatio::OneToOne,
            negative_mode: NegativeMode::SameCategory,
            loss: LossConfig::default(),
            proxy_samples: DEFAULT_PROXY_SAMPLE,
            hidden: HIDDEN_DIM,
            embedding_dim: EMBEDDING_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.loss.validate()?;
        if self.batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        if self.proxy_samples < 1 || self.hidden < 1 || self.embedding_dim < 1 {
            return Err(Error::invalid("proxy samples and layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
    pub category_loss: f64,
    pub wall_seconds: f64,
}

/// Writes `epoch,loss,wall_seconds` rows.
pub fn write_loss_curve<W: Write>(w: W, curve: &[EpochLoss]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["epoch", "loss", "wall_seconds"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for e in curve {
        csv.write_record([e.epoch.to_string(), format!("{:.6}", e.loss), format!("{:.3}", e.wall_seconds)])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<EpochLoss>,
    pub skipped_triplets: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        last_good: Box<ModelParams>,
        curve: Vec<EpochLoss>,
    },
}

pub struct TrainInput<'a> {
    pub outfits: &'a [Outfit],
    pub features: &'a FeatureStore,
    pub vocab: &'a CategoryVocab,
}

struct StyleStep {
    loss: f64,
}

struct Trainer<'a> {
    method: Method,
    cfg: &'a TrainConfig,
    table: ItemTable,
    x: Array2<f32>,
    params: ModelParams,
    style_adam: Adam<f32>,
    category_adam: Adam<f32>,
    bank: Option<(ProxyBank<f32>, RowAdam<f32>)>,
    rng: ChaCha8Rng,
}

fn group_sizes(groups: Vec<&mut [f32]>) -> Vec<usize> {
    groups.iter().map(|g| g.len()).collect()
}

impl Trainer<'_> {
    /// Forward on `rows`, apply `loss_fn` to the embeddings, backprop and update.
    fn style_step<L>(&mut self, rows: &[usize], loss_fn: L) -> Result<StyleStep>
    where
        L: FnOnce(&Array2<f32>, &mut Self) -> Result<(f64, Array2<f32>)>,
    {
        let x = self.x.select(Axis(0), rows);
        let cache = self.params.forward_style_train(x.view(), &mut self.rng)?;
        let (loss, grad_emb) = loss_fn(&cache.embeddings, self)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("style loss {loss}")));
        }
        let grads = self.params.style.backward(x.view(), &cache, grad_emb.view());
        let mut params = self.params.style.params_mut();
        self.style_adam.step(&mut params, &grads.slices())?;
        self.params.style.bn.update_running(cache.bn_cache(), rows.len());
        Ok(StyleStep { loss })
    }

    fn triplet_epoch(&mut self, seed: u64) -> Result<(f64, usize)> {
        let epoch = sample_triplets(&self.table, self.cfg.negative_mode, seed)?;
        let margin = self.cfg.loss.margin as f32;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in epoch.triplets.chunks(self.cfg.batch_size) {
            let b = chunk.len();
            let mut rows = Vec::with_capacity(3 * b);
            rows.extend(chunk.iter().map(|t| t.anchor));
            rows.extend(chunk.iter().map(|t| t.positive));
            rows.extend(chunk.iter().map(|t| t.negative));
            let step = self.style_step(&rows, |e, _| {
                let mut grad = Array2::zeros(e.raw_dim());
                let mut loss = 0.0;
                let scale = 1.0 / b as f32;
                for t in 0..b {
                    let (a, p, n) = (e.row(t), e.row(b + t), e.row(2 * b + t));
                    let l = triplet_loss(a.as_slice().unwrap(), p.as_slice().unwrap(), n.as_slice().unwrap(), margin);
                    loss += l.loss as f64 / b as f64;
                    for (row, g) in [(t, &l.grad_anchor), (b + t, &l.grad_positive), (2 * b + t, &l.grad_negative)] {
                        grad.row_mut(row).zip_mut_with(&ndarray::aview1(g), |d, &v| *d += v * scale);
                    }
                }
                Ok((loss, grad))
            })?;
            total += step.loss;
            batches += 1;
        }
        Ok((total / batches.max(1) as f64, epoch.skipped))
    }

    fn pair_epoch(&mut self, seed: u64) -> Result<f64> {
        let pairs = sample_pairs(&self.table, self.cfg.negative_ratio, seed)?;
        let margin = self.cfg.loss.margin as f32;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in pairs.chunks(self.cfg.batch_size) {
            let b = chunk.len();
            let mut rows = Vec::with_capacity(2 * b);
            rows.extend(chunk.iter().map(|p| p.i));
            rows.extend(chunk.iter().map(|p| p.j));
            let step = self.style_step(&rows, |e, _| {
                let mut grad = Array2::zeros(e.raw_dim());
                let mut loss = 0.0;
                let scale = 1.0 / b as f32;
                for (t, pair) in chunk.iter().enumerate() {
                    let l = contrastive_loss(
                        e.row(t).as_slice().unwrap(),
                        e.row(b + t).as_slice().unwrap(),
                        pair.same,
                        margin,
                    );
                    loss += l.loss as f64 / b as f64;
                    grad.row_mut(t).zip_mut_with(&ndarray::aview1(&l.grad_i), |d, &v| *d += v * scale);
                    grad.row_mut(b + t).zip_mut_with(&ndarray::aview1(&l.grad_j), |d, &v| *d += v * scale);
                }
                Ok((loss, grad))
            })?;
            total += step.loss;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }

    fn proxy_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.table.len()).collect();
        order.shuffle(&mut self.rng);
        let tau = self.cfg.loss.temperature as f32;
        let mut total = 0.0;
        let mut batches = 0;
        // batch norm needs at least two rows
        let batch = self.cfg.batch_size.max(2);
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let targets: Vec<usize> = chunk.iter().map(|&i| self.table.outfit_of[i]).collect();
            let step = self.style_step(chunk, |e, me| {
                let (bank, _) = me.bank.as_ref().expect("proxy bank");
                let sampled = bank.sample_set(&targets, &mut me.rng);
                let out = proxy_batch_loss(e.view(), bank, &targets, &sampled, tau)?;
                let (bank, opt) = me.bank.as_mut().expect("proxy bank");
                for (k, &s) in sampled.iter().enumerate() {
                    let g = out.grad_proxies.row(k);
                    let mut row = bank.proxies.row_mut(s);
                    opt.step_row(s, row.as_slice_mut().unwrap(), g.as_slice().unwrap())?;
                    bank.renormalize(s);
                }
                Ok((out.loss as f64, out.grad_embeddings))
            })?;
            total += step.loss;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }

    fn category_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.table.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let x = self.x.select(Axis(0), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| self.table.categories[i].index()).collect();
            let (logits, cache) = self.params.category.forward_cached(x.view());
            let (loss, grad) = softmax_cross_entropy(logits.view(), &labels);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("category loss {loss}")));
            }
            let grads = self.params.category.backward(x.view(), &cache, grad.view());
            let mut params = self.params.category.params_mut();
            self.category_adam.step(&mut params, &grads.slices())?;
            total += loss as f64;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }
}

/// Trains both heads for `cfg.epochs` epochs. With `checkpoint`, the latest good parameters
/// are saved after initialization and after every epoch.
pub fn train(
    method: Method,
    input: TrainInput<'_>,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> std::result::Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if input.outfits.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()).into());
    }
    let table = ItemTable::new(input.outfits, input.vocab.len())?;
    let x = gather_features(table.feature_refs.iter().map(String::as_str), input.features)?;
    let shape = ModelShape {
        input_dim: input.features.dim(),
        classes: input.vocab.len(),
        category_hidden: cfg.hidden,
        style_hidden: cfg.hidden,
        embedding_dim: cfg.embedding_dim,
    };
    let mut params = ModelParams::init(shape, cfg.dropout, cfg.seed)?;
    let style_adam = Adam::new(cfg.adam, &group_sizes(params.style.params_mut()));
    let category_adam = Adam::new(cfg.adam, &group_sizes(params.category.params_mut()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let bank = (method == Method::Proxy).then(|| {
        (
            ProxyBank::init(table.outfits(), cfg.embedding_dim, cfg.proxy_samples, &mut rng),
            RowAdam::new(cfg.adam, table.outfits(), cfg.embedding_dim),
        )
    });

    let config_json = serde_json::to_value(cfg).map_err(Error::from)?;
    let save = |params: &ModelParams, epochs: usize| -> Result<()> {
        if let Some(path) = checkpoint {
            let mut meta = CheckpointMeta::new(&method.to_string(), config_json.clone(), input.vocab, params);
            meta.epochs_completed = epochs;
            Checkpoint {
                params: params.clone(),
                meta,
            }
            .save(path)?;
        }
        Ok(())
    };
    save(&params, 0)?;

    let mut trainer = Trainer {
        method,
        cfg,
        table,
        x,
        params,
        style_adam,
        category_adam,
        bank,
        rng,
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut skipped_triplets = 0;
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let last_good = trainer.params.clone();
        let seed = trainer.rng.random::<u64>();
        let result = (|| -> Result<(f64, f64)> {
            let loss = match trainer.method {
                Method::Triplet => {
                    let (loss, skipped) = trainer.triplet_epoch(seed)?;
                    skipped_triplets += skipped;
                    loss
                }
                Method::Contrastive => trainer.pair_epoch(seed)?,
                Method::Proxy => trainer.proxy_epoch()?,
            };
            let category_loss = trainer.category_epoch()?;
            if !loss.is_finite() || !trainer.params.is_finite() {
                return Err(Error::NonFinite(format!("epoch loss {loss}")));
            }
            Ok((loss, category_loss))
        })();
        match result {
            Ok((loss, category_loss)) => {
                curve.push(EpochLoss {
                    epoch,
                    loss,
                    category_loss,
                    wall_seconds: start.elapsed().as_secs_f64(),
                });
                save(&trainer.params, epoch)?;
            }
            Err(Error::NonFinite(reason)) => {
                return Err(TrainError::Diverged {
                    epoch,
                    reason,
                    last_good: Box::new(last_good),
                    curve,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(TrainOutcome {
        params: trainer.params,
        curve,
        skipped_triplets,
    })
}
