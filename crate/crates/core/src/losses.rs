//! Metric-learning losses with analytic gradients.
//!
//! Distances are Euclidean between (already normalized) embeddings. Each loss returns
//! its value together with the gradient with respect to every embedding it touched.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Float};

pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    /// Softmax temperature for the proxy loss.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            temperature: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !(self.temperature > 0.0) {
            return Err(Error::invalid("margin and temperature must be positive"));
        }
        Ok(())
    }
}

pub fn squared_distance<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, v| acc + v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss<F> {
    pub loss: F,
    pub grad_i: Vec<F>,
    pub grad_j: Vec<F>,
}

/// `y·D² + (1−y)·[α − D]₊²` for a pair with label `same`.
pub fn contrastive_loss<F: Float>(e_i: &[F], e_j: &[F], same: bool, margin: F) -> PairLoss<F> {
    let two = F::lit(2.0);
    let d2 = squared_distance(e_i, e_j);
    let diff: Vec<F> = e_i.iter().zip(e_j).map(|(&a, &b)| a - b).collect();
    let (loss, scale) = if same {
        (d2, two)
    } else {
        let d = d2.sqrt();
        let slack = margin - d;
        if slack > F::zero() && d > F::zero() {
            (slack * slack, -two * slack / d)
        } else if slack > F::zero() {
            // coincident embeddings: direction undefined, leave gradient at zero
            (slack * slack, F::zero())
        } else {
            (F::zero(), F::zero())
        }
    };
    let grad_i: Vec<F> = diff.iter().map(|&v| v * scale).collect();
    let grad_j: Vec<F> = grad_i.iter().map(|&v| -v).collect();
    PairLoss { loss, grad_i, grad_j }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss<F> {
    pub loss: F,
    pub grad_anchor: Vec<F>,
    pub grad_positive: Vec<F>,
    pub grad_negative: Vec<F>,
}

/// `[D²(a,p) − D²(a,n) + α]₊`.
pub fn triplet_loss<F: Float>(anchor: &[F], positive: &[F], negative: &[F], margin: F) -> TripletLoss<F> {
    let dim = anchor.len();
    let value = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
    if value <= F::zero() {
        return TripletLoss {
            loss: F::zero(),
            grad_anchor: vec![F::zero(); dim],
            grad_positive: vec![F::zero(); dim],
            grad_negative: vec![F::zero(); dim],
        };
    }
    let two = F::lit(2.0);
    let mut grad_anchor = Vec::with_capacity(dim);
    let mut grad_positive = Vec::with_capacity(dim);
    let mut grad_negative = Vec::with_capacity(dim);
    for k in 0..dim {
        let (a, p, n) = (anchor[k], positive[k], negative[k]);
        grad_anchor.push(two * (n - p));
        grad_positive.push(-two * (a - p));
        grad_negative.push(two * (a - n));
    }
    TripletLoss {
        loss: value,
        grad_anchor,
        grad_positive,
        grad_negative,
    }
}

/// One learnable unit-norm proxy per training outfit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyBank<F> {
    pub proxies: Array2<F>,
    pub sample_size: usize,
}

pub const DEFAULT_PROXY_SAMPLE: usize = 2048;

impl<F: Float> ProxyBank<F> {
    pub fn init<R: Rng + ?Sized>(instances: usize, dim: usize, sample_size: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let mut bank = Self {
            proxies: Array2::from_shape_simple_fn((instances, dim), || StandardNormal.sample(rng)),
            sample_size,
        };
        for i in 0..instances {
            bank.renormalize(i);
        }
        bank
    }

    pub fn len(&self) -> usize {
        self.proxies.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.proxies.nrows() == 0
    }

    pub fn renormalize(&mut self, instance: usize) {
        let mut row = self.proxies.row_mut(instance);
        let norm = row.dot(&row).sqrt();
        if norm > F::zero() {
            row.mapv_inplace(|v| v / norm);
        }
    }

    /// `min(S, instances)` distinct instances containing every `required` one, sorted.
    pub fn sample_set<R: Rng + ?Sized>(&self, required: &[usize], rng: &mut R) -> Vec<usize> {
        let n = self.len();
        let target = self.sample_size.min(n).max(required.len().min(n));
        let mut chosen = vec![false; n];
        let mut set = Vec::with_capacity(target);
        for &r in required {
            if !chosen[r] {
                chosen[r] = true;
                set.push(r);
            }
        }
        if set.len() < target {
            for idx in rand::seq::index::sample(rng, n, n.min(target + set.len())) {
                if set.len() >= target {
                    break;
                }
                if !chosen[idx] {
                    chosen[idx] = true;
                    set.push(idx);
                }
            }
        }
        set.sort_unstable();
        set
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyLoss<F> {
    pub loss: F,
    pub grad_embedding: Vec<F>,
    /// Gradient per proxy, aligned with the sampled set.
    pub grad_proxies: Vec<Vec<F>>,
}

/// Softmax cross-entropy of `e·proxy / τ` over `sampled`, targeting `true_instance`.
pub fn proxy_softmax_loss<F: Float>(
    embedding: &[F],
    bank: &ProxyBank<F>,
    true_instance: usize,
    sampled: &[usize],
    temperature: F,
) -> Result<ProxyLoss<F>> {
    let target = sampled
        .iter()
        .position(|&s| s == true_instance)
        .ok_or_else(|| Error::invalid(format!("true instance {true_instance} not in sampled set")))?;
    let logits: Vec<F> = sampled
        .iter()
        .map(|&s| {
            let p = bank.proxies.row(s);
            embedding.iter().zip(p.iter()).fold(F::zero(), |acc, (&e, &q)| acc + e * q) / temperature
        })
        .collect();
    let max = logits.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let exp: Vec<F> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: F = exp.iter().fold(F::zero(), |a, &b| a + b);
    let probs: Vec<F> = exp.iter().map(|&v| v / z).collect();
    let loss = z.ln() + max - logits[target];

    let dim = embedding.len();
    let mut grad_embedding = vec![F::zero(); dim];
    let mut grad_proxies = Vec::with_capacity(sampled.len());
    for (k, &s) in sampled.iter().enumerate() {
        let coeff = (probs[k] - if k == target { F::one() } else { F::zero() }) / temperature;
        let p = bank.proxies.row(s);
        for (g, &q) in grad_embedding.iter_mut().zip(p.iter()) {
            *g = *g + coeff * q;
        }
        grad_proxies.push(embedding.iter().map(|&e| coeff * e).collect());
    }
    Ok(ProxyLoss {
        loss,
        grad_embedding,
        grad_proxies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyBatchLoss<F> {
    /// Mean over the batch.
    pub loss: F,
    pub grad_embeddings: Array2<F>,
    /// Gradient per sampled proxy row, aligned with the sampled set.
    pub grad_proxies: Array2<F>,
}

/// Batched [`proxy_softmax_loss`] averaged over rows, sharing one sampled set.
pub fn proxy_batch_loss<F: Float>(
    embeddings: ArrayView2<F>,
    bank: &ProxyBank<F>,
    targets: &[usize],
    sampled: &[usize],
    temperature: F,
) -> Result<ProxyBatchLoss<F>> {
    if targets.len() != embeddings.nrows() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.nrows(),
            actual: targets.len(),
        });
    }
    let columns = targets
        .iter()
        .map(|t| {
            sampled
                .binary_search(t)
                .map_err(|_| Error::invalid(format!("true instance {t} not in sampled set")))
        })
        .collect::<Result<Vec<_>>>()?;
    let proxies = bank.proxies.select(Axis(0), sampled);
    let logits = embeddings.dot(&proxies.t()) / temperature;
    let (loss, grad_logits) = softmax_cross_entropy(logits.view(), &columns);
    let grad_logits = grad_logits / temperature;
    Ok(ProxyBatchLoss {
        loss,
        grad_embeddings: grad_logits.dot(&proxies),
        grad_proxies: grad_logits.t().dot(&embeddings),
    })
}
