//! Small dense-network building blocks with hand-written backward passes.
//!
//! Everything is generic over [`Float`] so the same code trains in `f32` and is
//! gradient-checked in `f64`.

mod heads;

pub use heads::{CategoryCache, CategoryGrads, CategoryHead, StyleCache, StyleGrads, StyleHead};

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, ScalarOperand};
use num_traits::FromPrimitive;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait Float:
    num_traits::Float
    + ndarray::LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Debug
    + Default
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Row-major `x · W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Float> Linear<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// He-style normal init scaled by `sqrt(2 / inputs)`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let scale = F::lit((2.0 / inputs.max(1) as f64).sqrt());
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), || {
                let z: F = StandardNormal.sample(rng);
                z * scale
            }),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }

    /// Returns `(dL/dx, parameter gradients)`.
    pub fn backward(&self, x: ArrayView2<F>, grad_out: ArrayView2<F>) -> (Array2<F>, LinearGrad<F>) {
        let grad_x = grad_out.dot(&self.weight.t());
        let grad = LinearGrad {
            weight: x.t().dot(&grad_out),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad_x, grad)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Batch normalization over the batch axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    /// Weight kept on the old running statistics at each update.
    pub momentum: F,
    pub eps: F,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<F> {
    pub normalized: Array2<F>,
    pub inv_std: Array1<F>,
    pub batch_mean: Array1<F>,
    pub batch_var: Array1<F>,
}

impl<F: Float> BatchNorm<F> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: F::lit(0.9),
            eps: F::lit(1e-5),
        }
    }

    /// Normalizes with the biased batch variance.
    pub fn forward_train(&self, x: ArrayView2<F>) -> (Array2<F>, BatchNormCache<F>) {
        let n = F::from_usize(x.nrows()).unwrap();
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| F::one() / (v + self.eps).sqrt());
        let normalized = centered * &inv_std;
        let out = &normalized * &self.gamma + &self.beta;
        (
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    pub fn forward_eval(&self, x: ArrayView2<F>) -> Array2<F> {
        let scale = (&self.running_var + self.eps).mapv(|v| F::one() / v.sqrt()) * &self.gamma;
        (&x - &self.running_mean) * &scale + &self.beta
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running(&mut self, cache: &BatchNormCache<F>, batch: usize) {
        let m = self.momentum;
        let keep = F::one() - m;
        let unbias = if batch > 1 {
            F::from_usize(batch).unwrap() / F::from_usize(batch - 1).unwrap()
        } else {
            F::one()
        };
        self.running_mean = &self.running_mean * m + &cache.batch_mean * keep;
        self.running_var = &self.running_var * m + &cache.batch_var * (keep * unbias);
    }

    /// Returns `(dL/dx, dL/dgamma, dL/dbeta)`.
    pub fn backward(
        &self,
        cache: &BatchNormCache<F>,
        grad_out: ArrayView2<F>,
    ) -> (Array2<F>, Array1<F>, Array1<F>) {
        let n = F::from_usize(grad_out.nrows()).unwrap();
        let grad_beta = grad_out.sum_axis(Axis(0));
        let grad_gamma = (&grad_out * &cache.normalized).sum_axis(Axis(0));
        let grad_norm = &grad_out * &self.gamma;
        let sum_g = grad_norm.sum_axis(Axis(0));
        let sum_gx = (&grad_norm * &cache.normalized).sum_axis(Axis(0));
        let grad_x = ((&grad_norm * n) - &sum_g - &(&cache.normalized * &sum_gx)) * &(&cache.inv_std / n);
        (grad_x, grad_gamma, grad_beta)
    }
}

pub fn relu<F: Float>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

const DEGENERATE_NORM: f64 = 1e-12;

/// Row-wise L2 normalization; returns the normalized rows and their original norms.
///
/// An all-zero row has no direction and maps to the uniform unit vector.
pub fn l2_normalize_rows<F: Float>(x: &Array2<F>) -> (Array2<F>, Array1<F>) {
    let tiny = F::lit(DEGENERATE_NORM);
    let uniform = F::one() / F::from_usize(x.ncols().max(1)).unwrap().sqrt();
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut normalized = x.clone();
    for (mut row, &n) in normalized.outer_iter_mut().zip(&norms) {
        if n > tiny {
            row.mapv_inplace(|v| v / n);
        } else {
            row.fill(uniform);
        }
    }
    (normalized, norms)
}

/// Backward of [`l2_normalize_rows`] given the normalized rows and norms. Degenerate rows
/// receive zero gradient.
pub fn l2_normalize_backward<F: Float>(
    normalized: &Array2<F>,
    norms: &Array1<F>,
    grad_out: ArrayView2<F>,
) -> Array2<F> {
    let tiny = F::lit(DEGENERATE_NORM);
    let mut grad = Array2::zeros(grad_out.raw_dim());
    for (((mut g, y), go), &n) in grad.outer_iter_mut().zip(normalized.outer_iter()).zip(grad_out.outer_iter()).zip(norms) {
        if n > tiny {
            let dot = go.dot(&y);
            g.assign(&((&go - &(&y * dot)) / n));
        }
    }
    grad
}

/// Mean softmax cross-entropy over rows; returns `(loss, dL/dlogits)`.
pub fn softmax_cross_entropy<F: Float>(logits: ArrayView2<F>, labels: &[usize]) -> (F, Array2<F>) {
    let n = F::from_usize(logits.nrows().max(1)).unwrap();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = F::zero();
    for ((row, mut g), &label) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        let exp = row.mapv(|v| (v - max).exp());
        let z = exp.sum();
        loss = loss + (z.ln() + max - row[label]);
        g.assign(&(exp / z));
        g[label] = g[label] - F::one();
    }
    grad.mapv_inplace(|v| v / n);
    (loss / n, grad)
}
