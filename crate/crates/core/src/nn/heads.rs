use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{l2_normalize_backward, l2_normalize_rows, relu, BatchNorm, BatchNormCache, Float, Linear, LinearGrad};

/// `FC -> ReLU -> FC` producing category logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryHead<F> {
    pub fc1: Linear<F>,
    pub fc2: Linear<F>,
}

#[derive(Debug, Clone)]
pub struct CategoryCache<F> {
    pre_act: Array2<F>,
    hidden: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct CategoryGrads<F> {
    pub fc1: LinearGrad<F>,
    pub fc2: LinearGrad<F>,
}

impl<F: Float> CategoryHead<F> {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, classes: usize, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        Self {
            fc1: Linear::init(inputs, hidden, rng),
            fc2: Linear::init(hidden, classes, rng),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            fc1: Linear::zeros(inputs, hidden),
            fc2: Linear::zeros(hidden, classes),
        }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, CategoryCache<F>) {
        let pre_act = self.fc1.forward(x);
        let hidden = relu(&pre_act);
        let logits = self.fc2.forward(hidden.view());
        (logits, CategoryCache { pre_act, hidden })
    }

    pub fn backward(&self, x: ArrayView2<F>, cache: &CategoryCache<F>, grad_logits: ArrayView2<F>) -> CategoryGrads<F> {
        let (grad_hidden, fc2) = self.fc2.backward(cache.hidden.view(), grad_logits);
        let grad_pre = ndarray::Zip::from(&grad_hidden)
            .and(&cache.pre_act)
            .map_collect(|&g, &a| if a > F::zero() { g } else { F::zero() });
        let (_, fc1) = self.fc1.backward(x, grad_pre.view());
        CategoryGrads { fc1, fc2 }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            self.fc1.weight.as_slice_mut().unwrap(),
            self.fc1.bias.as_slice_mut().unwrap(),
            self.fc2.weight.as_slice_mut().unwrap(),
            self.fc2.bias.as_slice_mut().unwrap(),
        ]
    }
}

impl<F: Float> CategoryGrads<F> {
    pub fn slices(&self) -> Vec<&[F]> {
        vec![
            self.fc1.weight.as_slice().unwrap(),
            self.fc1.bias.as_slice().unwrap(),
            self.fc2.weight.as_slice().unwrap(),
            self.fc2.bias.as_slice().unwrap(),
        ]
    }
}

/// `FC -> BatchNorm -> ReLU -> Dropout -> FC -> L2 normalize`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleHead<F> {
    pub fc1: Linear<F>,
    pub bn: BatchNorm<F>,
    pub fc2: Linear<F>,
    pub dropout: F,
}

#[derive(Debug, Clone)]
pub struct StyleCache<F> {
    bn: BatchNormCache<F>,
    post_bn: Array2<F>,
    mask: Array2<F>,
    dropped: Array2<F>,
    pub embeddings: Array2<F>,
    norms: Array1<F>,
}

impl<F> StyleCache<F> {
    pub fn bn_cache(&self) -> &BatchNormCache<F> {
        &self.bn
    }
}

#[derive(Debug, Clone)]
pub struct StyleGrads<F> {
    pub fc1: LinearGrad<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub fc2: LinearGrad<F>,
}

impl<F: Float> StyleHead<F> {
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, embedding: usize, dropout: f64, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        Self {
            fc1: Linear::init(inputs, hidden, rng),
            bn: BatchNorm::new(hidden),
            fc2: Linear::init(hidden, embedding, rng),
            dropout: F::lit(dropout),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.fc2.outputs()
    }

    /// Inverted-dropout keep mask with entries `0` or `1 / (1 - rate)`.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<F> {
        let rate: f64 = self.dropout.to_f64().unwrap();
        let keep = F::lit(1.0 / (1.0 - rate));
        Array2::from_shape_simple_fn((rows, self.fc1.outputs()), || {
            if rate > 0.0 && rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        })
    }

    /// Uses running batch-norm statistics and no dropout.
    pub fn forward_eval(&self, x: ArrayView2<F>) -> Array2<F> {
        let h = self.bn.forward_eval(self.fc1.forward(x).view());
        let o = self.fc2.forward(relu(&h).view());
        l2_normalize_rows(&o).0
    }

    /// Uses batch statistics and the given dropout mask.
    pub fn forward_train(&self, x: ArrayView2<F>, mask: Array2<F>) -> StyleCache<F> {
        let pre_bn = self.fc1.forward(x);
        let (post_bn, bn) = self.bn.forward_train(pre_bn.view());
        let dropped = relu(&post_bn) * &mask;
        let out = self.fc2.forward(dropped.view());
        let (embeddings, norms) = l2_normalize_rows(&out);
        StyleCache {
            bn,
            post_bn,
            mask,
            dropped,
            embeddings,
            norms,
        }
    }

    pub fn backward(&self, x: ArrayView2<F>, cache: &StyleCache<F>, grad_emb: ArrayView2<F>) -> StyleGrads<F> {
        let grad_out = l2_normalize_backward(&cache.embeddings, &cache.norms, grad_emb);
        let (grad_dropped, fc2) = self.fc2.backward(cache.dropped.view(), grad_out.view());
        let grad_post_bn = ndarray::Zip::from(&grad_dropped)
            .and(&cache.mask)
            .and(&cache.post_bn)
            .map_collect(|&g, &m, &a| if a > F::zero() { g * m } else { F::zero() });
        let (grad_pre_bn, gamma, beta) = self.bn.backward(&cache.bn, grad_post_bn.view());
        let (_, fc1) = self.fc1.backward(x, grad_pre_bn.view());
        StyleGrads { fc1, gamma, beta, fc2 }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            self.fc1.weight.as_slice_mut().unwrap(),
            self.fc1.bias.as_slice_mut().unwrap(),
            self.bn.gamma.as_slice_mut().unwrap(),
            self.bn.beta.as_slice_mut().unwrap(),
            self.fc2.weight.as_slice_mut().unwrap(),
            self.fc2.bias.as_slice_mut().unwrap(),
        ]
    }
}

impl<F: Float> StyleGrads<F> {
    pub fn slices(&self) -> Vec<&[F]> {
        vec![
            self.fc1.weight.as_slice().unwrap(),
            self.fc1.bias.as_slice().unwrap(),
            self.gamma.as_slice().unwrap(),
            self.beta.as_slice().unwrap(),
            self.fc2.weight.as_slice().unwrap(),
            self.fc2.bias.as_slice().unwrap(),
        ]
    }
}
