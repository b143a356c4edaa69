//! The two-head style network and its checkpoint format.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::category::{Category, CategoryVocab};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::nn::{BatchNorm, CategoryHead, Linear, StyleCache, StyleHead};
use crate::outfit::Outfit;
use crate::tensor_io::TensorFile;

pub const EMBEDDING_DIM: usize = 128;
pub const HIDDEN_DIM: usize = 256;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub classes: usize,
    pub category_hidden: usize,
    pub style_hidden: usize,
    pub embedding_dim: usize,
}

impl ModelShape {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            classes,
            category_hidden: HIDDEN_DIM,
            style_hidden: HIDDEN_DIM,
            embedding_dim: EMBEDDING_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.classes,
            self.category_hidden,
            self.style_hidden,
            self.embedding_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub category: CategoryHead<f32>,
    pub style: StyleHead<f32>,
}

impl ModelParams {
    pub fn init(shape: ModelShape, dropout: f64, seed: u64) -> Result<Self> {
        shape.validate()?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {dropout}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            category: CategoryHead::init(shape.input_dim, shape.category_hidden, shape.classes, &mut rng),
            style: StyleHead::init(shape.input_dim, shape.style_hidden, shape.embedding_dim, dropout, &mut rng),
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            input_dim: self.category.fc1.inputs(),
            classes: self.category.fc2.outputs(),
            category_hidden: self.category.fc1.outputs(),
            style_hidden: self.style.fc1.outputs(),
            embedding_dim: self.style.fc2.outputs(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.category.fc1.inputs()
    }

    pub fn embedding_dim(&self) -> usize {
        self.style.embedding_dim()
    }

    fn check_input(&self, x: &ArrayView2<f32>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward_category(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.check_input(&x)?;
        Ok(self.category.forward(x))
    }

    /// Argmax of the category logits per row, ties to the lowest id.
    pub fn predict_category(&self, x: ArrayView2<f32>) -> Result<Vec<Category>> {
        let logits = self.forward_category(x)?;
        Ok(logits
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                Category(best as u16)
            })
            .collect())
    }

    /// Eval-mode style embeddings: running statistics, no dropout, unit rows.
    pub fn forward_style(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.check_input(&x)?;
        Ok(self.style.forward_eval(x))
    }

    /// Train-mode forward with batch statistics and a freshly sampled dropout mask.
    pub fn forward_style_train<R: Rng + ?Sized>(&self, x: ArrayView2<f32>, rng: &mut R) -> Result<StyleCache<f32>> {
        self.check_input(&x)?;
        if x.nrows() < 2 {
            return Err(Error::invalid("train-mode batch norm needs a batch of at least 2"));
        }
        let mask = self.style.sample_mask(x.nrows(), rng);
        Ok(self.style.forward_train(x, mask))
    }

    pub fn is_finite(&self) -> bool {
        let bn = &self.style.bn;
        self.category.fc1.is_finite()
            && self.category.fc2.is_finite()
            && self.style.fc1.is_finite()
            && self.style.fc2.is_finite()
            && bn
                .gamma
                .iter()
                .chain(&bn.beta)
                .chain(&bn.running_mean)
                .chain(&bn.running_var)
                .all(|v| v.is_finite())
    }

    /// Eval-mode embeddings for every item, keyed by `item_id`.
    pub fn embed_outfits(&self, outfits: &[Outfit], features: &FeatureStore) -> Result<FeatureStore> {
        const CHUNK: usize = 2048;
        let items: Vec<_> = outfits.iter().flat_map(|o| &o.items).collect();
        let mut out = FeatureStore::new(self.embedding_dim());
        for chunk in items.chunks(CHUNK) {
            let x = gather_features(chunk.iter().map(|i| i.feature_ref.as_str()), features)?;
            let emb = self.forward_style(x.view())?;
            for (item, row) in chunk.iter().zip(emb.outer_iter()) {
                out.insert(item.item_id.clone(), row.as_slice().expect("contiguous"))?;
            }
        }
        Ok(out)
    }
}

/// Stacks the vectors for `refs` into a matrix.
pub fn gather_features<'a>(refs: impl IntoIterator<Item = &'a str>, features: &FeatureStore) -> Result<Array2<f32>> {
    let dim = features.dim();
    let mut data = Vec::new();
    let mut rows = 0;
    for r in refs {
        let v = features.get(r).ok_or_else(|| Error::MissingFeature(r.to_string()))?;
        data.extend_from_slice(v);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, dim), data).expect("consistent shape"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: String,
    pub config: serde_json::Value,
    pub vocab_digest: String,
    pub vocab: Vec<String>,
    pub shape: ModelShape,
    pub dropout: f64,
    pub bn_momentum: f32,
    pub bn_eps: f32,
    pub epochs_completed: usize,
}

impl CheckpointMeta {
    pub fn new(method: &str, config: serde_json::Value, vocab: &CategoryVocab, params: &ModelParams) -> Self {
        Self {
            method: method.to_string(),
            config,
            vocab_digest: vocab.digest(),
            vocab: vocab.names().to_vec(),
            shape: params.shape(),
            dropout: params.style.dropout as f64,
            bn_momentum: params.style.bn.momentum,
            bn_eps: params.style.bn.eps,
            epochs_completed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: CheckpointMeta,
}

fn linear_from(file: &TensorFile, prefix: &str) -> Result<Linear<f32>> {
    let weight = file.array2(&format!("{prefix}.weight"))?;
    let bias = file.array1(&format!("{prefix}.bias"))?;
    if bias.len() != weight.ncols() {
        return Err(Error::DimensionMismatch {
            expected: weight.ncols(),
            actual: bias.len(),
        });
    }
    Ok(Linear { weight, bias })
}

impl Checkpoint {
    pub fn to_tensor_file(&self) -> Result<TensorFile> {
        let mut f = TensorFile::new(serde_json::to_value(&self.meta)?);
        let p = &self.params;
        for (name, lin) in [
            ("category.fc1", &p.category.fc1),
            ("category.fc2", &p.category.fc2),
            ("style.fc1", &p.style.fc1),
            ("style.fc2", &p.style.fc2),
        ] {
            f.push_array2(&format!("{name}.weight"), &lin.weight)?;
            f.push_array1(&format!("{name}.bias"), &lin.bias)?;
        }
        let bn = &p.style.bn;
        f.push_array1("style.bn.gamma", &bn.gamma)?;
        f.push_array1("style.bn.beta", &bn.beta)?;
        f.push_array1("style.bn.running_mean", &bn.running_mean)?;
        f.push_array1("style.bn.running_var", &bn.running_var)?;
        Ok(f)
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(file.metadata.clone())?;
        let bn = BatchNorm {
            gamma: file.array1("style.bn.gamma")?,
            beta: file.array1("style.bn.beta")?,
            running_mean: file.array1("style.bn.running_mean")?,
            running_var: file.array1("style.bn.running_var")?,
            momentum: meta.bn_momentum,
            eps: meta.bn_eps,
        };
        let params = ModelParams {
            category: CategoryHead {
                fc1: linear_from(file, "category.fc1")?,
                fc2: linear_from(file, "category.fc2")?,
            },
            style: StyleHead {
                fc1: linear_from(file, "style.fc1")?,
                bn,
                fc2: linear_from(file, "style.fc2")?,
                dropout: meta.dropout as f32,
            },
        };
        if params.shape() != meta.shape {
            return Err(Error::invalid(format!(
                "checkpoint tensors have shape {:?} but metadata says {:?}",
                params.shape(),
                meta.shape
            )));
        }
        Ok(Self { params, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor_file()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
