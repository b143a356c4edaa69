//! Inverted-file search: seeded k-means coarse partitions with probed posting lists.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KMEANS_ITERATIONS: usize = 25;
/// Below this many items a single partition (exact search) is used.
pub const EXACT_SEARCH_BELOW: usize = 10_000;

/// Euclidean distance accumulated in coordinate order.
pub fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub item_id: String,
    pub distance: f32,
}

fn by_distance_then_id(a: &(f32, &str), b: &(f32, &str)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

fn top_k<'a>(mut cands: Vec<(f32, &'a str)>, k: usize) -> Vec<Hit> {
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, by_distance_then_id);
        cands.truncate(k);
    }
    cands.sort_by(by_distance_then_id);
    cands
        .into_iter()
        .map(|(d, id)| Hit {
            item_id: id.to_string(),
            distance: d,
        })
        .collect()
}

/// Full scan over `(ids, row-major vectors)`; ascending distance, ties by id.
pub fn exact_search(ids: &[String], vectors: &[f32], query: &[f32], k: usize) -> Vec<Hit> {
    let dim = query.len();
    if k == 0 || dim == 0 {
        return Vec::new();
    }
    let cands = ids
        .iter()
        .zip(vectors.chunks_exact(dim))
        .map(|(id, v)| (euclidean(query, v), id.as_str()))
        .collect();
    top_k(cands, k)
}

/// Squared distances between every row of `x` and every row of `c`.
fn squared_distances(x: ArrayView2<f32>, c: ArrayView2<f32>) -> Array2<f32> {
    let xn = x.map_axis(Axis(1), |r| r.dot(&r));
    let cn = c.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = x.dot(&c.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (xn[i] - 2.0 * *v + cn[j]).max(0.0);
    }
    d
}

fn argmin_rows(d: &Array2<f32>) -> Vec<usize> {
    d.outer_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v < r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnIndex {
    dim: usize,
    centroids: Array2<f32>,
    /// Partition `p` owns rows `offsets[p]..offsets[p + 1]` of `ids`/`vectors`.
    offsets: Vec<usize>,
    ids: Vec<String>,
    vectors: Vec<f32>,
    pub probes: usize,
}

pub fn default_partitions(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

pub fn default_probes(partitions: usize) -> usize {
    (partitions / 8).max(1)
}

/// Seeded k-means over `vectors` (row-major, `ids.len()` rows). `partitions = None` picks
/// `round(sqrt(n))`, clamped to `n`.
pub fn build_ann_index(
    ids: &[String],
    vectors: &[f32],
    dim: usize,
    partitions: Option<usize>,
    seed: u64,
) -> Result<AnnIndex> {
    let n = ids.len();
    if dim == 0 || vectors.len() != n * dim {
        return Err(Error::DimensionMismatch {
            expected: n * dim,
            actual: vectors.len(),
        });
    }
    if n == 0 {
        return Ok(AnnIndex {
            dim,
            centroids: Array2::zeros((0, dim)),
            offsets: vec![0],
            ids: Vec::new(),
            vectors: Vec::new(),
            probes: 1,
        });
    }
    let c = partitions.unwrap_or_else(|| default_partitions(n)).clamp(1, n);
    let x = ArrayView2::from_shape((n, dim), vectors).expect("checked shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = rand::seq::index::sample(&mut rng, n, c).into_vec();
    let mut centroids = x.select(Axis(0), &init);
    let mut assign = vec![0usize; n];
    if c > 1 {
        for _ in 0..KMEANS_ITERATIONS {
            assign = argmin_rows(&squared_distances(x, centroids.view()));
            let mut sums = Array2::<f64>::zeros((c, dim));
            let mut counts = vec![0usize; c];
            for (row, &a) in x.outer_iter().zip(&assign) {
                counts[a] += 1;
                for (s, &v) in sums.row_mut(a).iter_mut().zip(row) {
                    *s += v as f64;
                }
            }
            let mut moved = false;
            for p in 0..c {
                // empty partitions keep their previous centroid
                if counts[p] == 0 {
                    continue;
                }
                for (dst, &s) in centroids.row_mut(p).iter_mut().zip(sums.row(p)) {
                    let v = (s / counts[p] as f64) as f32;
                    moved |= *dst != v;
                    *dst = v;
                }
            }
            if !moved {
                break;
            }
        }
        assign = argmin_rows(&squared_distances(x, centroids.view()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (assign[i], i));
    let mut offsets = vec![0usize; c + 1];
    for &a in &assign {
        offsets[a + 1] += 1;
    }
    for p in 0..c {
        offsets[p + 1] += offsets[p];
    }
    let mut sorted_vectors = Vec::with_capacity(n * dim);
    for &i in &order {
        sorted_vectors.extend_from_slice(&vectors[i * dim..(i + 1) * dim]);
    }
    Ok(AnnIndex {
        dim,
        centroids,
        offsets,
        ids: order.iter().map(|&i| ids[i].clone()).collect(),
        vectors: sorted_vectors,
        probes: default_probes(c),
    })
}

impl AnnIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partitions(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn centroids(&self) -> &Array2<f32> {
        &self.centroids
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Item ids and vectors of partition `p`.
    pub fn partition(&self, p: usize) -> (&[String], &[f32]) {
        let (s, e) = (self.offsets[p], self.offsets[p + 1]);
        (&self.ids[s..e], &self.vectors[s * self.dim..e * self.dim])
    }

    pub fn from_parts(
        centroids: Array2<f32>,
        offsets: Vec<usize>,
        ids: Vec<String>,
        vectors: Vec<f32>,
        probes: usize,
    ) -> Result<Self> {
        let dim = centroids.ncols();
        let ok = offsets.len() == centroids.nrows() + 1
            && offsets.first() == Some(&0)
            && offsets.last() == Some(&ids.len())
            && offsets.windows(2).all(|w| w[0] <= w[1])
            && vectors.len() == ids.len() * dim;
        if !ok {
            return Err(Error::invalid("inconsistent ANN index parts"));
        }
        Ok(Self {
            dim,
            centroids,
            offsets,
            ids,
            vectors,
            probes: probes.max(1),
        })
    }

    /// Scans the `probes` partitions with the nearest centroids.
    pub fn search(&self, query: &[f32], k: usize, probes: usize) -> Vec<Hit> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut order: Vec<(f32, usize)> = self
            .centroids
            .outer_iter()
            .enumerate()
            .map(|(p, c)| (euclidean(query, c.as_slice().expect("contiguous")), p))
            .collect();
        let probes = probes.clamp(1, order.len());
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut cands = Vec::new();
        for &(_, p) in &order[..probes] {
            let (ids, vecs) = self.partition(p);
            cands.extend(
                ids.iter()
                    .zip(vecs.chunks_exact(self.dim))
                    .map(|(id, v)| (euclidean(query, v), id.as_str())),
            );
        }
        top_k(cands, k)
    }
}

/// Searches with the index's own probe count.
pub fn ann_search(index: &AnnIndex, query: &[f32], k: usize, probes: Option<usize>) -> Vec<Hit> {
    index.search(query, k, probes.unwrap_or(index.probes))
}
