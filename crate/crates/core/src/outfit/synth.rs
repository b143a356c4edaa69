//! Desk-scale synthetic outfits with planted style structure.
//!
//! Every outfit draws a latent style vector. Each item's feature vector is laid out as
//! `[one-hot category | latent style + gaussian noise | gaussian distractors]`, so items of
//! one outfit agree on the style block while category and distractor blocks carry no
//! compatibility signal.

use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{BoundingBox, FashionItem, Outfit, StyleScores};
use crate::category::{Category, CategoryVocab};
use crate::error::{Error, Result};
use crate::features::FeatureStore;

/// Relative outfit-size frequencies for 3..=8 items, taken from the full corpus.
const SIZE_WEIGHTS: [u32; 6] = [223_240, 421_815, 251_835, 72_916, 10_767, 938];
const GRID: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_outfits: usize,
    pub feature_dim: usize,
    pub style_dim: usize,
    pub noise: f32,
    pub seed: u64,
    pub color_bins: u16,
    pub id_prefix: String,
    /// When set, every outfit has exactly this many items.
    pub fixed_size: Option<usize>,
    /// When set, categories are split into this many interleaved groups (`c % groups`) and
    /// each outfit draws all its items from one group, giving structured co-occurrence.
    #[serde(default)]
    pub category_groups: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_outfits: 1000,
            feature_dim: 64,
            style_dim: 16,
            noise: 0.1,
            seed: 0,
            color_bins: 12,
            id_prefix: "synth-".into(),
            fixed_size: None,
            category_groups: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub outfits: Vec<Outfit>,
    pub features: FeatureStore,
    pub style_range: Range<usize>,
}

pub fn generate_synthetic_dataset(cfg: &SynthConfig, vocab: &CategoryVocab) -> Result<SyntheticDataset> {
    let n_cats = vocab.len();
    if cfg.style_dim == 0 || cfg.style_dim >= cfg.feature_dim {
        return Err(Error::invalid("need 0 < style_dim < feature_dim"));
    }
    if n_cats + cfg.style_dim > cfg.feature_dim {
        return Err(Error::invalid(format!(
            "feature_dim {} cannot hold {} category dims plus {} style dims",
            cfg.feature_dim, n_cats, cfg.style_dim
        )));
    }
    if n_cats < 3 {
        return Err(Error::invalid("synthetic outfits need at least 3 categories"));
    }
    if cfg.color_bins < 2 {
        return Err(Error::invalid("need at least 2 color bins"));
    }
    if let Some(g) = cfg.category_groups {
        if g == 0 || n_cats / g < 3 {
            return Err(Error::invalid(format!(
                "{g} category groups leave fewer than 3 categories per group"
            )));
        }
    }
    if let Some(s) = cfg.fixed_size {
        if !(3..=8).contains(&s) {
            return Err(Error::invalid("fixed outfit size must be within 3..=8"));
        }
    }

    // Structure and features use separate streams so that changing `noise` leaves the
    // outfits themselves untouched.
    let mut structure = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut feats = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_F00D_CAFE_D00D);
    let sizes = WeightedIndex::new(SIZE_WEIGHTS).expect("static weights");
    let style_range = n_cats..n_cats + cfg.style_dim;
    let width = ((cfg.n_outfits.max(1) - 1) as f64).log10() as usize + 1;
    let width = width.max(7);

    let mut outfits = Vec::with_capacity(cfg.n_outfits);
    let mut store = FeatureStore::new(cfg.feature_dim);
    let mut latent = vec![0f32; cfg.style_dim];
    let mut feature = vec![0f32; cfg.feature_dim];

    for i in 0..cfg.n_outfits {
        let outfit_id = format!("{}{:0width$}", cfg.id_prefix, i);
        let size = cfg.fixed_size.unwrap_or_else(|| 3 + sizes.sample(&mut structure));

        let group: Vec<usize> = match cfg.category_groups {
            None => (0..n_cats).collect(),
            Some(g) => (structure.random_range(0..g)..n_cats).step_by(g).collect(),
        };
        let mut categories: Vec<Category> = rand::seq::index::sample(&mut structure, group.len(), 3)
            .into_iter()
            .map(|k| Category(group[k] as u16))
            .collect();
        while categories.len() < size {
            categories.push(Category(group[structure.random_range(0..group.len())] as u16));
        }
        let cells = rand::seq::index::sample(&mut structure, GRID * GRID, size).into_vec();
        let mut bins: Vec<u16> = (0..size)
            .map(|_| structure.random_range(0..cfg.color_bins))
            .collect();
        if bins.iter().all(|b| *b == bins[0]) {
            bins[size - 1] = (bins[0] + 1) % cfg.color_bins;
        }
        let style_scores = StyleScores {
            polyvore: structure.random_range(0.9..=1.0),
            product_shot: structure.random_range(0.0..0.2),
            stock_photo: structure.random_range(0.0..0.1),
            full_outfit: structure.random_range(0.0..0.1),
            cropped_outfit: structure.random_range(0.0..0.1),
        };

        for v in latent.iter_mut() {
            *v = feats.sample(StandardNormal);
        }
        let mut items = Vec::with_capacity(size);
        for (j, (&category, &cell)) in categories.iter().zip(&cells).enumerate() {
            let cell_size = 1.0 / GRID as f64;
            let w = structure.random_range(0.24..0.32);
            let h = structure.random_range(0.24..0.32);
            let x = (cell % GRID) as f64 * cell_size + structure.random_range(0.0..cell_size - w);
            let y = (cell / GRID) as f64 * cell_size + structure.random_range(0.0..cell_size - h);
            let item_id = format!("{outfit_id}-{j}");

            feature.fill(0.0);
            feature[category.index()] = 1.0;
            for (k, dst) in feature[style_range.clone()].iter_mut().enumerate() {
                let z: f32 = feats.sample(StandardNormal);
                *dst = latent[k] + cfg.noise * z;
            }
            for dst in feature[style_range.end..].iter_mut() {
                *dst = feats.sample(StandardNormal);
            }
            store.insert(item_id.clone(), &feature)?;

            items.push(FashionItem {
                outfit_id: outfit_id.clone(),
                feature_ref: item_id.clone(),
                item_id,
                bbox: BoundingBox::new(x, y, w, h)?,
                category,
                detector_score: structure.random_range(0.5..=1.0),
                dominant_color_bin: Some(bins[j]),
            });
        }
        outfits.push(Outfit {
            outfit_id,
            style_scores,
            items,
        });
    }
    Ok(SyntheticDataset {
        outfits,
        features: store,
        style_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outfit::{validate_outfit, CleanupConfig};

    #[test]
    fn zero_outfits_is_empty() {
        let cfg = SynthConfig {
            n_outfits: 0,
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&cfg, &CategoryVocab::default()).unwrap();
        assert!(ds.outfits.is_empty() && ds.features.is_empty());
    }

    #[test]
    fn noiseless_items_share_style_block() {
        let cfg = SynthConfig {
            n_outfits: 20,
            noise: 0.0,
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&cfg, &CategoryVocab::default()).unwrap();
        for o in &ds.outfits {
            let first = &ds.features.get(&o.items[0].feature_ref).unwrap()[ds.style_range.clone()];
            for it in &o.items[1..] {
                let s = &ds.features.get(&it.feature_ref).unwrap()[ds.style_range.clone()];
                assert_eq!(first, s);
            }
        }
    }

    #[test]
    fn outfits_satisfy_cleanup_invariants_and_are_deterministic() {
        let vocab = CategoryVocab::default();
        let cfg = SynthConfig {
            n_outfits: 300,
            seed: 3,
            ..Default::default()
        };
        let a = generate_synthetic_dataset(&cfg, &vocab).unwrap();
        let b = generate_synthetic_dataset(&cfg, &vocab).unwrap();
        assert_eq!(a.outfits, b.outfits);
        assert_eq!(a.features, b.features);
        let clean = CleanupConfig::default();
        for o in &a.outfits {
            assert_eq!(validate_outfit(o, &clean), Ok(()), "{}", o.outfit_id);
            for it in &o.items {
                assert!(a.features.contains(&it.feature_ref));
            }
        }
    }

    #[test]
    fn noise_changes_features_not_structure() {
        let vocab = CategoryVocab::default();
        let base = SynthConfig {
            n_outfits: 50,
            ..Default::default()
        };
        let noisy = SynthConfig {
            noise: 0.5,
            ..base.clone()
        };
        let a = generate_synthetic_dataset(&base, &vocab).unwrap();
        let b = generate_synthetic_dataset(&noisy, &vocab).unwrap();
        assert_eq!(a.outfits, b.outfits);
        assert_ne!(a.features, b.features);
    }

    #[test]
    fn rejects_bad_dims() {
        let vocab = CategoryVocab::default();
        let cfg = SynthConfig {
            feature_dim: 20,
            style_dim: 16,
            ..Default::default()
        };
        assert!(generate_synthetic_dataset(&cfg, &vocab).is_err());
    }

    #[test]
    fn grouped_categories_stay_within_one_group() {
        let vocab = CategoryVocab::default();
        let cfg = SynthConfig {
            n_outfits: 200,
            category_groups: Some(3),
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&cfg, &vocab).unwrap();
        for o in &ds.outfits {
            let g = o.items[0].category.index() % 3;
            assert!(o.items.iter().all(|i| i.category.index() % 3 == g));
            assert!(o.distinct_categories() >= 3);
        }
        let too_many = SynthConfig {
            category_groups: Some(5),
            ..cfg
        };
        assert!(generate_synthetic_dataset(&too_many, &vocab).is_err());
    }

    #[test]
    fn style_neighbors_recover_outfit_mates() {
        let vocab = CategoryVocab::default();
        let cfg = SynthConfig {
            n_outfits: 5000,
            noise: 0.1,
            seed: 11,
            ..Default::default()
        };
        let ds = generate_synthetic_dataset(&cfg, &vocab).unwrap();
        let items: Vec<(&str, &[f32])> = ds
            .outfits
            .iter()
            .flat_map(|o| &o.items)
            .map(|i| (i.outfit_id.as_str(), &ds.features.get(&i.feature_ref).unwrap()[ds.style_range.clone()]))
            .collect();
        // brute-force nearest neighbor over a fixed sample of queries
        let mut hits = 0;
        let queries: Vec<usize> = (0..items.len()).step_by(items.len() / 500).collect();
        for &q in &queries {
            let mut best = (f32::INFINITY, 0);
            for (j, (_, v)) in items.iter().enumerate() {
                if j == q {
                    continue;
                }
                let d: f32 = v.iter().zip(items[q].1).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            hits += usize::from(items[best.1].0 == items[q].0);
        }
        let precision = hits as f64 / queries.len() as f64;
        assert!(precision >= 0.9, "{precision}");
    }
}
