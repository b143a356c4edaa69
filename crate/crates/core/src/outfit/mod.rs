//! Outfit corpus types and the cleanup pipeline that produces them.

mod cleanup;
mod jsonl;
mod released;
mod split;
mod synth;

pub use cleanup::{
    clean_outfit, iou, nms, run_pipeline, validate_outfit, CleanupConfig, PipelineOutput,
    RejectReason,
};
pub use jsonl::{
    outfit_to_raw, read_corpus, read_raw_images, write_corpus, write_raw_images, ItemRecord,
    OutfitRecord,
};
pub use released::{read_released_dataset, read_released_from, ReleasedDataset};
pub(crate) use split::{derive_seed, seeded_unit};
pub use split::{dataset_stats, split_dataset, DatasetStats};
pub use synth::{generate_synthetic_dataset, SynthConfig, SyntheticDataset};

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};

/// Axis-aligned box in image-fraction coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

const BOX_EPS: f64 = 1e-9;

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { x, y, w, h } = *self;
        let finite = [x, y, w, h].iter().all(|v| v.is_finite());
        if !finite || x < 0.0 || y < 0.0 || w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!("invalid box {self:?}")));
        }
        if x + w > 1.0 + BOX_EPS || y + h > 1.0 + BOX_EPS {
            return Err(Error::invalid(format!("box {self:?} exceeds image bounds")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection(&self, other: &Self) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }
}

/// Per-image scores from the image style classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleScores {
    #[serde(rename = "Polyvore")]
    pub polyvore: f64,
    #[serde(rename = "ProductShot")]
    pub product_shot: f64,
    #[serde(rename = "StockPhoto")]
    pub stock_photo: f64,
    #[serde(rename = "FullOutfit")]
    pub full_outfit: f64,
    #[serde(rename = "CroppedOutfit")]
    pub cropped_outfit: f64,
}

impl StyleScores {
    /// Scores for a pre-filtered collage: Polyvore = 1, everything else 0.
    pub fn polyvore_only() -> Self {
        Self {
            polyvore: 1.0,
            product_shot: 0.0,
            stock_photo: 0.0,
            full_outfit: 0.0,
            cropped_outfit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.polyvore,
            self.product_shot,
            self.stock_photo,
            self.full_outfit,
            self.cropped_outfit,
        ];
        if all.iter().all(|s| (0.0..=1.0).contains(s)) {
            Ok(())
        } else {
            Err(Error::invalid(format!("style score outside [0,1]: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub item_id: String,
    pub bbox: BoundingBox,
    pub category: Category,
    pub detector_score: f64,
    /// Dominant hue bin; `None` when the source carries no color information.
    pub dominant_color_bin: Option<u16>,
    pub feature_ref: String,
}

impl DetectedObject {
    pub fn validate(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::invalid("empty item_id"));
        }
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.detector_score) {
            return Err(Error::invalid(format!(
                "detector score {} outside [0,1]",
                self.detector_score
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawOutfitImage {
    pub image_id: String,
    pub style_scores: StyleScores,
    pub objects: Vec<DetectedObject>,
}

impl RawOutfitImage {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("empty image_id"));
        }
        self.style_scores.validate()?;
        self.objects.iter().try_for_each(DetectedObject::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FashionItem {
    pub outfit_id: String,
    pub item_id: String,
    pub bbox: BoundingBox,
    pub category: Category,
    pub detector_score: f64,
    pub dominant_color_bin: Option<u16>,
    pub feature_ref: String,
}

impl FashionItem {
    pub fn from_detection(outfit_id: &str, obj: DetectedObject) -> Self {
        Self {
            outfit_id: outfit_id.to_string(),
            item_id: obj.item_id,
            bbox: obj.bbox,
            category: obj.category,
            detector_score: obj.detector_score,
            dominant_color_bin: obj.dominant_color_bin,
            feature_ref: obj.feature_ref,
        }
    }

    pub fn to_detection(&self) -> DetectedObject {
        DetectedObject {
            item_id: self.item_id.clone(),
            bbox: self.bbox,
            category: self.category,
            detector_score: self.detector_score,
            dominant_color_bin: self.dominant_color_bin,
            feature_ref: self.feature_ref.clone(),
        }
    }
}

/// A cleaned collage: 3 to 8 category-labeled items forming one look.
#[derive(Debug, Clone, PartialEq)]
pub struct Outfit {
    pub outfit_id: String,
    pub style_scores: StyleScores,
    pub items: Vec<FashionItem>,
}

impl Outfit {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn distinct_categories(&self) -> usize {
        let mut cats: Vec<Category> = self.items.iter().map(|i| i.category).collect();
        cats.sort_unstable();
        cats.dedup();
        cats.len()
    }
}
