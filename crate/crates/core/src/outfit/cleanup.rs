//! Heuristic cleanup that turns raw detections into outfits.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundingBox, DetectedObject, FashionItem, Outfit, RawOutfitImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanupConfig {
    pub polyvore_threshold: f64,
    pub nms_iou: f64,
    pub min_area_frac: f64,
    pub min_items: usize,
    pub max_items: usize,
    pub min_distinct_categories: usize,
    pub monochrome_filter: bool,
}

impl Default for CleanupConfig {
    fn default() -> Self {
        Self {
            polyvore_threshold: 0.9,
            nms_iou: 0.1,
            min_area_frac: 0.05,
            min_items: 3,
            max_items: 8,
            min_distinct_categories: 3,
            monochrome_filter: true,
        }
    }
}

impl CleanupConfig {
    pub fn validate(&self) -> Result<()> {
        let ratio = |v: f64| v > 0.0 && v < 1.0;
        if !ratio(self.polyvore_threshold) || !ratio(self.nms_iou) || !ratio(self.min_area_frac) {
            return Err(Error::invalid("cleanup ratios must lie in (0, 1)"));
        }
        if self.min_items == 0 || self.min_items > self.max_items {
            return Err(Error::invalid("need 0 < min_items <= max_items"));
        }
        Ok(())
    }
}

/// First cleanup rule an image failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    LowStyleScore,
    TooFewItems,
    TooManyItems,
    LowCategoryDiversity,
    Monochrome,
    /// Only reported by [`validate_outfit`]: two kept boxes overlap above the NMS threshold.
    OverlappingBoxes,
    /// Only reported by [`validate_outfit`]: a kept box is below the minimum area.
    SmallBox,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

fn by_score_then_id(a: &DetectedObject, b: &DetectedObject) -> Ordering {
    b.detector_score
        .total_cmp(&a.detector_score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Greedy cross-category non-maximum suppression.
///
/// Objects are visited by descending detector score (ties by ascending `item_id`); an
/// object is kept iff its IOU with every already kept object is at most `iou_threshold`.
pub fn nms(objects: &[DetectedObject], iou_threshold: f64) -> Vec<DetectedObject> {
    let mut order: Vec<&DetectedObject> = objects.iter().collect();
    order.sort_by(|a, b| by_score_then_id(a, b));
    let mut kept: Vec<DetectedObject> = Vec::new();
    for obj in order {
        if kept.iter().all(|k| iou(&k.bbox, &obj.bbox) <= iou_threshold) {
            kept.push(obj.clone());
        }
    }
    kept
}

fn is_monochrome<'a>(bins: impl Iterator<Item = Option<u16>> + 'a) -> bool {
    let mut first = None;
    for bin in bins {
        let Some(bin) = bin else { return false };
        match first {
            None => first = Some(bin),
            Some(f) if f != bin => return false,
            _ => {}
        }
    }
    first.is_some()
}

fn check_counts(
    n_items: usize,
    distinct: usize,
    monochrome: bool,
    cfg: &CleanupConfig,
) -> std::result::Result<(), RejectReason> {
    if n_items < cfg.min_items {
        return Err(RejectReason::TooFewItems);
    }
    if n_items > cfg.max_items {
        return Err(RejectReason::TooManyItems);
    }
    if distinct < cfg.min_distinct_categories {
        return Err(RejectReason::LowCategoryDiversity);
    }
    if cfg.monochrome_filter && monochrome {
        return Err(RejectReason::Monochrome);
    }
    Ok(())
}

/// Applies the cleanup rules in order and returns the outfit or the first failed rule.
pub fn clean_outfit(
    img: &RawOutfitImage,
    cfg: &CleanupConfig,
) -> std::result::Result<Outfit, RejectReason> {
    if img.style_scores.polyvore < cfg.polyvore_threshold {
        return Err(RejectReason::LowStyleScore);
    }
    let kept: Vec<DetectedObject> = nms(&img.objects, cfg.nms_iou)
        .into_iter()
        .filter(|o| o.bbox.area() >= cfg.min_area_frac)
        .collect();
    let outfit = Outfit {
        outfit_id: img.image_id.clone(),
        style_scores: img.style_scores,
        items: kept
            .into_iter()
            .map(|o| FashionItem::from_detection(&img.image_id, o))
            .collect(),
    };
    check_counts(
        outfit.len(),
        outfit.distinct_categories(),
        is_monochrome(outfit.items.iter().map(|i| i.dominant_color_bin)),
        cfg,
    )?;
    Ok(outfit)
}

/// Checks every cleanup invariant directly on an emitted outfit.
pub fn validate_outfit(outfit: &Outfit, cfg: &CleanupConfig) -> std::result::Result<(), RejectReason> {
    if outfit.style_scores.polyvore < cfg.polyvore_threshold {
        return Err(RejectReason::LowStyleScore);
    }
    for (i, a) in outfit.items.iter().enumerate() {
        if a.bbox.area() < cfg.min_area_frac {
            return Err(RejectReason::SmallBox);
        }
        for b in &outfit.items[i + 1..] {
            if iou(&a.bbox, &b.bbox) > cfg.nms_iou {
                return Err(RejectReason::OverlappingBoxes);
            }
        }
    }
    check_counts(
        outfit.len(),
        outfit.distinct_categories(),
        is_monochrome(outfit.items.iter().map(|i| i.dominant_color_bin)),
        cfg,
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub outfits: Vec<Outfit>,
    pub rejects: BTreeMap<RejectReason, usize>,
    pub malformed: usize,
}

/// Cleans a stream of images in parallel; outfits come back sorted by `image_id`.
///
/// Records that fail to parse or violate the raw-record invariants are counted in
/// `malformed` and excluded from the reject histogram.
pub fn run_pipeline<I>(images: I, cfg: &CleanupConfig) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Result<RawOutfitImage>>,
{
    cfg.validate()?;
    let mut malformed = 0;
    let mut valid = Vec::new();
    for img in images {
        match img.and_then(|img| img.validate().map(|_| img)) {
            Ok(img) => valid.push(img),
            Err(_) => malformed += 1,
        }
    }
    let results: Vec<_> = valid.par_iter().map(|img| clean_outfit(img, cfg)).collect();
    let mut out = PipelineOutput {
        malformed,
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(o) => out.outfits.push(o),
            Err(reason) => *out.rejects.entry(reason).or_default() += 1,
        }
    }
    out.outfits.sort_by(|a, b| a.outfit_id.cmp(&b.outfit_id));
    Ok(out)
}
