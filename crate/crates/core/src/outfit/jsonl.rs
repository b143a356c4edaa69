//! Line-delimited JSON corpus format shared by raw images and cleaned outfits.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, DetectedObject, FashionItem, Outfit, RawOutfitImage, StyleScores};
use crate::category::CategoryVocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub bbox: [f64; 4],
    pub category: String,
    pub detector_score: f64,
    pub dominant_color_bin: Option<u16>,
    pub feature_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutfitRecord {
    pub image_id: String,
    pub style_scores: StyleScores,
    pub items: Vec<ItemRecord>,
}

impl OutfitRecord {
    fn from_objects<'a>(
        image_id: &str,
        style_scores: StyleScores,
        objects: impl Iterator<Item = DetectedObject> + 'a,
        vocab: &CategoryVocab,
    ) -> Self {
        let items = objects
            .map(|o| ItemRecord {
                bbox: [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
                category: vocab.name(o.category).to_string(),
                detector_score: o.detector_score,
                dominant_color_bin: o.dominant_color_bin,
                feature_ref: o.feature_ref,
                item_id: o.item_id,
            })
            .collect();
        Self {
            image_id: image_id.to_string(),
            style_scores,
            items,
        }
    }

    pub fn into_raw(self, vocab: &CategoryVocab) -> Result<RawOutfitImage> {
        let objects = self
            .items
            .into_iter()
            .map(|it| {
                let category = vocab
                    .lookup(&it.category)
                    .ok_or_else(|| Error::invalid(format!("unknown category {:?}", it.category)))?;
                let [x, y, w, h] = it.bbox;
                Ok(DetectedObject {
                    item_id: it.item_id,
                    bbox: BoundingBox::new(x, y, w, h)?,
                    category,
                    detector_score: it.detector_score,
                    dominant_color_bin: it.dominant_color_bin,
                    feature_ref: it.feature_ref,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let img = RawOutfitImage {
            image_id: self.image_id,
            style_scores: self.style_scores,
            objects,
        };
        img.validate()?;
        Ok(img)
    }
}

pub fn outfit_to_raw(outfit: &Outfit) -> RawOutfitImage {
    RawOutfitImage {
        image_id: outfit.outfit_id.clone(),
        style_scores: outfit.style_scores,
        objects: outfit.items.iter().map(FashionItem::to_detection).collect(),
    }
}

/// Lazily parses raw images; each bad line yields an error carrying its line number.
pub fn read_raw_images<'a, R: BufRead + 'a>(
    reader: R,
    vocab: &'a CategoryVocab,
) -> impl Iterator<Item = Result<RawOutfitImage>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::from(e))),
            };
            if line.trim().is_empty() {
                return None;
            }
            let parsed = serde_json::from_str::<OutfitRecord>(&line)
                .map_err(Error::from)
                .and_then(|rec| rec.into_raw(vocab));
            Some(parsed.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            }))
        })
}

pub fn write_raw_images<'a, W: Write>(
    mut w: W,
    images: impl IntoIterator<Item = &'a RawOutfitImage>,
    vocab: &CategoryVocab,
) -> Result<()> {
    for img in images {
        let rec = OutfitRecord::from_objects(
            &img.image_id,
            img.style_scores,
            img.objects.iter().cloned(),
            vocab,
        );
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a cleaned corpus; unlike raw input, any bad line is an error.
pub fn read_corpus<R: BufRead>(reader: R, vocab: &CategoryVocab) -> Result<Vec<Outfit>> {
    read_raw_images(reader, vocab)
        .map(|img| {
            let img = img?;
            Ok(Outfit {
                items: img
                    .objects
                    .into_iter()
                    .map(|o| FashionItem::from_detection(&img.image_id, o))
                    .collect(),
                outfit_id: img.image_id,
                style_scores: img.style_scores,
            })
        })
        .collect()
}

pub fn write_corpus<'a, W: Write>(
    mut w: W,
    outfits: impl IntoIterator<Item = &'a Outfit>,
    vocab: &CategoryVocab,
) -> Result<()> {
    for o in outfits {
        let rec = OutfitRecord::from_objects(
            &o.outfit_id,
            o.style_scores,
            o.items.iter().map(FashionItem::to_detection),
            vocab,
        );
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
