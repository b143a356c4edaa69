//! Adapter for the publicly released tabular outfit files.
//!
//! One row per detected item with an image identifier, a normalized box and a category
//! label. Tab- and comma-separated files are both accepted; the delimiter is sniffed
//! from the header line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{BoundingBox, DetectedObject, RawOutfitImage, StyleScores};
use crate::category::CategoryVocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReleasedDataset {
    /// Images sorted by identifier.
    pub images: Vec<RawOutfitImage>,
    /// Unrecognized category names and how many rows carried them.
    pub unknown_categories: BTreeMap<String, usize>,
}

const ID_COLS: &[&str] = &["image_signature", "image_id", "signature", "image"];
const X_COLS: &[&str] = &["bounding_x", "x", "bbox_x"];
const Y_COLS: &[&str] = &["bounding_y", "y", "bbox_y"];
const W_COLS: &[&str] = &["bounding_width", "w", "width", "bbox_w"];
const H_COLS: &[&str] = &["bounding_height", "h", "height", "bbox_h"];
const LABEL_COLS: &[&str] = &["label", "category", "category_name"];

// Rounding in the published files can push a box edge marginally past 1.
const EDGE_SLACK: f64 = 1e-3;

fn column(header: &csv::StringRecord, names: &[&str]) -> Result<usize> {
    header
        .iter()
        .position(|h| names.contains(&h.trim().to_lowercase().as_str()))
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column, expected one of {names:?}"),
        })
}

pub fn read_released_dataset(path: impl AsRef<Path>, vocab: &CategoryVocab) -> Result<ReleasedDataset> {
    let file = std::fs::File::open(path)?;
    read_released_from(file, vocab)
}

pub fn read_released_from<R: Read>(reader: R, vocab: &CategoryVocab) -> Result<ReleasedDataset> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    if reader.read_line(&mut first)? == 0 || first.trim().is_empty() {
        return Ok(ReleasedDataset::default());
    }
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(first.as_bytes().chain(reader));
    let header = csv.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let cols = [
        column(&header, ID_COLS)?,
        column(&header, X_COLS)?,
        column(&header, Y_COLS)?,
        column(&header, W_COLS)?,
        column(&header, H_COLS)?,
        column(&header, LABEL_COLS)?,
    ];

    let mut grouped: BTreeMap<String, Vec<DetectedObject>> = BTreeMap::new();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    for (row, record) in csv.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize| {
            record.get(cols[i]).ok_or_else(|| Error::Parse {
                line,
                message: "missing field".into(),
            })
        };
        let num = |i: usize| -> Result<f64> {
            let raw = field(i)?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {raw:?}"),
            })
        };
        let image_id = field(0)?.to_string();
        if image_id.is_empty() {
            return Err(Error::Parse { line, message: "empty image id".into() });
        }
        let label = field(5)?;
        let Some(category) = vocab.lookup(label) else {
            *unknown.entry(label.to_string()).or_default() += 1;
            continue;
        };
        let (x, y) = (num(1)?, num(2)?);
        let mut w = num(3)?;
        let mut h = num(4)?;
        if x + w > 1.0 && x + w <= 1.0 + EDGE_SLACK {
            w = 1.0 - x;
        }
        if y + h > 1.0 && y + h <= 1.0 + EDGE_SLACK {
            h = 1.0 - y;
        }
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let objects = grouped.entry(image_id.clone()).or_default();
        let item_id = format!("{image_id}_{}", objects.len());
        objects.push(DetectedObject {
            feature_ref: item_id.clone(),
            item_id,
            bbox,
            category,
            detector_score: 1.0,
            dominant_color_bin: None,
        });
    }

    let images = grouped
        .into_iter()
        .map(|(image_id, objects)| RawOutfitImage {
            image_id,
            style_scores: StyleScores::polyvore_only(),
            objects,
        })
        .collect();
    Ok(ReleasedDataset {
        images,
        unknown_categories: unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty() {
        let vocab = CategoryVocab::default();
        assert_eq!(read_released_from(&b""[..], &vocab).unwrap(), ReleasedDataset::default());
    }

    #[test]
    fn groups_rows_by_image() {
        let vocab = CategoryVocab::default();
        let tsv = "image_signature\tbounding_x\tbounding_y\tbounding_width\tbounding_height\tlabel\n\
                   abc\t0.1\t0.1\t0.3\t0.3\tshoes\n\
                   abc\t0.5\t0.5\t0.3\t0.3\tShirts & Tops\n\
                   def\t0.0\t0.0\t0.4\t0.4\tBelts\n";
        let ds = read_released_from(tsv.as_bytes(), &vocab).unwrap();
        assert_eq!(ds.images.len(), 1);
        let img = &ds.images[0];
        assert_eq!(img.image_id, "abc");
        assert_eq!(img.objects.len(), 2);
        assert_eq!(img.objects[1].item_id, "abc_1");
        assert_eq!(img.style_scores.polyvore, 1.0);
        assert_eq!(ds.unknown_categories.get("Belts"), Some(&1));
    }

    #[test]
    fn bad_number_reports_line() {
        let vocab = CategoryVocab::default();
        let csv = "image_id,x,y,w,h,category\nabc,0.1,0.1,0.3,0.3,Shoes\nabc,zz,0.1,0.3,0.3,Shoes\n";
        match read_released_from(csv.as_bytes(), &vocab) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
