//! COCO-style detection documents.
//!
//! Output is byte-stable: object keys are sorted, images are ordered by
//! file name, and all coordinates are integers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::IngestManifest;
use super::{to_sorted_json, write_sorted_json};
use crate::annotator::{LabelMapping, WeakAnnotation, EMPTY_CLASS};
use crate::error::{Error, Result};
use crate::image::BoundingBox;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [u32; 4],
    pub area: u64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDocument {
    /// Appends an image and returns its COCO id.
    pub fn push_image(&mut self, file_name: impl Into<String>, width: u32, height: u32) -> u64 {
        let id = self.images.len() as u64 + 1;
        self.images.push(CocoImage {
            id,
            file_name: file_name.into(),
            width,
            height,
        });
        id
    }

    pub fn push_box(&mut self, image_id: u64, category_id: u32, b: &BoundingBox) {
        self.annotations.push(CocoAnnotation {
            id: self.annotations.len() as u64 + 1,
            image_id,
            category_id,
            bbox: [b.x, b.y, b.w, b.h],
            area: b.area(),
            iscrowd: 0,
        });
    }

    pub fn to_json(&self) -> String {
        to_sorted_json(self).expect("COCO document is always serializable")
    }

    /// Boxes of one image, by COCO image id.
    pub fn boxes_of(&self, image_id: u64) -> impl Iterator<Item = &CocoAnnotation> {
        self.annotations
            .iter()
            .filter(move |a| a.image_id == image_id)
    }
}

/// Builds the document for `annos`; images without a box or with the empty
/// class appear in `images` only. Class 0 is never a category.
pub fn build_coco(
    annos: &[WeakAnnotation],
    images: &IngestManifest,
    labels: &LabelMapping,
) -> Result<CocoDocument> {
    let mut rows = Vec::with_capacity(annos.len());
    for a in annos {
        let rec = images
            .image(&a.image_id)
            .ok_or_else(|| Error::UnknownImage(a.image_id.clone()))?;
        rows.push((images.relative_name(rec), rec, a));
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0));

    let mut doc = CocoDocument {
        categories: labels
            .taxa()
            .into_iter()
            .map(|id| CocoCategory {
                id,
                name: labels.class_name(id),
                supercategory: "animal".into(),
            })
            .collect(),
        ..Default::default()
    };
    for (name, rec, a) in rows {
        let id = doc.push_image(name, rec.width, rec.height);
        if let (Some(b), true) = (&a.bbox, a.class_id != EMPTY_CLASS) {
            doc.push_box(id, a.class_id, b);
        }
    }
    Ok(doc)
}

pub fn write_coco(doc: &CocoDocument, path: &Path) -> Result<()> {
    write_sorted_json(doc, path)
}

pub fn export_coco(
    annos: &[WeakAnnotation],
    images: &IngestManifest,
    labels: &LabelMapping,
    path: &Path,
) -> Result<()> {
    write_coco(&build_coco(annos, images, labels)?, path)
}

pub fn read_coco(path: &Path) -> Result<CocoDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
