//! Parsing and serialization: images, burst ingestion, label mappings,
//! COCO export, MNIST IDX files and the training manifest.

mod coco;
mod decode;
mod idx;
mod ingest;
mod mapping;
mod training;

pub use coco::{
    build_coco, export_coco, read_coco, write_coco, CocoAnnotation, CocoCategory, CocoDocument,
    CocoImage,
};
pub use decode::{decode_image, write_png};
pub use idx::{
    parse_idx, parse_idx_bytes, write_idx, DigitSample, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use ingest::{
    group_bursts, scan_images, Burst, ImageRecord, IngestManifest, TimestampSource,
    DEFAULT_TIMESTAMP_PATTERN,
};
pub use mapping::{parse_mapping, parse_mapping_with_tags};
pub use training::{
    export_training_manifest, ClassifierSchedule, DetectorSchedule, TrainingManifest,
};

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Pretty JSON with lexicographically sorted object keys and a trailing newline.
pub(crate) fn to_sorted_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json::Map is a BTreeMap unless `preserve_order` is enabled
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn write_sorted_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let s = to_sorted_json(value).map_err(|e| Error::json(path, e))?;
    write_file(path, s.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
