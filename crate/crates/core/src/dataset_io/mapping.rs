//! Label mapping files: UTF-8 CSV with header `image_id,class_id[,class_name]`.
//!
//! An optional `tag` column carries a free-form per-image tag (used by the
//! evaluator's challenge breakdown); any other column is an error.

use std::collections::BTreeMap;
use std::path::Path;

use crate::annotator::LabelMapping;
use crate::error::{Error, Result};

pub fn parse_mapping(path: &Path) -> Result<LabelMapping> {
    parse_mapping_with_tags(path).map(|(m, _)| m)
}

/// Mapping plus the `tag` column, when present.
pub fn parse_mapping_with_tags(path: &Path) -> Result<(LabelMapping, BTreeMap<String, String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Ok(Default::default());
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(class_col)) = (col("image_id"), col("class_id")) else {
        return Err(Error::parse(
            path,
            1,
            "header must start with `image_id,class_id`",
        ));
    };
    let name_col = col("class_name");
    let tag_col = col("tag");
    if let Some(extra) = headers
        .iter()
        .find(|h| !matches!(*h, "image_id" | "class_id" | "class_name" | "tag"))
    {
        return Err(Error::parse(path, 1, format!("unknown column `{extra}`")));
    }

    let mut mapping = LabelMapping::default();
    let mut tags = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row.get(id_col).unwrap_or("");
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty image_id"));
        }
        let raw_class = row.get(class_col).unwrap_or("");
        let class_id: u32 = raw_class.parse().map_err(|_| {
            Error::parse(
                path,
                line,
                format!("class_id `{raw_class}` is not a non-negative integer"),
            )
        })?;
        if mapping.entries.insert(id.to_string(), class_id).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate image_id `{id}`"),
            ));
        }
        if let Some(name) = name_col.and_then(|c| row.get(c)).filter(|n| !n.is_empty()) {
            mapping
                .class_names
                .entry(class_id)
                .or_insert_with(|| name.to_string());
        }
        if let Some(tag) = tag_col.and_then(|c| row.get(c)).filter(|t| !t.is_empty()) {
            tags.insert(id.to_string(), tag.to_string());
        }
    }
    Ok((mapping, tags))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::parse(
            path,
            line,
            format!("expected {expected_len} fields, found {len}"),
        ),
        csv::ErrorKind::Utf8 { err, .. } => Error::parse(path, line, err.to_string()),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}
