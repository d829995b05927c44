//! Directory scanning and burst grouping.
//!
//! Layout: `<root>/<camera_id>/**/<image_id>.{png,jpg,jpeg}`. The image id is
//! the file stem and must be unique across the whole tree.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use chrono::NaiveDateTime;
use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// Matches `YYYYMMDD_hhmmss`, `YYYYMMDD-hhmmss` or `YYYYMMDDhhmmss` in a file name.
pub const DEFAULT_TIMESTAMP_PATTERN: &str = r"(\d{8}[_-]?\d{6})";

#[derive(Debug, Clone)]
pub enum TimestampSource {
    /// First capture group of the pattern, read either as plain seconds or
    /// as a 14-digit `YYYYMMDDhhmmss` date (separators ignored).
    Filename(Regex),
    Mtime,
}

impl Default for TimestampSource {
    fn default() -> Self {
        TimestampSource::Filename(Regex::new(DEFAULT_TIMESTAMP_PATTERN).expect("valid pattern"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub camera_id: String,
    /// Seconds.
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub burst_id: String,
    pub camera_id: String,
    pub image_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub root_dir: PathBuf,
    /// Sorted by image id.
    pub images: Vec<ImageRecord>,
    pub bursts: Vec<Burst>,
}

impl IngestManifest {
    pub fn build(
        root_dir: &Path,
        source: &TimestampSource,
        gap_seconds: f64,
        max_burst: usize,
    ) -> Result<Self> {
        let images = scan_images(root_dir, source)?;
        let bursts = group_bursts(&images, gap_seconds, max_burst);
        Ok(Self {
            root_dir: root_dir.to_path_buf(),
            images,
            bursts,
        })
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn camera_of(&self) -> HashMap<String, String> {
        self.images
            .iter()
            .map(|r| (r.image_id.clone(), r.camera_id.clone()))
            .collect()
    }

    pub fn burst_of(&self) -> HashMap<String, String> {
        self.bursts
            .iter()
            .flat_map(|b| {
                b.image_ids
                    .iter()
                    .map(move |id| (id.clone(), b.burst_id.clone()))
            })
            .collect()
    }

    /// Path relative to the root with `/` separators.
    pub fn relative_name(&self, rec: &ImageRecord) -> String {
        let rel = rec.path.strip_prefix(&self.root_dir).unwrap_or(&rec.path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn parse_timestamp(raw: &str) -> Option<f64> {
    if let Ok(v) = raw.parse::<f64>() {
        if raw.len() != 14 {
            return Some(v);
        }
    }
    let digits: String = raw.chars().filter(|c| c.is_ascii_digit()).collect();
    if digits.len() == 14 {
        if let Ok(dt) = NaiveDateTime::parse_from_str(&digits, "%Y%m%d%H%M%S") {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    raw.parse::<f64>().ok()
}

fn mtime_seconds(path: &Path) -> Result<f64> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let modified = meta.modified().map_err(|e| Error::io(path, e))?;
    Ok(modified
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0))
}

fn timestamp_of(path: &Path, source: &TimestampSource) -> Result<f64> {
    if let TimestampSource::Filename(re) = source {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let found = re
            .captures(name)
            .and_then(|c| c.get(1).or_else(|| c.get(0)))
            .and_then(|m| parse_timestamp(m.as_str()));
        match found {
            Some(t) => return Ok(t),
            None => warn!("{}: no timestamp in file name, using mtime", path.display()),
        }
    }
    mtime_seconds(path)
}

/// Lists every image below `root`, reading only the header for dimensions.
/// Unreadable images are logged and skipped.
pub fn scan_images(root: &Path, source: &TimestampSource) -> Result<Vec<ImageRecord>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "image root is not a directory",
            ),
        ));
    }
    let mut out: Vec<ImageRecord> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let p = e.path().unwrap_or(root).to_path_buf();
            Error::io(p, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || !is_image(path) {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        let mut parts = rel.components();
        let camera_id = match (parts.next(), parts.next()) {
            (Some(cam), Some(_)) => cam.as_os_str().to_string_lossy().into_owned(),
            _ => {
                warn!("{}: not inside a camera directory, skipped", path.display());
                continue;
            }
        };
        let (width, height) = match image::image_dimensions(path) {
            Ok(d) => d,
            Err(e) => {
                warn!("{}: unreadable image header ({e}), skipped", path.display());
                continue;
            }
        };
        let image_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(ImageRecord {
            image_id,
            timestamp: timestamp_of(path, source)?,
            path: path.to_path_buf(),
            camera_id,
            width,
            height,
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(w) = out.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(Error::InvalidConfig(format!(
            "duplicate image id `{}`: {} and {}",
            w[0].image_id,
            w[0].path.display(),
            w[1].path.display()
        )));
    }
    Ok(out)
}

/// Greedy grouping: per camera in time order, a frame joins the open burst
/// when it follows the previous frame by at most `gap_seconds` and the burst
/// holds fewer than `max_burst` frames.
pub fn group_bursts(images: &[ImageRecord], gap_seconds: f64, max_burst: usize) -> Vec<Burst> {
    let max_burst = max_burst.max(1);
    let mut order: Vec<&ImageRecord> = images.iter().collect();
    order.sort_by(|a, b| {
        a.camera_id
            .cmp(&b.camera_id)
            .then(a.timestamp.total_cmp(&b.timestamp))
            .then(a.image_id.cmp(&b.image_id))
    });

    let mut bursts: Vec<Burst> = Vec::new();
    let mut per_camera = 0usize;
    let mut last: Option<&ImageRecord> = None;
    for rec in order {
        let joins = match last {
            Some(prev) => {
                prev.camera_id == rec.camera_id
                    && rec.timestamp - prev.timestamp <= gap_seconds
                    && bursts.last().map(|b| b.image_ids.len()).unwrap_or(0) < max_burst
            }
            None => false,
        };
        if joins {
            bursts
                .last_mut()
                .unwrap()
                .image_ids
                .push(rec.image_id.clone());
        } else {
            if last.map(|p| p.camera_id != rec.camera_id).unwrap_or(true) {
                per_camera = 0;
            }
            bursts.push(Burst {
                burst_id: format!("{}/{:05}", rec.camera_id, per_camera),
                camera_id: rec.camera_id.clone(),
                image_ids: vec![rec.image_id.clone()],
            });
            per_camera += 1;
        }
        last = Some(rec);
    }
    bursts
}
