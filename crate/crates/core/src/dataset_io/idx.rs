//! MNIST IDX files: big-endian `u32` magic and dimensions, then raw `u8` payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitSample {
    /// One-channel glyph, usually 28×28.
    pub image: ImageBuffer,
    pub label: u8,
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn header(bytes: &[u8], path: &Path, words: usize, magic: u32) -> Result<Vec<u32>> {
    if bytes.len() < 4 {
        return Err(Error::IdxFormat {
            path: path.to_path_buf(),
            message: format!("{} bytes is too short for a header", bytes.len()),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < 4 * words {
        return Err(Error::IdxFormat {
            path: path.to_path_buf(),
            message: format!("header needs {} bytes, file has {}", 4 * words, bytes.len()),
        });
    }
    Ok((1..words).map(|i| be_u32(bytes, 4 * i)).collect())
}

fn check_payload(path: &Path, expected: u64, found: u64) -> Result<()> {
    if expected != found {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses already-loaded image and label files; the paths only label errors.
pub fn parse_idx_bytes(
    images: &[u8],
    images_path: &Path,
    labels: &[u8],
    labels_path: &Path,
) -> Result<Vec<DigitSample>> {
    let dims = header(images, images_path, 4, IDX_IMAGES_MAGIC)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(Error::IdxFormat {
            path: images_path.to_path_buf(),
            message: format!("degenerate glyph size {rows}x{cols}"),
        });
    }
    let glyph = rows as u64 * cols as u64;
    check_payload(images_path, count as u64 * glyph, images.len() as u64 - 16)?;

    let label_count = header(labels, labels_path, 2, IDX_LABELS_MAGIC)?[0];
    check_payload(labels_path, label_count as u64, labels.len() as u64 - 8)?;
    if label_count != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let pixels = &images[16..];
    let label_bytes = &labels[8..];
    let glyph = glyph as usize;
    let mut out = Vec::with_capacity(count as usize);
    for (i, &label) in label_bytes.iter().enumerate() {
        if label > 9 {
            return Err(Error::IdxFormat {
                path: labels_path.to_path_buf(),
                message: format!("label {label} at index {i} is not a digit"),
            });
        }
        let data = pixels[i * glyph..(i + 1) * glyph].to_vec();
        out.push(DigitSample {
            image: ImageBuffer::new(cols, rows, 1, data)?,
            label,
        });
    }
    Ok(out)
}

pub fn parse_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<DigitSample>> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx_bytes(&images, images_path, &labels, labels_path)
}

/// Writes an image/label IDX pair. All glyphs must share one size.
pub fn write_idx(samples: &[DigitSample], images_path: &Path, labels_path: &Path) -> Result<()> {
    let (cols, rows) = samples
        .first()
        .map(|s| (s.image.width(), s.image.height()))
        .unwrap_or((28, 28));
    let mut img = Vec::with_capacity(16 + samples.len() * (rows * cols) as usize);
    let mut lab = Vec::with_capacity(8 + samples.len());
    for v in [IDX_IMAGES_MAGIC, samples.len() as u32, rows, cols] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for v in [IDX_LABELS_MAGIC, samples.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    for s in samples {
        if s.image.channels() != 1 || (s.image.width(), s.image.height()) != (cols, rows) {
            return Err(Error::InvalidBuffer(format!(
                "IDX glyphs must all be {cols}x{rows} gray"
            )));
        }
        img.extend_from_slice(s.image.data());
        lab.push(s.label);
    }
    super::write_file(images_path, &img)?;
    super::write_file(labels_path, &lab)
}
