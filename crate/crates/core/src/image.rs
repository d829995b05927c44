//! Raster, mask and geometry primitives shared by the rest of the crate.
//!
//! All buffers are row-major. Color buffers interleave their channels, so the
//! sample for channel `c` of pixel `(x, y)` lives at `(y * width + x) * channels + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidBuffer(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidBuffer(format!(
                "{width}x{height}x{channels} needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A buffer with every sample set to `value`.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn dims(&self) -> (u32, u32, u8) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[i..i + c]
    }

    pub(crate) fn check_same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// Luma conversion with `round(0.299 R + 0.587 G + 0.114 B)`; gray input is returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| {
            let luma = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            luma.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Per-pixel real values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidBuffer(format!(
                "{width}x{height} map needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidBuffer(format!(
                "map value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit rendering with `value * 255`.
    pub fn to_image(&self) -> ImageBuffer {
        let data = self
            .values
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidBuffer(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Black/white rendering (true = 255).
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

/// Axis-aligned pixel box, top-left origin, `w` and `h` at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidBuffer(format!(
                "box ({x}, {y}, {w}, {h}) has zero extent"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Box spanning the inclusive pixel corners `(x0, y0)`..=`(x1, y1)`.
    pub fn from_corners(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) as u64 * (y1 - y0) as u64
        }
    }
}

/// Intersection over union, 0 for disjoint boxes.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_id: String,
    pub image: ImageBuffer,
    /// Seconds.
    pub timestamp: f64,
}

/// Frames from a single camera trigger, in capture order.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstSequence {
    camera_id: String,
    frames: Vec<Frame>,
}

impl BurstSequence {
    pub fn new(camera_id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::EmptySequence);
        };
        for f in &frames[1..] {
            first.image.check_same_dims(&f.image)?;
        }
        if frames.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::InvalidBuffer(
                "burst timestamps must be non-decreasing".into(),
            ));
        }
        Ok(Self {
            camera_id: camera_id.into(),
            frames,
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (u32, u32, u8) {
        self.frames[0].image.dims()
    }
}
