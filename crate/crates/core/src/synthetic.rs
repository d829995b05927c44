//! Synthetic camera-trap bursts with exact ground truth.
//!
//! A seeded value-noise background, a bright square moving in a straight line
//! and optional nuisances (salt-and-pepper pixels, global brightness jitter,
//! small transient blobs standing in for rain or insects).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BoundingBox, BurstSequence, Frame, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Fraction of pixels per frame forced to black or white.
    pub salt_pepper_rate: f64,
    /// Per-frame global brightness offset drawn from `-j..=j`.
    pub brightness_jitter: u8,
    /// Probability that a frame carries one transient blob.
    pub distractor_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBurstSpec {
    pub width: u32,
    pub height: u32,
    pub n_frames: usize,
    /// Side of the moving square; 0 produces an empty scene.
    pub object_size: u32,
    /// Pixels per frame.
    pub displacement: u32,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SyntheticBurstSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            n_frames: 3,
            object_size: 40,
            displacement: 60,
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl SyntheticBurstSpec {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Side of the transient blobs; large enough to survive a 3×3 erosion.
pub const DISTRACTOR_SIDE: u32 = 8;
const LATTICE: u32 = 32;
const BACKGROUND_RANGE: (u8, u8) = (50, 110);
const OBJECT_RANGE: (u8, u8) = (200, 255);

#[derive(Debug, Clone)]
pub struct SyntheticBurst {
    pub burst: BurstSequence,
    /// Exact object box per frame; `None` for empty scenes.
    pub truth: Vec<Option<BoundingBox>>,
}

fn value_noise(w: u32, h: u32, rng: &mut ChaCha8Rng) -> ImageBuffer {
    let gw = (w / LATTICE + 2) as usize;
    let gh = (h / LATTICE + 2) as usize;
    let lattice: Vec<[f32; 3]> = (0..gw * gh)
        .map(|_| [0; 3].map(|_| rng.random_range(BACKGROUND_RANGE.0..=BACKGROUND_RANGE.1) as f32))
        .collect();
    let mut img = ImageBuffer::filled(w, h, 3, 0).expect("valid dims");
    for y in 0..h {
        let gy = (y / LATTICE) as usize;
        let fy = (y % LATTICE) as f32 / LATTICE as f32;
        for x in 0..w {
            let gx = (x / LATTICE) as usize;
            let fx = (x % LATTICE) as f32 / LATTICE as f32;
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let (a, b, c, d) = (
                at(gx, gy),
                at(gx + 1, gy),
                at(gx, gy + 1),
                at(gx + 1, gy + 1),
            );
            let px = img.pixel_mut(x, y);
            for ch in 0..3 {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                px[ch] = (top + (bottom - top) * fy).round() as u8;
            }
        }
    }
    img
}

fn fill(img: &mut ImageBuffer, b: &BoundingBox, color: [u8; 3]) {
    for y in b.y..b.bottom() {
        for x in b.x..b.right() {
            img.pixel_mut(x, y).copy_from_slice(&color);
        }
    }
}

/// Start coordinate along one axis so that every position stays at least one
/// pixel away from the border.
fn start_range(extent: u32, size: u32, step: i64, frames: usize) -> (i64, i64) {
    let span = step.abs() * (frames as i64 - 1);
    let lo = 1 + if step < 0 { span } else { 0 };
    let hi = extent as i64 - 1 - size as i64 - if step > 0 { span } else { 0 };
    (lo, hi)
}

pub fn generate_burst(spec: &SyntheticBurstSpec, rng: &mut ChaCha8Rng) -> Result<SyntheticBurst> {
    if spec.n_frames == 0 {
        return Err(Error::EmptySequence);
    }
    if spec.width < 2 || spec.height < 2 {
        return Err(Error::InvalidConfig("frame must be at least 2x2".into()));
    }
    let reach = spec.object_size as u64 + (spec.n_frames as u64 - 1) * spec.displacement as u64 + 2;
    if spec.object_size > 0 && reach > spec.width.min(spec.height) as u64 {
        return Err(Error::ObjectOutOfFrame(format!(
            "object {} px moving {} px over {} frames needs {} px, frame is {}x{}",
            spec.object_size, spec.displacement, spec.n_frames, reach, spec.width, spec.height
        )));
    }

    let background = value_noise(spec.width, spec.height, rng);

    let mut truth = vec![None; spec.n_frames];
    let mut object_color = [0u8; 3];
    if spec.object_size > 0 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let d = spec.displacement as f64;
        let (dx, dy) = (
            (d * angle.cos()).round() as i64,
            (d * angle.sin()).round() as i64,
        );
        let (xlo, xhi) = start_range(spec.width, spec.object_size, dx, spec.n_frames);
        let (ylo, yhi) = start_range(spec.height, spec.object_size, dy, spec.n_frames);
        let x0 = rng.random_range(xlo..=xhi);
        let y0 = rng.random_range(ylo..=yhi);
        let v = rng.random_range(OBJECT_RANGE.0..=OBJECT_RANGE.1);
        object_color = [v; 3];
        for (i, t) in truth.iter_mut().enumerate() {
            let (x, y) = (x0 + dx * i as i64, y0 + dy * i as i64);
            *t = Some(BoundingBox::new(
                x as u32,
                y as u32,
                spec.object_size,
                spec.object_size,
            )?);
        }
    }

    let mut frames = Vec::with_capacity(spec.n_frames);
    for (i, t) in truth.iter().enumerate() {
        let mut img = background.clone();
        if let Some(b) = t {
            fill(&mut img, b, object_color);
        }
        if spec.noise.distractor_rate > 0.0 && rng.random_bool(spec.noise.distractor_rate.min(1.0))
        {
            let side = DISTRACTOR_SIDE.min(spec.width).min(spec.height);
            let bx = rng.random_range(0..=spec.width - side);
            let by = rng.random_range(0..=spec.height - side);
            fill(
                &mut img,
                &BoundingBox::new(bx, by, side, side)?,
                [255, 255, 255],
            );
        }
        if spec.noise.brightness_jitter > 0 {
            let j = spec.noise.brightness_jitter as i16;
            let offset = rng.random_range(-j..=j);
            for s in img.data_mut() {
                *s = (*s as i16 + offset).clamp(0, 255) as u8;
            }
        }
        if spec.noise.salt_pepper_rate > 0.0 {
            let rate = spec.noise.salt_pepper_rate.min(1.0);
            for y in 0..spec.height {
                for x in 0..spec.width {
                    if rng.random_bool(rate) {
                        let v = if rng.random_bool(0.5) { 255 } else { 0 };
                        img.pixel_mut(x, y).fill(v);
                    }
                }
            }
        }
        frames.push(Frame {
            image_id: format!("syn{:016x}_f{i}", spec.seed),
            image: img,
            timestamp: i as f64,
        });
    }

    Ok(SyntheticBurst {
        burst: BurstSequence::new("synthetic", frames)?,
        truth,
    })
}
