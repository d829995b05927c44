//! Motion-based localization of animals in a camera-trap burst.
//!
//! Per burst: temporal median background, per-frame Euclidean motion map,
//! fixed threshold, small erosion to drop salt noise, large dilation to
//! merge animal parts, then the largest connected components become boxes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::{label, Connectivity};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, BoundingBox, BurstSequence, FloatMap, ImageBuffer};
use crate::morphology::{dilate, erode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    /// Motion threshold as a fraction of the maximal pixel distance.
    pub threshold_t: f64,
    pub erosion_kernel: u32,
    pub dilation_kernel: u32,
    pub connectivity: Connectivity,
    pub min_component_area: u64,
    pub max_components: usize,
    /// Shrink each box to the thresholded pixels inside its dilated component.
    pub tighten_boxes: bool,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            threshold_t: 0.12,
            erosion_kernel: 3,
            dilation_kernel: 151,
            connectivity: Connectivity::Eight,
            min_component_area: 1,
            max_components: 1,
            tighten_boxes: false,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_t > 0.0 && self.threshold_t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold_t must lie in (0, 1), got {}",
                self.threshold_t
            )));
        }
        for (name, k) in [
            ("erosion_kernel", self.erosion_kernel),
            ("dilation_kernel", self.dilation_kernel),
        ] {
            if k % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be odd and >= 1, got {k}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBoxes {
    pub image_id: String,
    /// Largest first.
    pub boxes: Vec<BoundingBox>,
    /// Pixel count of the dilated component behind each box.
    pub component_areas: Vec<u64>,
}

impl FrameBoxes {
    pub fn largest(&self) -> Option<&BoundingBox> {
        self.boxes.first()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub frames: Vec<FrameBoxes>,
}

/// Intermediate products of one burst, kept for the step-by-step dump.
#[derive(Debug, Clone)]
pub struct LocalizationTrace {
    pub background: ImageBuffer,
    pub motion: Vec<FloatMap>,
    pub thresholded: Vec<BinaryMask>,
    pub denoised: Vec<BinaryMask>,
    pub result: LocalizationResult,
}

/// Per-pixel, per-channel median over the burst; the lower median for even lengths.
pub fn compute_background(burst: &BurstSequence) -> Result<ImageBuffer> {
    let frames = burst.frames();
    let Some(first) = frames.first() else {
        return Err(Error::EmptySequence);
    };
    if frames.len() == 1 {
        return Ok(first.image.clone());
    }
    let (w, h, c) = first.image.dims();
    let n = frames.len();
    let mid = (n - 1) / 2;
    let planes: Vec<&[u8]> = frames.iter().map(|f| f.image.data()).collect();
    let mut out = vec![0u8; first.image.data().len()];
    let mut samples = vec![0u8; n];
    for (i, o) in out.iter_mut().enumerate() {
        for (s, p) in samples.iter_mut().zip(&planes) {
            *s = p[i];
        }
        *o = *samples.select_nth_unstable(mid).1;
    }
    ImageBuffer::new(w, h, c, out)
}

/// Euclidean distance between corresponding pixels, divided by `255 * sqrt(channels)`.
pub fn motion_map(frame: &ImageBuffer, background: &ImageBuffer) -> Result<FloatMap> {
    frame.check_same_dims(background)?;
    let c = frame.channels() as usize;
    let norm = 255.0 * (c as f64).sqrt();
    let values = frame
        .data()
        .chunks_exact(c)
        .zip(background.data().chunks_exact(c))
        .map(|(p, q)| {
            let sq: i32 = p
                .iter()
                .zip(q)
                .map(|(&a, &b)| {
                    let d = a as i32 - b as i32;
                    d * d
                })
                .sum();
            ((sq as f64).sqrt() / norm).min(1.0) as f32
        })
        .collect();
    FloatMap::new(frame.width(), frame.height(), values)
}

/// Set where the map value is at least `t`.
pub fn threshold(map: &FloatMap, t: f64) -> BinaryMask {
    let t = t as f32;
    let bits = map.values().iter().map(|&v| v >= t).collect();
    BinaryMask::new(map.width(), map.height(), bits).expect("same shape as map")
}

pub fn localize(burst: &BurstSequence, cfg: &LocalizerConfig) -> Result<LocalizationResult> {
    Ok(localize_traced(burst, cfg)?.result)
}

/// Same as [`localize`], also returning every intermediate map.
pub fn localize_traced(burst: &BurstSequence, cfg: &LocalizerConfig) -> Result<LocalizationTrace> {
    cfg.validate()?;
    let background = compute_background(burst)?;
    let mut trace = LocalizationTrace {
        background,
        motion: Vec::with_capacity(burst.len()),
        thresholded: Vec::with_capacity(burst.len()),
        denoised: Vec::with_capacity(burst.len()),
        result: LocalizationResult::default(),
    };
    for frame in burst.frames() {
        let m = motion_map(&frame.image, &trace.background)?;
        let t = threshold(&m, cfg.threshold_t);
        let d = dilate(&erode(&t, cfg.erosion_kernel), cfg.dilation_kernel);
        trace
            .result
            .frames
            .push(boxes_from_mask(&frame.image_id, &t, &d, cfg));
        trace.motion.push(m);
        trace.thresholded.push(t);
        trace.denoised.push(d);
    }
    Ok(trace)
}

fn boxes_from_mask(
    image_id: &str,
    thresholded: &BinaryMask,
    denoised: &BinaryMask,
    cfg: &LocalizerConfig,
) -> FrameBoxes {
    let labeling = label(denoised, cfg.connectivity);
    let kept: Vec<(usize, u64, BoundingBox)> = labeling
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.area >= cfg.min_component_area)
        .take(cfg.max_components)
        .map(|(i, c)| (i, c.area, c.bbox))
        .collect();

    let mut boxes: Vec<BoundingBox> = kept.iter().map(|k| k.2).collect();
    if cfg.tighten_boxes {
        for ((idx, _, _), b) in kept.iter().zip(boxes.iter_mut()) {
            if let Some(t) = tight_box(thresholded, &labeling.labels, *idx as u32 + 1, b) {
                *b = t;
            }
        }
    }
    FrameBoxes {
        image_id: image_id.to_string(),
        boxes,
        component_areas: kept.iter().map(|k| k.1).collect(),
    }
}

/// Bounds of the thresholded pixels carrying component label `target`.
fn tight_box(
    thresholded: &BinaryMask,
    labels: &[u32],
    target: u32,
    footprint: &BoundingBox,
) -> Option<BoundingBox> {
    let w = thresholded.width() as usize;
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in footprint.y..footprint.bottom() {
        for x in footprint.x..footprint.right() {
            let i = y as usize * w + x as usize;
            if labels[i] == target && thresholded.bits()[i] {
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bounds.map(|(x0, y0, x1, y1)| BoundingBox::from_corners(x0, y0, x1, y1))
}

/// Draws a 2 px red rectangle outline (gray input is expanded to RGB).
pub fn draw_boxes(img: &ImageBuffer, boxes: &[BoundingBox]) -> ImageBuffer {
    let mut out = if img.channels() == 3 {
        img.clone()
    } else {
        let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer::new(img.width(), img.height(), 3, data).expect("expanded gray")
    };
    const RED: [u8; 3] = [255, 0, 0];
    for b in boxes {
        for t in 0..2u32 {
            for x in b.x..b.right() {
                for y in [b.y + t, b.bottom().saturating_sub(1 + t)] {
                    if y >= b.y && y < b.bottom() {
                        out.pixel_mut(x, y).copy_from_slice(&RED);
                    }
                }
            }
            for y in b.y..b.bottom() {
                for x in [b.x + t, b.right().saturating_sub(1 + t)] {
                    if x >= b.x && x < b.right() {
                        out.pixel_mut(x, y).copy_from_slice(&RED);
                    }
                }
            }
        }
    }
    out
}

/// Writes `background.png` and, per frame, `<id>_motion.png`, `<id>_threshold.png`,
/// `<id>_denoised.png` and `<id>_boxes.png` into `dir`.
pub fn dump_trace(burst: &BurstSequence, trace: &LocalizationTrace, dir: &Path) -> Result<()> {
    use crate::dataset_io::write_png;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_png(&trace.background, &dir.join("background.png"))?;
    for (i, frame) in burst.frames().iter().enumerate() {
        let id = &frame.image_id;
        write_png(
            &trace.motion[i].to_image(),
            &dir.join(format!("{id}_motion.png")),
        )?;
        write_png(
            &trace.thresholded[i].to_image(),
            &dir.join(format!("{id}_threshold.png")),
        )?;
        write_png(
            &trace.denoised[i].to_image(),
            &dir.join(format!("{id}_denoised.png")),
        )?;
        write_png(
            &draw_boxes(&frame.image, &trace.result.frames[i].boxes),
            &dir.join(format!("{id}_boxes.png")),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Frame;
    use proptest::prelude::*;

    fn gray_burst(values: &[&[u8]], w: u32, h: u32) -> BurstSequence {
        let frames = values
            .iter()
            .enumerate()
            .map(|(i, v)| Frame {
                image_id: format!("f{i}"),
                image: ImageBuffer::new(w, h, 1, v.to_vec()).unwrap(),
                timestamp: i as f64,
            })
            .collect();
        BurstSequence::new("cam", frames).unwrap()
    }

    #[test]
    fn median_of_three() {
        let b = gray_burst(&[&[10], &[200], &[20]], 1, 1);
        assert_eq!(compute_background(&b).unwrap().data(), &[20]);
    }

    #[test]
    fn lower_median_for_even_count() {
        let b = gray_burst(&[&[40], &[5], &[11], &[9]], 1, 1);
        assert_eq!(compute_background(&b).unwrap().data(), &[9]);
    }

    #[test]
    fn single_frame_background_is_frame() {
        let b = gray_burst(&[&[1, 2, 3, 4]], 2, 2);
        assert_eq!(compute_background(&b).unwrap(), b.frames()[0].image);
        assert!(localize(&b, &LocalizerConfig::default()).unwrap().frames[0]
            .boxes
            .is_empty());
    }

    #[test]
    fn motion_map_examples() {
        let black = ImageBuffer::new(1, 1, 3, vec![0, 0, 0]).unwrap();
        let white = ImageBuffer::new(1, 1, 3, vec![255, 255, 255]).unwrap();
        let red = ImageBuffer::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        assert_eq!(motion_map(&black, &black).unwrap().values(), &[0.0]);
        assert_eq!(motion_map(&white, &black).unwrap().values(), &[1.0]);
        let v = motion_map(&red, &black).unwrap().values()[0];
        assert!((v as f64 - 1.0 / 3f64.sqrt()).abs() < 1e-6);
        assert!(threshold(&motion_map(&red, &black).unwrap(), 0.12).bits()[0]);

        let gray = ImageBuffer::new(1, 1, 1, vec![0]).unwrap();
        assert!(matches!(
            motion_map(&gray, &black),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = FloatMap::new(3, 1, vec![0.0, 0.119999, 0.12]).unwrap();
        assert_eq!(threshold(&m, 0.12).bits(), &[false, false, true]);
    }

    #[test]
    fn identical_frames_give_no_boxes() {
        let px = vec![77u8; 64 * 48];
        let b = gray_burst(&[&px, &px, &px], 64, 48);
        let r = localize(&b, &LocalizerConfig::default()).unwrap();
        assert_eq!(r.frames.len(), 3);
        assert!(r.frames.iter().all(|f| f.boxes.is_empty()));
    }

    fn moving_square_burst() -> (BurstSequence, Vec<BoundingBox>) {
        let (w, h) = (300u32, 120u32);
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        for i in 0..3u32 {
            let mut img = ImageBuffer::filled(w, h, 3, 30).unwrap();
            let x0 = 20 + 60 * i;
            for y in 40..80 {
                for x in x0..x0 + 40 {
                    img.pixel_mut(x, y).copy_from_slice(&[220, 220, 220]);
                }
            }
            truth.push(BoundingBox::new(x0, 40, 40, 40).unwrap());
            frames.push(Frame {
                image_id: format!("f{i}"),
                image: img,
                timestamp: i as f64,
            });
        }
        (BurstSequence::new("cam", frames).unwrap(), truth)
    }

    #[test]
    fn moving_square_is_contained() {
        let (burst, truth) = moving_square_burst();
        let r = localize(&burst, &LocalizerConfig::default()).unwrap();
        for (f, t) in r.frames.iter().zip(&truth) {
            assert_eq!(f.boxes.len(), 1);
            assert!(f.boxes[0].contains(t), "{:?} vs {:?}", f.boxes[0], t);
        }
    }

    #[test]
    fn tightened_boxes_hug_the_object() {
        let (burst, truth) = moving_square_burst();
        let cfg = LocalizerConfig {
            tighten_boxes: true,
            ..Default::default()
        };
        let r = localize(&burst, &cfg).unwrap();
        for (f, t) in r.frames.iter().zip(&truth) {
            assert_eq!(f.boxes[0], *t);
        }
    }

    #[test]
    fn min_area_and_max_components() {
        let (burst, _) = moving_square_burst();
        let cfg = LocalizerConfig {
            dilation_kernel: 3,
            max_components: 5,
            ..Default::default()
        };
        let r = localize(&burst, &cfg).unwrap();
        assert!(r.frames.iter().all(|f| f.boxes.len() == 1));
        let cfg = LocalizerConfig {
            min_component_area: 100_000,
            ..Default::default()
        };
        let r = localize(&burst, &cfg).unwrap();
        assert!(r.frames.iter().all(|f| f.boxes.is_empty()));
    }

    #[test]
    fn config_validation() {
        let bad = [
            LocalizerConfig {
                threshold_t: 0.0,
                ..Default::default()
            },
            LocalizerConfig {
                threshold_t: 1.0,
                ..Default::default()
            },
            LocalizerConfig {
                erosion_kernel: 2,
                ..Default::default()
            },
            LocalizerConfig {
                dilation_kernel: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        LocalizerConfig::default().validate().unwrap();
    }

    proptest! {
        #[test]
        fn background_matches_sort_and_index(n in 1usize..=5, samples in proptest::collection::vec(any::<u8>(), 5 * 12)) {
            let planes: Vec<&[u8]> = (0..n).map(|i| &samples[i * 12..(i + 1) * 12]).collect();
            let b = gray_burst(&planes, 4, 3);
            let got = compute_background(&b).unwrap();
            for p in 0..12 {
                let mut col: Vec<u8> = planes.iter().map(|pl| pl[p]).collect();
                col.sort();
                prop_assert_eq!(got.data()[p], col[(n - 1) / 2]);
            }
        }

        #[test]
        fn raising_threshold_never_adds_bits(values in proptest::collection::vec(0.0f32..=1.0, 30), t1 in 0.01f64..0.98, dt in 0.0f64..0.5) {
            let m = FloatMap::new(6, 5, values).unwrap();
            let t2 = (t1 + dt).min(0.99);
            prop_assert!(threshold(&m, t2).count_ones() <= threshold(&m, t1).count_ones());
        }
    }
}
