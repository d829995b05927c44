//! Tiny-object testbed: black canvases with scattered MNIST digits, labeled by
//! whether one of them is a 3.
//!
//! Digits are pasted at random positions with a per-pixel maximum. The
//! canvas side sets the object-to-image ratio.

use std::path::{Path, PathBuf};

use log::info;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{
    write_file, write_png, write_sorted_json, CocoCategory, CocoDocument, DigitSample,
};
use crate::error::{Error, Result};
use crate::image::{box_iou, BoundingBox, ImageBuffer};

/// Pixel area of one MNIST glyph.
pub const GLYPH_AREA: f64 = 28.0 * 28.0;
pub const TARGET_DIGIT: u8 = 3;
const PLACEMENT_ATTEMPTS: usize = 1000;

/// Nominal object-to-image ratios of the four standard configurations, in percent.
pub const STANDARD_O2I_PCT: [f64; 4] = [19.1, 4.8, 1.2, 0.3];
pub const STANDARD_DIGIT_COUNTS: [usize; 4] = [3, 6, 26, 101];
pub const STANDARD_CANVAS_SIDES: [u32; 4] = [64, 128, 256, 512];
pub const STANDARD_SPLIT_SIZES: (usize, usize, usize) = (11276, 1972, 4040);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedSpec {
    pub o2i: f64,
    pub canvas_side: u32,
    pub digit_count: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub positive_fraction: f64,
    pub seed: u64,
    pub max_pair_overlap_iou: f64,
}

impl TestbedSpec {
    /// Spec whose ratio is derived from the canvas side.
    pub fn custom(canvas_side: u32, digit_count: usize) -> Self {
        let (n_train, n_val, n_test) = STANDARD_SPLIT_SIZES;
        Self {
            o2i: o2i_for_side(canvas_side),
            canvas_side,
            digit_count,
            n_train,
            n_val,
            n_test,
            positive_fraction: 0.5,
            seed: 0,
            max_pair_overlap_iou: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.canvas_side < 28 {
            return bad(format!(
                "canvas side {} cannot hold a 28x28 digit",
                self.canvas_side
            ));
        }
        if self.digit_count == 0 {
            return bad("digit_count must be at least 1".into());
        }
        if (self.o2i - o2i_for_side(self.canvas_side)).abs() > 0.005 {
            return bad(format!(
                "o2i {} is inconsistent with canvas side {} ({:.4})",
                self.o2i,
                self.canvas_side,
                o2i_for_side(self.canvas_side)
            ));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return bad(format!(
                "positive_fraction {} outside [0, 1]",
                self.positive_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.max_pair_overlap_iou) {
            return bad(format!(
                "max_pair_overlap_iou {} outside [0, 1]",
                self.max_pair_overlap_iou
            ));
        }
        Ok(())
    }
}

pub fn o2i_for_side(side: u32) -> f64 {
    GLYPH_AREA / (side as f64 * side as f64)
}

/// The four standard configurations, smallest canvas first.
pub fn standard_specs() -> Vec<TestbedSpec> {
    STANDARD_CANVAS_SIDES
        .iter()
        .zip(STANDARD_DIGIT_COUNTS)
        .map(|(&side, digits)| TestbedSpec::custom(side, digits))
        .collect()
}

/// MNIST glyphs indexed by whether they show the target digit.
#[derive(Debug, Clone)]
pub struct DigitPool {
    digits: Vec<DigitSample>,
    targets: Vec<usize>,
    others: Vec<usize>,
}

impl DigitPool {
    pub fn new(digits: Vec<DigitSample>) -> Result<Self> {
        if digits.is_empty() {
            return Err(Error::DigitPool("digits (pool is empty)"));
        }
        if digits.iter().any(|d| d.image.channels() != 1) {
            return Err(Error::InvalidBuffer("digit glyphs must be gray".into()));
        }
        let (targets, others) = (0..digits.len()).partition(|&i| digits[i].label == TARGET_DIGIT);
        Ok(Self {
            digits,
            targets,
            others,
        })
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    fn pick<'a>(&'a self, target: bool, rng: &mut ChaCha8Rng) -> Result<&'a DigitSample> {
        let list = if target { &self.targets } else { &self.others };
        let i = list.choose(rng).ok_or(Error::DigitPool(if target {
            "target digits"
        } else {
            "non-target digits"
        }))?;
        Ok(&self.digits[*i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub digit: u8,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestbedSample {
    pub canvas: ImageBuffer,
    pub positive: bool,
    /// Boxes of target digits; empty for negatives.
    pub target_boxes: Vec<BoundingBox>,
    pub placements: Vec<Placement>,
}

fn paste_max(canvas: &mut ImageBuffer, glyph: &ImageBuffer, at: &BoundingBox) {
    for y in 0..glyph.height() {
        for x in 0..glyph.width() {
            let v = glyph.pixel(x, y)[0];
            let dst = &mut canvas.pixel_mut(at.x + x, at.y + y)[0];
            *dst = (*dst).max(v);
        }
    }
}

/// One canvas. Positives hold exactly one target digit at a random slot.
pub fn generate_sample(
    spec: &TestbedSpec,
    pool: &DigitPool,
    want_positive: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TestbedSample> {
    let side = spec.canvas_side;
    let mut canvas = ImageBuffer::filled(side, side, 1, 0)?;
    let target_slot = want_positive.then(|| rng.random_range(0..spec.digit_count));
    let mut placements: Vec<Placement> = Vec::with_capacity(spec.digit_count);

    for slot in 0..spec.digit_count {
        let glyph = pool.pick(target_slot == Some(slot), rng)?;
        let (gw, gh) = (glyph.image.width(), glyph.image.height());
        if gw > side || gh > side {
            return Err(Error::InvalidConfig(format!(
                "{gw}x{gh} digit does not fit a {side}px canvas"
            )));
        }
        let mut candidate = BoundingBox::new(0, 0, gw, gh)?;
        for _ in 0..PLACEMENT_ATTEMPTS {
            candidate.x = rng.random_range(0..=side - gw);
            candidate.y = rng.random_range(0..=side - gh);
            let clear = placements
                .iter()
                .all(|p| box_iou(&p.bbox, &candidate) <= spec.max_pair_overlap_iou);
            if clear {
                break;
            }
        }
        paste_max(&mut canvas, &glyph.image, &candidate);
        placements.push(Placement {
            digit: glyph.label,
            bbox: candidate,
        });
    }

    let target_boxes = placements
        .iter()
        .filter(|p| p.digit == TARGET_DIGIT)
        .map(|p| p.bbox)
        .collect();
    Ok(TestbedSample {
        canvas,
        positive: want_positive,
        target_boxes,
        placements,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            SplitName::Train => 1,
            SplitName::Val => 2,
            SplitName::Test => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub images: usize,
    pub positive: usize,
    pub negative: usize,
    pub labels_file: String,
    pub coco_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedManifest {
    pub spec: TestbedSpec,
    pub o2i_pct: f64,
    pub train: SplitSummary,
    pub val: SplitSummary,
    pub test: SplitSummary,
}

/// Number of positives in a split of `n`: the rounded-up share, so odd
/// counts favour positives at the default one-half fraction.
pub fn positive_count(n: usize, fraction: f64) -> usize {
    (((n as f64) * fraction - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Label for each index of a split, shuffled deterministically.
pub fn split_labels(spec: &TestbedSpec, split: SplitName, n: usize) -> Vec<bool> {
    let n_pos = positive_count(n, spec.positive_fraction);
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split.stream() << 32);
    labels.shuffle(&mut rng);
    labels
}

/// Independent generator for one sample, derived from (seed, split, index).
pub fn sample_rng(seed: u64, split: SplitName, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream() << 32) | (index as u64 + 1));
    rng
}

pub fn image_id(split: SplitName, index: usize) -> String {
    format!("{}_{index:05}", split.as_str())
}

/// Writes `<split>/<id>.png`, `<split>/labels.csv`, `<split>/annotations.json`
/// and `manifest.json` under `out_dir`. Train and validation canvases draw
/// from `train_pool`, test canvases from `test_pool`.
pub fn generate_dataset(
    spec: &TestbedSpec,
    train_pool: &DigitPool,
    test_pool: &DigitPool,
    out_dir: &Path,
) -> Result<TestbedManifest> {
    spec.validate()?;
    let mut summaries = Vec::with_capacity(3);
    for split in SplitName::ALL {
        let (n, pool) = match split {
            SplitName::Train => (spec.n_train, train_pool),
            SplitName::Val => (spec.n_val, train_pool),
            SplitName::Test => (spec.n_test, test_pool),
        };
        let dir = out_dir.join(split.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let labels = split_labels(spec, split, n);

        let samples: Vec<(String, bool, Vec<BoundingBox>)> = labels
            .par_iter()
            .enumerate()
            .map(|(i, &positive)| {
                let mut rng = sample_rng(spec.seed, split, i);
                let sample = generate_sample(spec, pool, positive, &mut rng)?;
                let id = image_id(split, i);
                write_png(&sample.canvas, &dir.join(format!("{id}.png")))?;
                Ok((id, positive, sample.target_boxes))
            })
            .collect::<Result<_>>()?;

        let mut csv = String::from("image_id,label\n");
        let mut coco = CocoDocument {
            categories: vec![CocoCategory {
                id: TARGET_DIGIT as u32,
                name: TARGET_DIGIT.to_string(),
                supercategory: "digit".into(),
            }],
            ..Default::default()
        };
        for (id, positive, boxes) in &samples {
            csv.push_str(&format!("{id},{}\n", u8::from(*positive)));
            let cid = coco.push_image(format!("{id}.png"), spec.canvas_side, spec.canvas_side);
            for b in boxes {
                coco.push_box(cid, TARGET_DIGIT as u32, b);
            }
        }
        let labels_path = dir.join("labels.csv");
        let coco_path = dir.join("annotations.json");
        write_file(&labels_path, csv.as_bytes())?;
        write_sorted_json(&coco, &coco_path)?;

        let positive = samples.iter().filter(|s| s.1).count();
        info!("{}: {} canvases ({} positive)", split.as_str(), n, positive);
        summaries.push(SplitSummary {
            images: n,
            positive,
            negative: n - positive,
            labels_file: relative(out_dir, &labels_path),
            coco_file: relative(out_dir, &coco_path),
        });
    }

    let mut it = summaries.into_iter();
    let manifest = TestbedManifest {
        spec: spec.clone(),
        o2i_pct: 100.0 * o2i_for_side(spec.canvas_side),
        train: it.next().expect("three splits"),
        val: it.next().expect("three splits"),
        test: it.next().expect("three splits"),
    };
    write_sorted_json(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn relative(root: &Path, p: &Path) -> String {
    let rel: PathBuf = p.strip_prefix(root).unwrap_or(p).to_path_buf();
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Distinct synthetic glyph per digit class: a filled bar whose length encodes the class.
    pub(crate) fn toy_pool(per_class: usize) -> DigitPool {
        let mut digits = Vec::new();
        for label in 0..10u8 {
            for k in 0..per_class {
                let mut img = ImageBuffer::filled(28, 28, 1, 0).unwrap();
                for y in 4..24 {
                    for x in 4..(6 + 2 * label as u32) {
                        img.pixel_mut(x, y)[0] = 100 + (k as u8 % 100) + label;
                    }
                }
                digits.push(DigitSample { image: img, label });
            }
        }
        DigitPool::new(digits).unwrap()
    }

    #[test]
    fn standard_spec_values() {
        let specs = standard_specs();
        assert_eq!(specs.len(), 4);
        assert!((specs[0].o2i - 0.1914).abs() < 5e-5);
        assert_eq!((specs[0].canvas_side, specs[0].digit_count), (64, 3));
        assert!((specs[3].o2i - 0.0030).abs() < 5e-5);
        assert_eq!((specs[3].canvas_side, specs[3].digit_count), (512, 101));
        for (s, pct) in specs.iter().zip(STANDARD_O2I_PCT) {
            assert_eq!((s.n_train, s.n_val, s.n_test), (11276, 1972, 4040));
            assert!((100.0 * s.o2i - pct).abs() <= 0.5);
            assert_eq!(s.positive_fraction, 0.5);
            s.validate().unwrap();
        }
    }

    #[test]
    fn negative_has_no_target() {
        let spec = TestbedSpec::custom(64, 3);
        let s = generate_sample(
            &spec,
            &toy_pool(3),
            false,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(s.placements.iter().all(|p| p.digit != TARGET_DIGIT));
        assert!(s.target_boxes.is_empty());
    }

    #[test]
    fn positive_has_exactly_one_target() {
        let spec = TestbedSpec::custom(64, 3);
        for seed in 0..20 {
            let s = generate_sample(
                &spec,
                &toy_pool(3),
                true,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .unwrap();
            let threes = s
                .placements
                .iter()
                .filter(|p| p.digit == TARGET_DIGIT)
                .count();
            assert_eq!((threes, s.placements.len() - threes), (1, 2));
            assert_eq!(s.target_boxes.len(), 1);
            assert!(s.placements.iter().all(|p| p.bbox.fits_in(64, 64)));
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let spec = TestbedSpec::custom(128, 6);
        let pool = toy_pool(2);
        let a =
            generate_sample(&spec, &pool, true, &mut sample_rng(5, SplitName::Train, 17)).unwrap();
        let b =
            generate_sample(&spec, &pool, true, &mut sample_rng(5, SplitName::Train, 17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlap_cap_holds_when_room_exists() {
        let spec = TestbedSpec::custom(256, 26);
        let s =
            generate_sample(&spec, &toy_pool(2), true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (i, p) in s.placements.iter().enumerate() {
            for q in &s.placements[i + 1..] {
                assert!(box_iou(&p.bbox, &q.bbox) <= 0.25);
            }
        }
    }

    #[test]
    fn pool_errors() {
        assert!(DigitPool::new(vec![]).is_err());
        let only_threes = DigitPool::new(vec![DigitSample {
            image: ImageBuffer::filled(28, 28, 1, 9).unwrap(),
            label: 3,
        }])
        .unwrap();
        let spec = TestbedSpec::custom(64, 3);
        assert!(matches!(
            generate_sample(
                &spec,
                &only_threes,
                false,
                &mut ChaCha8Rng::seed_from_u64(0)
            ),
            Err(Error::DigitPool(_))
        ));
    }

    #[test]
    fn balanced_labels() {
        let mut spec = TestbedSpec::custom(64, 3);
        spec.seed = 11;
        for n in [0, 1, 7, 100, 11276] {
            let l = split_labels(&spec, SplitName::Val, n);
            assert_eq!(l.iter().filter(|&&p| p).count(), n.div_ceil(2));
        }
    }

    #[test]
    fn small_dataset_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = TestbedSpec::custom(64, 3);
        (spec.n_train, spec.n_val, spec.n_test) = (9, 4, 5);
        let pool = toy_pool(2);
        let m = generate_dataset(&spec, &pool, &pool, dir.path()).unwrap();
        assert_eq!((m.train.images, m.train.positive), (9, 5));
        assert_eq!((m.val.positive, m.test.positive), (2, 3));
        let labels = std::fs::read_to_string(dir.path().join("train/labels.csv")).unwrap();
        assert_eq!(labels.lines().count(), 10);
        let coco = crate::dataset_io::read_coco(&dir.path().join("test/annotations.json")).unwrap();
        assert_eq!(coco.images.len(), 5);
        assert_eq!(coco.annotations.len(), 3);
        assert!(dir.path().join("val/val_00003.png").exists());
    }
}
