//! Fusion of motion boxes with image-level labels, and burst-level dataset splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{box_iou, BoundingBox};
use crate::localizer::LocalizationResult;

/// Class id reserved for images without an animal.
pub const EMPTY_CLASS: u32 = 0;

/// Image id → class id table, plus optional taxon names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMapping {
    pub entries: BTreeMap<String, u32>,
    pub class_names: BTreeMap<u32, String>,
}

impl LabelMapping {
    pub fn get(&self, image_id: &str) -> Option<u32> {
        self.entries.get(image_id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Taxa (ids ≥ 1) that appear as labels or names.
    pub fn taxa(&self) -> BTreeSet<u32> {
        self.entries
            .values()
            .chain(self.class_names.keys())
            .copied()
            .filter(|&c| c != EMPTY_CLASS)
            .collect()
    }

    pub fn class_name(&self, class_id: u32) -> String {
        self.class_names
            .get(&class_id)
            .cloned()
            .unwrap_or_else(|| format!("taxon_{class_id}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationStatus {
    BoxAndAnimal,
    /// A box was detected on an image labeled empty and has been dropped.
    FpCorrected,
    /// Labeled animal, no motion box found.
    FnUnlocalized,
    TrueEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakAnnotation {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: Option<BoundingBox>,
    pub status: AnnotationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnPolicy {
    #[default]
    KeepAsUnlocalized,
    Exclude,
}

/// Applies the box/label agreement table to every localized frame.
///
/// Only the largest box of a frame is kept; empty-labeled frames never keep a box.
pub fn correct(
    loc: &LocalizationResult,
    labels: &LabelMapping,
    fn_policy: FnPolicy,
) -> Result<Vec<WeakAnnotation>> {
    let mut out = Vec::with_capacity(loc.frames.len());
    for frame in &loc.frames {
        let class_id = labels
            .get(&frame.image_id)
            .ok_or_else(|| Error::MissingLabel(frame.image_id.clone()))?;
        let detected = frame.largest().copied();
        let (bbox, status) = match (detected, class_id != EMPTY_CLASS) {
            (Some(b), true) => (Some(b), AnnotationStatus::BoxAndAnimal),
            (Some(_), false) => (None, AnnotationStatus::FpCorrected),
            (None, true) => {
                if fn_policy == FnPolicy::Exclude {
                    continue;
                }
                (None, AnnotationStatus::FnUnlocalized)
            }
            (None, false) => (None, AnnotationStatus::TrueEmpty),
        };
        out.push(WeakAnnotation {
            image_id: frame.image_id.clone(),
            class_id,
            bbox,
            status,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub images: usize,
    pub bursts: usize,
    pub per_camera: BTreeMap<String, usize>,
    pub per_class: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: PartitionCounts,
    pub val: PartitionCounts,
    pub test: PartitionCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<WeakAnnotation>,
    pub val: Vec<WeakAnnotation>,
    pub test: Vec<WeakAnnotation>,
    pub report: SplitReport,
}

#[derive(Debug, Clone)]
pub struct SplitSettings {
    pub test_cameras: BTreeSet<String>,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            test_cameras: BTreeSet::new(),
            val_fraction: 0.05,
            seed: 0,
        }
    }
}

/// Number of bursts sent to validation: `ceil(fraction * bursts)`.
pub fn val_burst_count(fraction: f64, bursts: usize) -> usize {
    // tolerance keeps e.g. 0.05 * 100 from rounding up to 6
    let raw = fraction * bursts as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(bursts)
}

/// Camera-wise test split plus a seeded burst-level train/val split.
///
/// Bursts are shuffled with ChaCha8 seeded from `seed`, after sorting burst
/// ids, so the outcome does not depend on input order.
pub fn split_by_camera(
    annos: &[WeakAnnotation],
    camera_of: &HashMap<String, String>,
    burst_of: &HashMap<String, String>,
    settings: &SplitSettings,
) -> Result<DatasetSplit> {
    if !(0.0..1.0).contains(&settings.val_fraction) {
        return Err(Error::InvalidConfig(format!(
            "val_fraction must lie in [0, 1), got {}",
            settings.val_fraction
        )));
    }
    let lookup = |map: &HashMap<String, String>, id: &str| {
        map.get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    };

    let mut cameras = BTreeSet::new();
    let mut trainable_bursts = BTreeSet::new();
    for a in annos {
        let cam = lookup(camera_of, &a.image_id)?;
        let burst = lookup(burst_of, &a.image_id)?;
        if !settings.test_cameras.contains(&cam) {
            trainable_bursts.insert(burst);
        }
        cameras.insert(cam);
    }
    if !cameras.is_empty() && cameras.iter().all(|c| settings.test_cameras.contains(c)) {
        return Err(Error::NoTrainingData);
    }

    let mut bursts: Vec<String> = trainable_bursts.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    bursts.shuffle(&mut rng);
    let n_val = val_burst_count(settings.val_fraction, bursts.len());
    let val_bursts: BTreeSet<&String> = bursts[..n_val].iter().collect();

    let mut split = DatasetSplit::default();
    let mut seen_bursts: [BTreeSet<String>; 3] = Default::default();
    for a in annos {
        let cam = lookup(camera_of, &a.image_id)?;
        let burst = lookup(burst_of, &a.image_id)?;
        let (slot, list, counts) = if settings.test_cameras.contains(&cam) {
            (2, &mut split.test, &mut split.report.test)
        } else if val_bursts.contains(&burst) {
            (1, &mut split.val, &mut split.report.val)
        } else {
            (0, &mut split.train, &mut split.report.train)
        };
        list.push(a.clone());
        counts.images += 1;
        *counts.per_camera.entry(cam).or_default() += 1;
        *counts.per_class.entry(a.class_id).or_default() += 1;
        seen_bursts[slot].insert(burst);
    }
    split.report.train.bursts = seen_bursts[0].len();
    split.report.val.bursts = seen_bursts[1].len();
    split.report.test.bursts = seen_bursts[2].len();
    Ok(split)
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub image_id: String,
    pub bbox: Option<BoundingBox>,
    pub class_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityOutcome {
    Correct,
    FalsePositive,
    FalseNegative,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub total: usize,
    pub correct: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub correct_pct: f64,
    pub fp_pct: f64,
    pub fn_pct: f64,
}

impl QualityReport {
    pub(crate) fn from_counts(correct: usize, fp: usize, fneg: usize) -> Self {
        let total = correct + fp + fneg;
        let pct = |n: usize| {
            if total == 0 {
                0.0
            } else {
                100.0 * n as f64 / total as f64
            }
        };
        Self {
            total,
            correct,
            false_positive: fp,
            false_negative: fneg,
            correct_pct: pct(correct),
            fp_pct: pct(fp),
            fn_pct: pct(fneg),
        }
    }
}

/// Scores one annotation against its truth, looking at what the localizer
/// produced before correction: an `FpCorrected` record still counts as a box.
pub fn quality_outcome(anno: &WeakAnnotation, truth: &TruthRecord, iou_min: f64) -> QualityOutcome {
    let had_box = matches!(
        anno.status,
        AnnotationStatus::BoxAndAnimal | AnnotationStatus::FpCorrected
    );
    let animal = truth.class_id != EMPTY_CLASS || truth.bbox.is_some();
    match (had_box, animal) {
        (true, false) => QualityOutcome::FalsePositive,
        (false, false) => QualityOutcome::Correct,
        (false, true) => QualityOutcome::FalseNegative,
        (true, true) => match (&anno.bbox, &truth.bbox) {
            (Some(p), Some(t)) if box_iou(p, t) >= iou_min => QualityOutcome::Correct,
            // presence-only truth: any box on an animal image counts
            (Some(_), None) => QualityOutcome::Correct,
            _ => QualityOutcome::FalseNegative,
        },
    }
}

pub fn annotation_quality(
    annos: &[WeakAnnotation],
    truth: &[TruthRecord],
    iou_min: f64,
) -> Result<QualityReport> {
    let by_id: HashMap<&str, &TruthRecord> =
        truth.iter().map(|t| (t.image_id.as_str(), t)).collect();
    let (mut ok, mut fp, mut fneg) = (0, 0, 0);
    for a in annos {
        let t = by_id
            .get(a.image_id.as_str())
            .ok_or_else(|| Error::MissingTruth(a.image_id.clone()))?;
        match quality_outcome(a, t, iou_min) {
            QualityOutcome::Correct => ok += 1,
            QualityOutcome::FalsePositive => fp += 1,
            QualityOutcome::FalseNegative => fneg += 1,
        }
    }
    Ok(QualityReport::from_counts(ok, fp, fneg))
}
