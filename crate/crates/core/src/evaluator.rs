//! Classification and localization reports, and the low-confidence review queue.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotator::{LabelMapping, QualityReport, EMPTY_CLASS};
use crate::error::{Error, Result};
use crate::image::{box_iou, BoundingBox};
use crate::localizer::{FrameBoxes, LocalizationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub predicted_class: u32,
    /// Softmax posterior of the predicted class.
    pub posterior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    PresenceFn,
    PresenceFp,
    TaxaError,
}

pub fn classify_outcome(truth: u32, predicted: u32) -> Outcome {
    match (truth == EMPTY_CLASS, predicted == EMPTY_CLASS) {
        _ if truth == predicted => Outcome::Correct,
        (false, true) => Outcome::PresenceFn,
        (true, false) => Outcome::PresenceFp,
        _ => Outcome::TaxaError,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub correct: usize,
    pub presence_fn: usize,
    pub presence_fp: usize,
    pub taxa_error: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Correct => self.correct += 1,
            Outcome::PresenceFn => self.presence_fn += 1,
            Outcome::PresenceFp => self.presence_fp += 1,
            Outcome::TaxaError => self.taxa_error += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.correct + self.presence_fn + self.presence_fp + self.taxa_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub total: usize,
    pub counts: OutcomeCounts,
    pub presence_fn_pct: f64,
    pub presence_fp_pct: f64,
    pub taxa_error_pct: f64,
    pub accuracy_pct: f64,
    /// truth class → predicted class → count
    pub confusion: BTreeMap<u32, BTreeMap<u32, usize>>,
    /// Outcome counts per human-supplied challenge tag, when tags were given.
    pub per_tag: BTreeMap<String, OutcomeCounts>,
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

pub fn classification_report(
    preds: &[PredictionRecord],
    truth: &LabelMapping,
    tags: Option<&BTreeMap<String, String>>,
) -> Result<ClassificationReport> {
    let mut counts = OutcomeCounts::default();
    let mut confusion: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    let mut per_tag: BTreeMap<String, OutcomeCounts> = BTreeMap::new();
    for p in preds {
        let t = truth
            .get(&p.image_id)
            .ok_or_else(|| Error::MissingTruth(p.image_id.clone()))?;
        let o = classify_outcome(t, p.predicted_class);
        counts.add(o);
        *confusion
            .entry(t)
            .or_default()
            .entry(p.predicted_class)
            .or_default() += 1;
        if let Some(tag) = tags.and_then(|m| m.get(&p.image_id)) {
            per_tag.entry(tag.clone()).or_default().add(o);
        }
    }
    let total = counts.total();
    Ok(ClassificationReport {
        total,
        counts,
        presence_fn_pct: pct(counts.presence_fn, total),
        presence_fp_pct: pct(counts.presence_fp, total),
        taxa_error_pct: pct(counts.taxa_error, total),
        accuracy_pct: pct(counts.correct, total),
        confusion,
        per_tag,
    })
}

/// Image ids, least confident first; ties by id.
pub fn review_queue(preds: &[PredictionRecord]) -> Vec<String> {
    let mut order: Vec<&PredictionRecord> = preds.iter().collect();
    order.sort_by(|a, b| {
        a.posterior
            .total_cmp(&b.posterior)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    order.into_iter().map(|p| p.image_id.clone()).collect()
}

/// Scores the largest box of each frame. A box with IoU below `iou_min`
/// counts as a false negative.
pub fn localization_report(
    loc: &LocalizationResult,
    truth: &HashMap<String, Option<BoundingBox>>,
    iou_min: f64,
) -> Result<QualityReport> {
    let (mut ok, mut fp, mut fneg) = (0, 0, 0);
    for f in &loc.frames {
        let t = truth
            .get(&f.image_id)
            .ok_or_else(|| Error::MissingTruth(f.image_id.clone()))?;
        match (f.largest(), t) {
            (None, None) => ok += 1,
            (Some(_), None) => fp += 1,
            (None, Some(_)) => fneg += 1,
            (Some(p), Some(t)) if box_iou(p, t) >= iou_min => ok += 1,
            (Some(_), Some(_)) => fneg += 1,
        }
    }
    Ok(QualityReport::from_counts(ok, fp, fneg))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn expect_header(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    want: &[&str],
) -> Result<()> {
    let got = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::parse(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                want.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn rows(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::parse(path, line, e.to_string())
            })?;
            Ok((r.position().map(|p| p.line()).unwrap_or(0), r))
        })
        .collect()
}

/// Predictions CSV: `image_id,predicted_class,posterior`.
pub fn parse_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv_reader(path)?;
    expect_header(
        path,
        &mut reader,
        &["image_id", "predicted_class", "posterior"],
    )?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (line, r) in rows(path, &mut reader)? {
        let id = r[0].to_string();
        let predicted_class = r[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad predicted_class `{}`", &r[1])))?;
        let posterior: f64 = r[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad posterior `{}`", &r[2])))?;
        if !(0.0..=1.0).contains(&posterior) {
            return Err(Error::parse(
                path,
                line,
                format!("posterior {posterior} outside [0, 1]"),
            ));
        }
        if seen.insert(id.clone(), line).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate image_id `{id}`"),
            ));
        }
        out.push(PredictionRecord {
            image_id: id,
            predicted_class,
            posterior,
        });
    }
    Ok(out)
}

/// Box CSV: `image_id,x,y,w,h`; empty coordinates mean "no box".
/// Rows keep file order.
pub fn parse_box_csv(path: &Path) -> Result<Vec<(String, Option<BoundingBox>)>> {
    let mut reader = csv_reader(path)?;
    expect_header(path, &mut reader, &["image_id", "x", "y", "w", "h"])?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (line, r) in rows(path, &mut reader)? {
        let id = r[0].to_string();
        let coords: Vec<&str> = (1..5).map(|i| &r[i]).collect();
        let bbox = if coords.iter().all(|c| c.is_empty()) {
            None
        } else {
            let v: Vec<u32> = coords
                .iter()
                .map(|c| c.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, line, format!("bad box `{}`", coords.join(","))))?;
            Some(
                BoundingBox::new(v[0], v[1], v[2], v[3])
                    .map_err(|e| Error::parse(path, line, e.to_string()))?,
            )
        };
        if seen.insert(id.clone(), line).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate image_id `{id}`"),
            ));
        }
        out.push((id, bbox));
    }
    Ok(out)
}

pub fn boxes_to_localization(rows: &[(String, Option<BoundingBox>)]) -> LocalizationResult {
    LocalizationResult {
        frames: rows
            .iter()
            .map(|(id, b)| FrameBoxes {
                image_id: id.clone(),
                boxes: b.iter().copied().collect(),
                component_areas: b.iter().map(|b| b.area()).collect(),
            })
            .collect(),
    }
}

pub fn render_classification(r: &ClassificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>8}{:>10}", "outcome", "count", "percent");
    for (name, n, p) in [
        ("presence FN", r.counts.presence_fn, r.presence_fn_pct),
        ("presence FP", r.counts.presence_fp, r.presence_fp_pct),
        ("taxa error", r.counts.taxa_error, r.taxa_error_pct),
        ("accuracy", r.counts.correct, r.accuracy_pct),
    ] {
        let _ = writeln!(s, "{name:<14}{n:>8}{p:>10.1}");
    }
    let _ = writeln!(s, "{:<14}{:>8}", "total", r.total);
    if !r.per_tag.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<14}{:>8}{:>8}{:>8}{:>8}{:>8}",
            "tag", "images", "ok", "FN", "FP", "taxa"
        );
        for (tag, c) in &r.per_tag {
            let _ = writeln!(
                s,
                "{tag:<14}{:>8}{:>8}{:>8}{:>8}{:>8}",
                c.total(),
                c.correct,
                c.presence_fn,
                c.presence_fp,
                c.taxa_error
            );
        }
    }
    s
}

pub fn render_quality(r: &QualityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>8}{:>10}", "outcome", "count", "percent");
    for (name, n, p) in [
        ("correct", r.correct, r.correct_pct),
        ("FP", r.false_positive, r.fp_pct),
        ("FN", r.false_negative, r.fn_pct),
    ] {
        let _ = writeln!(s, "{name:<14}{n:>8}{p:>10.1}");
    }
    let _ = writeln!(s, "{:<14}{:>8}", "total", r.total);
    s
}
