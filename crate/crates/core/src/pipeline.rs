//! Batch workflows behind the command-line subcommands.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotator::{correct, split_by_camera, FnPolicy, SplitReport, SplitSettings};
use crate::dataset_io::{
    decode_image, export_coco, export_training_manifest, parse_idx, parse_mapping,
    parse_mapping_with_tags, write_file, write_sorted_json, IngestManifest, TimestampSource,
    DEFAULT_TIMESTAMP_PATTERN,
};
use crate::error::{Error, Result};
use crate::evaluator::{
    boxes_to_localization, classification_report, localization_report, parse_box_csv,
    parse_predictions, render_classification, render_quality, review_queue,
};
use crate::image::{BurstSequence, Frame};
use crate::localizer::{
    dump_trace, localize, localize_traced, FrameBoxes, LocalizationResult, LocalizerConfig,
};
use crate::testbed::{generate_dataset, standard_specs, DigitPool, TestbedManifest, TestbedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampMode {
    #[default]
    Filename,
    Mtime,
}

/// Every knob of an `annotate` run. Loaded from key-sorted JSON; missing
/// keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub image_root: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub localizer: LocalizerConfig,
    pub timestamp_source: TimestampMode,
    pub timestamp_regex: String,
    pub gap_seconds: f64,
    pub max_burst: usize,
    pub fn_policy: FnPolicy,
    pub test_cameras: Vec<String>,
    pub val_fraction: f64,
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub debug_dump: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image_root: None,
            mapping: None,
            out_dir: None,
            localizer: LocalizerConfig::default(),
            timestamp_source: TimestampMode::Filename,
            timestamp_regex: DEFAULT_TIMESTAMP_PATTERN.to_string(),
            gap_seconds: 5.0,
            max_burst: 3,
            fn_policy: FnPolicy::KeepAsUnlocalized,
            test_cameras: Vec::new(),
            val_fraction: 0.05,
            seed: 0,
            workers: 0,
            debug_dump: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    fn timestamp_source(&self) -> Result<TimestampSource> {
        Ok(match self.timestamp_source {
            TimestampMode::Mtime => TimestampSource::Mtime,
            TimestampMode::Filename => TimestampSource::Filename(
                Regex::new(&self.timestamp_regex)
                    .map_err(|e| Error::InvalidConfig(format!("timestamp_regex: {e}")))?,
            ),
        })
    }

    fn required(&self) -> Result<(&Path, &Path, &Path)> {
        fn need<'a>(v: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
            v.as_deref()
                .ok_or_else(|| Error::InvalidConfig(format!("{name} is required")))
        }
        Ok((
            need(&self.image_root, "image_root")?,
            need(&self.mapping, "mapping")?,
            need(&self.out_dir, "out_dir")?,
        ))
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub images_found: usize,
    pub images_processed: usize,
    pub images_skipped: usize,
    pub bursts: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub split: SplitReport,
    pub elapsed_seconds: f64,
    pub images_per_second: f64,
}

pub const TRAIN_COCO: &str = "train.json";
pub const VAL_COCO: &str = "val.json";
pub const TEST_COCO: &str = "test.json";
pub const SPLIT_REPORT: &str = "split_report.json";
pub const BOXES_CSV: &str = "boxes.csv";
pub const TRAINING_MANIFEST: &str = "training_manifest.json";
pub const RUN_LOG: &str = "run.log";

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Decodes one burst, skipping unreadable frames, and localizes it.
fn process_burst(
    manifest: &IngestManifest,
    burst_id: &str,
    camera_id: &str,
    image_ids: &[String],
    cfg: &PipelineConfig,
) -> Result<(Vec<FrameBoxes>, usize)> {
    let mut frames = Vec::with_capacity(image_ids.len());
    let mut skipped = 0;
    for id in image_ids {
        let rec = manifest
            .image(id)
            .ok_or_else(|| Error::UnknownImage(id.clone()))?;
        match decode_image(&rec.path) {
            Ok(image) => frames.push(Frame {
                image_id: id.clone(),
                image,
                timestamp: rec.timestamp,
            }),
            Err(e) => {
                warn!("skipping {id}: {e}");
                skipped += 1;
            }
        }
    }
    if frames.is_empty() {
        return Ok((Vec::new(), skipped));
    }
    // Frames of a burst with mismatched sizes are localized one by one.
    let consistent = frames
        .windows(2)
        .all(|w| w[0].image.dims() == w[1].image.dims());
    let bursts = if consistent {
        vec![BurstSequence::new(camera_id, frames)?]
    } else {
        warn!("burst {burst_id}: frame sizes differ; localizing frames separately");
        frames
            .into_iter()
            .map(|f| BurstSequence::new(camera_id, vec![f]))
            .collect::<Result<_>>()?
    };
    let mut out = Vec::new();
    for (i, burst) in bursts.iter().enumerate() {
        let result = match &cfg.debug_dump {
            Some(dir) => {
                let trace = localize_traced(burst, &cfg.localizer)?;
                let name = if bursts.len() == 1 {
                    sanitize(burst_id)
                } else {
                    format!("{}_{i}", sanitize(burst_id))
                };
                dump_trace(burst, &trace, &dir.join(name))?;
                trace.result
            }
            None => localize(burst, &cfg.localizer)?,
        };
        out.extend(result.frames);
    }
    Ok((out, skipped))
}

/// Ingest, group, localize, correct, split and export.
pub fn cmd_annotate(cfg: &PipelineConfig) -> Result<AnnotateSummary> {
    let start = Instant::now();
    cfg.localizer.validate()?;
    let (root, mapping_path, out_dir) = cfg.required()?;
    let labels = parse_mapping(mapping_path)?;
    if labels.is_empty() {
        return Err(Error::NoLabels(mapping_path.to_path_buf()));
    }
    let source = cfg.timestamp_source()?;
    let manifest = IngestManifest::build(root, &source, cfg.gap_seconds, cfg.max_burst)?;
    info!(
        "{} images in {} bursts under {}",
        manifest.images.len(),
        manifest.bursts.len(),
        root.display()
    );

    let per_burst: Vec<(Vec<FrameBoxes>, usize)> = with_workers(cfg.workers, || {
        manifest
            .bursts
            .par_iter()
            .map(|b| process_burst(&manifest, &b.burst_id, &b.camera_id, &b.image_ids, cfg))
            .collect::<Result<Vec<_>>>()
    })??;
    let skipped: usize = per_burst.iter().map(|p| p.1).sum();
    let mut frames: Vec<FrameBoxes> = per_burst.into_iter().flat_map(|p| p.0).collect();
    frames.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let loc = LocalizationResult { frames };

    let annos = correct(&loc, &labels, cfg.fn_policy)?;
    let settings = SplitSettings {
        test_cameras: cfg.test_cameras.iter().cloned().collect::<BTreeSet<_>>(),
        val_fraction: cfg.val_fraction,
        seed: cfg.seed,
    };
    let split = split_by_camera(
        &annos,
        &manifest.camera_of(),
        &manifest.burst_of(),
        &settings,
    )?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    export_coco(&split.train, &manifest, &labels, &out_dir.join(TRAIN_COCO))?;
    export_coco(&split.val, &manifest, &labels, &out_dir.join(VAL_COCO))?;
    export_coco(&split.test, &manifest, &labels, &out_dir.join(TEST_COCO))?;
    write_sorted_json(&split.report, &out_dir.join(SPLIT_REPORT))?;
    export_training_manifest(&out_dir.join(TRAINING_MANIFEST))?;

    let mut boxes = String::from("image_id,x,y,w,h\n");
    for f in &loc.frames {
        match f.largest() {
            Some(b) => writeln!(boxes, "{},{},{},{},{}", f.image_id, b.x, b.y, b.w, b.h),
            None => writeln!(boxes, "{},,,,", f.image_id),
        }
        .expect("write to String");
    }
    write_file(&out_dir.join(BOXES_CSV), boxes.as_bytes())?;

    let mut status_counts = BTreeMap::new();
    for a in &annos {
        let key = serde_json::to_value(a.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *status_counts.entry(key).or_insert(0) += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let processed = loc.frames.len();
    let summary = AnnotateSummary {
        images_found: manifest.images.len(),
        images_processed: processed,
        images_skipped: skipped,
        bursts: manifest.bursts.len(),
        status_counts,
        split: split.report,
        elapsed_seconds: elapsed,
        images_per_second: if elapsed > 0.0 {
            processed as f64 / elapsed
        } else {
            0.0
        },
    };
    write_run_log(&out_dir.join(RUN_LOG), cfg, &summary)?;
    info!(
        "{} images in {:.2} s ({:.2} images/sec)",
        processed, elapsed, summary.images_per_second
    );
    Ok(summary)
}

fn write_run_log(path: &Path, cfg: &PipelineConfig, s: &AnnotateSummary) -> Result<()> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut log = String::new();
    let _ = writeln!(log, "finished_at_unix: {now}");
    let _ = writeln!(log, "images_found: {}", s.images_found);
    let _ = writeln!(log, "images_processed: {}", s.images_processed);
    let _ = writeln!(log, "images_skipped: {}", s.images_skipped);
    let _ = writeln!(log, "bursts: {}", s.bursts);
    for (k, v) in &s.status_counts {
        let _ = writeln!(log, "status {k}: {v}");
    }
    let _ = writeln!(
        log,
        "split images train/val/test: {}/{}/{}",
        s.split.train.images, s.split.val.images, s.split.test.images
    );
    let _ = writeln!(log, "elapsed_seconds: {:.3}", s.elapsed_seconds);
    let _ = writeln!(log, "throughput_images_per_sec: {:.2}", s.images_per_second);
    let _ = writeln!(
        log,
        "config: {}",
        serde_json::to_string(cfg).map_err(|e| Error::json(path, e))?
    );
    write_file(path, log.as_bytes())
}

/// Which testbed configuration to generate.
#[derive(Debug, Clone)]
pub enum TestbedSelection {
    /// 1-based index into [`standard_specs`].
    Standard(usize),
    Custom {
        canvas_side: u32,
        digit_count: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TestbedRun {
    pub selection: TestbedSelection,
    /// Directory holding the four standard MNIST IDX files.
    pub mnist_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Caps every split at this many canvases (smoke runs).
    pub limit: Option<usize>,
    pub workers: usize,
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub fn resolve_testbed_spec(selection: &TestbedSelection, seed: u64) -> Result<TestbedSpec> {
    let mut spec = match *selection {
        TestbedSelection::Standard(i) => standard_specs()
            .get(i.wrapping_sub(1))
            .cloned()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown standard spec {i}; valid specs are 1, 2, 3, 4"
                ))
            })?,
        TestbedSelection::Custom {
            canvas_side,
            digit_count,
        } => TestbedSpec::custom(canvas_side, digit_count),
    };
    spec.seed = seed;
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_testbed(run: &TestbedRun) -> Result<TestbedManifest> {
    let mut spec = resolve_testbed_spec(&run.selection, run.seed)?;
    if let Some(n) = run.limit {
        spec.n_train = spec.n_train.min(n);
        spec.n_val = spec.n_val.min(n);
        spec.n_test = spec.n_test.min(n);
    }
    let path = |i: usize| run.mnist_dir.join(MNIST_FILES[i]);
    let train_pool = DigitPool::new(parse_idx(&path(0), &path(1))?)?;
    let test_pool = DigitPool::new(parse_idx(&path(2), &path(3))?)?;
    info!(
        "testbed: side {} px, {} digits, o2i {:.2}%",
        spec.canvas_side,
        spec.digit_count,
        100.0 * spec.o2i
    );
    with_workers(run.workers, || {
        generate_dataset(&spec, &train_pool, &test_pool, &run.out_dir)
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Classification,
    Localization,
}

/// Prints nothing itself: returns the text table and writes the JSON report
/// to `json_out`.
pub fn cmd_evaluate(
    predictions: &Path,
    truth: &Path,
    mode: EvalMode,
    iou_min: f64,
    json_out: &Path,
) -> Result<String> {
    match mode {
        EvalMode::Classification => {
            let preds = parse_predictions(predictions)?;
            let (labels, tags) = parse_mapping_with_tags(truth)?;
            let tags = (!tags.is_empty()).then_some(&tags);
            let report = classification_report(&preds, &labels, tags)?;
            write_sorted_json(&report, json_out)?;
            Ok(render_classification(&report))
        }
        EvalMode::Localization => {
            let loc = boxes_to_localization(&parse_box_csv(predictions)?);
            let truth: HashMap<_, _> = parse_box_csv(truth)?.into_iter().collect();
            let report = localization_report(&loc, &truth, iou_min)?;
            write_sorted_json(&report, json_out)?;
            Ok(render_quality(&report))
        }
    }
}

/// `<dir>/<stem>_<mode>_report.json` next to the predictions file.
pub fn default_report_path(predictions: &Path, mode: EvalMode) -> PathBuf {
    let stem = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    let suffix = match mode {
        EvalMode::Classification => "classification",
        EvalMode::Localization => "localization",
    };
    predictions.with_file_name(format!("{stem}_{suffix}_report.json"))
}

pub fn cmd_review(predictions: &Path, top: Option<usize>) -> Result<Vec<String>> {
    let mut q = review_queue(&parse_predictions(predictions)?);
    if let Some(n) = top {
        q.truncate(n);
    }
    Ok(q)
}
