use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trapwsod::annotator::FnPolicy;
use trapwsod::components::Connectivity;
use trapwsod::pipeline::{
    cmd_annotate, cmd_evaluate, cmd_review, cmd_testbed, default_report_path, EvalMode,
    PipelineConfig, TestbedRun, TestbedSelection, TimestampMode,
};

#[derive(Parser)]
#[command(
    name = "trapwsod",
    version,
    about = "Weak box annotation for camera-trap bursts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize animals in bursts and export corrected COCO splits
    Annotate(AnnotateArgs),
    /// Generate the digit-cloud tiny-object testbed
    Testbed(TestbedArgs),
    /// Score predictions against ground truth
    Evaluate(EvaluateArgs),
    /// List predictions from least to most confident
    Review(ReviewArgs),
}

#[derive(Args)]
struct AnnotateArgs {
    /// JSON config; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image root laid out as <root>/<camera>/...
    #[arg(long)]
    images: Option<PathBuf>,
    /// CSV with header image_id,class_id[,class_name]
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    erosion_kernel: Option<u32>,
    #[arg(long)]
    dilation_kernel: Option<u32>,
    #[arg(long, value_parser = parse_connectivity)]
    connectivity: Option<Connectivity>,
    #[arg(long)]
    min_component_area: Option<u64>,
    #[arg(long)]
    max_components: Option<usize>,
    #[arg(long)]
    tighten_boxes: bool,
    #[arg(long, value_enum)]
    timestamp_source: Option<TimestampArg>,
    /// Regex whose first capture group holds the timestamp
    #[arg(long)]
    timestamp_regex: Option<String>,
    #[arg(long)]
    gap_seconds: Option<f64>,
    #[arg(long)]
    max_burst: Option<usize>,
    #[arg(long, value_enum)]
    fn_policy: Option<FnPolicyArg>,
    /// Camera held out for testing (repeatable)
    #[arg(long = "test-camera")]
    test_cameras: Vec<String>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write per-step images for every burst into this directory
    #[arg(long)]
    debug_dump: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimestampArg {
    Filename,
    Mtime,
}

#[derive(Clone, Copy, ValueEnum)]
enum FnPolicyArg {
    Keep,
    Exclude,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Connectivity::from_neighbors)
        .ok_or_else(|| format!("connectivity must be 4 or 8, got `{s}`"))
}

fn parse_standard_spec(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n @ 1..=4) => Ok(n),
        _ => Err(format!(
            "`{s}` is not a standard spec; valid specs are 1, 2, 3, 4"
        )),
    }
}

#[derive(Args)]
struct TestbedArgs {
    /// Standard configuration 1-4 (64, 128, 256, 512 px canvases)
    #[arg(long, value_parser = parse_standard_spec, conflicts_with_all = ["digits", "side"])]
    spec: Option<usize>,
    /// Digits per canvas (custom spec)
    #[arg(long, requires = "side")]
    digits: Option<usize>,
    /// Canvas side in pixels (custom spec)
    #[arg(long, requires = "digits")]
    side: Option<u32>,
    /// Directory with the four MNIST IDX files
    #[arg(long)]
    mnist_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap each split at N canvases
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "classification")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.5)]
    iou_min: f64,
    /// JSON report path (default: next to the predictions file)
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Classification,
    Localization,
}

#[derive(Args)]
struct ReviewArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    top: Option<usize>,
}

fn annotate_config(a: AnnotateArgs) -> trapwsod::Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.image_root, a.images.map(Some));
    set!(cfg.mapping, a.mapping.map(Some));
    set!(cfg.out_dir, a.out.map(Some));
    set!(cfg.localizer.threshold_t, a.threshold);
    set!(cfg.localizer.erosion_kernel, a.erosion_kernel);
    set!(cfg.localizer.dilation_kernel, a.dilation_kernel);
    set!(cfg.localizer.connectivity, a.connectivity);
    set!(cfg.localizer.min_component_area, a.min_component_area);
    set!(cfg.localizer.max_components, a.max_components);
    if a.tighten_boxes {
        cfg.localizer.tighten_boxes = true;
    }
    set!(
        cfg.timestamp_source,
        a.timestamp_source.map(|t| match t {
            TimestampArg::Filename => TimestampMode::Filename,
            TimestampArg::Mtime => TimestampMode::Mtime,
        })
    );
    set!(cfg.timestamp_regex, a.timestamp_regex);
    set!(cfg.gap_seconds, a.gap_seconds);
    set!(cfg.max_burst, a.max_burst);
    set!(
        cfg.fn_policy,
        a.fn_policy.map(|p| match p {
            FnPolicyArg::Keep => FnPolicy::KeepAsUnlocalized,
            FnPolicyArg::Exclude => FnPolicy::Exclude,
        })
    );
    if !a.test_cameras.is_empty() {
        cfg.test_cameras = a.test_cameras;
    }
    set!(cfg.val_fraction, a.val_fraction);
    set!(cfg.seed, a.seed);
    set!(cfg.workers, a.workers);
    set!(cfg.debug_dump, a.debug_dump.map(Some));
    Ok(cfg)
}

fn run(cli: Cli) -> trapwsod::Result<()> {
    match cli.command {
        Command::Annotate(a) => {
            let cfg = annotate_config(a)?;
            let s = cmd_annotate(&cfg)?;
            println!(
                "{} images ({} skipped) in {} bursts: train {} / val {} / test {}; {:.2} images/sec",
                s.images_processed,
                s.images_skipped,
                s.bursts,
                s.split.train.images,
                s.split.val.images,
                s.split.test.images,
                s.images_per_second
            );
        }
        Command::Testbed(t) => {
            let selection = match (t.spec, t.digits, t.side) {
                (Some(i), _, _) => TestbedSelection::Standard(i),
                (None, Some(digit_count), Some(canvas_side)) => TestbedSelection::Custom {
                    canvas_side,
                    digit_count,
                },
                _ => TestbedSelection::Standard(1),
            };
            let m = cmd_testbed(&TestbedRun {
                selection,
                mnist_dir: t.mnist_dir,
                out_dir: t.out,
                seed: t.seed,
                limit: t.limit,
                workers: t.workers,
            })?;
            println!(
                "{}x{} canvases, {} digits, o2i {:.2}%: train {} / val {} / test {}",
                m.spec.canvas_side,
                m.spec.canvas_side,
                m.spec.digit_count,
                m.o2i_pct,
                m.train.images,
                m.val.images,
                m.test.images
            );
        }
        Command::Evaluate(e) => {
            let mode = match e.mode {
                ModeArg::Classification => EvalMode::Classification,
                ModeArg::Localization => EvalMode::Localization,
            };
            let json = e
                .json
                .unwrap_or_else(|| default_report_path(&e.predictions, mode));
            print!(
                "{}",
                cmd_evaluate(&e.predictions, &e.truth, mode, e.iou_min, &json)?
            );
        }
        Command::Review(r) => {
            for id in cmd_review(&r.predictions, r.top)? {
                println!("{id}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
