//! `echokit` command-line entry point.

mod commands;
mod meta;
mod png;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use echokit_core::{LabelSource, PreprocessConfig};

#[derive(Debug, Parser)]
#[command(name = "echokit", version, about = "Sonar clip to echogram toolkit")]
struct Cli {
    /// Worker threads for per-clip parallelism.
    #[arg(long, global = true, env = "ECHOKIT_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    /// Where to write run metadata. Defaults to `<primary output>.meta.json`.
    #[arg(long, global = true)]
    meta: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate synthetic clips with ground-truth tracks and labels.
    Synth(SynthArgs),
    /// Clean clips and collapse them into two-channel echograms.
    Echogram(EchogramArgs),
    /// Cut an echogram into fixed-width windows.
    Slice(SliceArgs),
    /// Flip an echogram slice and transform its label.
    Augment(AugmentArgs),
    /// Overlay two slices, keeping the brighter pixel and summing counts.
    Superpose(SuperposeArgs),
    /// Turn a tracks file into per-window count labels.
    Label(LabelArgs),
    /// Assemble a train/val/test manifest from labeled slice collections.
    Manifest(ManifestArgs),
    /// Check split hygiene and report class balance of a manifest.
    ManifestCheck(ManifestCheckArgs),
    /// Score predictions against labels with normalized MAE.
    Eval(EvalArgs),
    /// Run echogram generation over a grid of threshold settings.
    Sweep(SweepArgs),
    /// Render an echogram as a PNG, lateral position as hue.
    ExportPng(ExportPngArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// TOML file describing a single clip.
    #[arg(long, conflicts_with_all = ["suite", "seed"], required_unless_present = "suite")]
    config: Option<PathBuf>,
    /// Generate a varied suite of this many clips instead.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    suite: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 20.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 40.0)]
    alpha1: f64,
    #[arg(long, default_value_t = 60.0)]
    alpha2: f64,
    #[arg(long, default_value_t = 100.0)]
    size_thresh: f64,
    /// Range in meters at which `--size-thresh` applies unscaled.
    #[arg(long, default_value_t = echokit_core::preprocess::DEFAULT_REFERENCE_RANGE)]
    ref_range: f64,
    /// Allow thresholds outside the alpha0 < alpha1 < alpha2 ordering.
    #[arg(long)]
    sweep_config: bool,
}

impl ThresholdArgs {
    fn config(&self) -> PreprocessConfig {
        PreprocessConfig {
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            size_thresh: self.size_thresh,
            reference_range: self.ref_range,
            sweep: self.sweep_config,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct EchogramArgs {
    /// An SVC1 clip, or a directory of `*.svc` clips.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output ECG1 file, or a directory when the input is a directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Debug, Args, Serialize)]
struct SliceArgs {
    /// ECG1 echogram; its file stem is used as the clip id.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    window: u32,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    stride: u32,
    /// Clip id, if it differs from the input file stem.
    #[arg(long)]
    clip_id: Option<String>,
    /// Output directory for `<clip>_x<offset>.ecg` files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long, value_parser = ["vflip", "hflip", "rhflip"])]
    op: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Label sidecar JSONL holding the input slice's record.
    #[arg(long, requires = "label_out")]
    label_in: Option<PathBuf>,
    #[arg(long, requires = "label_in")]
    label_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SuperposeArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires_all = ["b_label", "label_out"])]
    a_label: Option<PathBuf>,
    #[arg(long, requires_all = ["a_label", "label_out"])]
    b_label: Option<PathBuf>,
    #[arg(long, requires_all = ["a_label", "b_label"])]
    label_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LabelArgs {
    /// Tracks JSON file.
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    window: u32,
    /// Total frames in the clip.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    frames: u32,
    #[arg(long, default_value = "strong", value_parser = parse_source)]
    source: LabelSource,
    #[arg(long)]
    out: PathBuf,
}

fn parse_source(s: &str) -> Result<LabelSource, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown label source {s:?} (strong, weak, synthetic)"))
}

#[derive(Debug, Args, Serialize)]
struct ManifestArgs {
    /// Directory with `labels.jsonl` and strong-label slices.
    #[arg(long)]
    strong: Option<PathBuf>,
    /// Directory with `labels.jsonl` and weak-label slices.
    #[arg(long)]
    weak: Option<PathBuf>,
    /// Clip to split assignment (JSON).
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ManifestCheckArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    /// Directory of `*.svc` clips with optional `<stem>.labels.jsonl`.
    #[arg(long)]
    clips: PathBuf,
    /// `ablation` for the four standard threshold rows, or a CSV with columns
    /// alpha0, alpha1, alpha2, size_thresh and optional reference_range.
    #[arg(long, default_value = "ablation")]
    configs: String,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    window: u32,
    /// Directory of `config_<i>.jsonl` prediction files, one per config row.
    #[arg(long, conflicts_with = "oracle")]
    pred_dir: Option<PathBuf>,
    /// Score every config with the ground-truth labels as predictions.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExportPngArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        builder = builder.num_threads(n as usize);
    }
    let pool = builder.build()?;
    let mut record = meta::RunRecord::start(&cli.command, cli.jobs);
    pool.install(|| commands::dispatch(&cli.command, &mut record))?;
    record.finish(cli.meta.as_deref())
}
