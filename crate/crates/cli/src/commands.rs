use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use echokit_core::augment::{flip, superpose, FlipOp, LabeledSlice};
use echokit_core::counts::{labels_as_predictions, read_tracks, write_tracks};
use echokit_core::dataset::{load_collection, read_manifest, write_manifest, SplitAssignment};
use echokit_core::echogram::{read_ecg, slice_id, write_ecg, EcgFile, Echogram, EchogramSlice};
use echokit_core::jsonl::{read_jsonl, write_jsonl};
use echokit_core::sweep::{run_sweep, write_sweep_csv, SweepClip};
use echokit_core::synth::{synth_clip, synth_suite, SynthConfig, SynthOutput};
use echokit_core::{
    build_echogram, build_manifest, check_split_disjoint, class_balance, nmae, orient, read_clip,
    slice_echogram, tracks_to_counts, write_clip, CountLabel, LabelSource, PreprocessConfig, Prediction,
};

use crate::meta::RunRecord;
use crate::{
    AugmentArgs, Command, EchogramArgs, EvalArgs, ExportPngArgs, LabelArgs, ManifestArgs, ManifestCheckArgs,
    SliceArgs, SuperposeArgs, SweepArgs, SynthArgs,
};

pub fn dispatch(command: &Command, rec: &mut RunRecord) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a, rec),
        Command::Echogram(a) => echogram(a, rec),
        Command::Slice(a) => slice(a, rec),
        Command::Augment(a) => augment(a, rec),
        Command::Superpose(a) => superpose_cmd(a, rec),
        Command::Label(a) => label(a, rec),
        Command::Manifest(a) => manifest(a, rec),
        Command::ManifestCheck(a) => manifest_check(a, rec),
        Command::Eval(a) => eval(a, rec),
        Command::Sweep(a) => sweep(a, rec),
        Command::ExportPng(a) => export_png(a, rec),
    }
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("{} has no usable file name", path.display()))
}

/// Clip ids become file names, so they must not contain path syntax.
fn check_clip_id(id: &str) -> Result<()> {
    ensure!(
        !id.is_empty() && !id.contains(['/', '\\']) && id != "." && id != "..",
        "clip id {id:?} cannot be used as a file name"
    );
    Ok(())
}

fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_ecg(path: &Path, rec: &mut RunRecord) -> Result<EcgFile> {
    rec.input(path);
    read_ecg(path).with_context(|| format!("reading {}", path.display()))
}

fn synth(args: &SynthArgs, rec: &mut RunRecord) -> Result<()> {
    let outputs: Vec<SynthOutput> = match (&args.config, args.suite) {
        (Some(path), _) => {
            rec.input(path);
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let config: SynthConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            check_clip_id(&config.clip_id)?;
            vec![synth_clip(&config)?]
        }
        (None, Some(n)) => synth_suite(n as usize, args.seed)?,
        (None, None) => bail!("either --config or --suite is required"),
    };
    create_dir(&args.out)?;
    for out in &outputs {
        let id = &out.tracks.clip_id;
        let clip_path = args.out.join(format!("{id}.svc"));
        let tracks_path = args.out.join(format!("{id}.tracks.json"));
        let labels_path = args.out.join(format!("{id}.labels.jsonl"));
        write_clip(&out.clip, &clip_path)?;
        write_tracks(&out.tracks, &tracks_path)?;
        write_jsonl(&out.labels, &labels_path)?;
        for w in &out.warnings {
            eprintln!("warning: {id}: {w}");
        }
        rec.output(clip_path);
        rec.output(tracks_path);
        rec.output(labels_path);
    }
    eprintln!("wrote {} clip(s) to {}", outputs.len(), args.out.display());
    rec.primary_output(&args.out);
    Ok(())
}

fn echogram_one(input: &Path, output: &Path, config: &PreprocessConfig) -> Result<()> {
    let clip = read_clip(input).with_context(|| format!("reading {}", input.display()))?;
    let e = build_echogram(&clip, config, &file_stem(input)?)?;
    write_ecg(&EcgFile::from_echogram(&e), output).with_context(|| format!("writing {}", output.display()))
}

fn echogram(args: &EchogramArgs, rec: &mut RunRecord) -> Result<()> {
    let config = args.thresholds.config();
    config.validate()?;
    if args.input.is_dir() {
        let inputs = files_with_extension(&args.input, "svc")?;
        ensure!(!inputs.is_empty(), "no .svc clips in {}", args.input.display());
        create_dir(&args.out)?;
        let jobs: Vec<(PathBuf, PathBuf)> = inputs
            .iter()
            .map(|p| Ok((p.clone(), args.out.join(format!("{}.ecg", file_stem(p)?)))))
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|(i, o)| echogram_one(i, o, &config))
            .collect::<Result<Vec<()>>>()?;
        for (i, o) in jobs {
            rec.input(i);
            rec.output(o);
        }
        eprintln!("wrote {} echogram(s) to {}", inputs.len(), args.out.display());
    } else {
        rec.input(&args.input);
        echogram_one(&args.input, &args.out, &config)?;
    }
    rec.primary_output(&args.out);
    Ok(())
}

fn slice(args: &SliceArgs, rec: &mut RunRecord) -> Result<()> {
    let file = load_ecg(&args.input, rec)?;
    ensure!(
        file.pad_start.is_none(),
        "{} is already a padded slice; slice the full echogram instead",
        args.input.display()
    );
    let clip_id = match &args.clip_id {
        Some(id) => id.clone(),
        None => file_stem(&args.input)?,
    };
    check_clip_id(&clip_id)?;
    let e = Echogram {
        clip_id,
        source_config: None,
        image: file.image,
    };
    let slices = slice_echogram(&e, args.window, args.stride)?;
    create_dir(&args.out)?;
    for s in &slices {
        let path = args.out.join(format!("{}.ecg", s.slice_id()));
        write_ecg(&EcgFile::from_slice(s), &path).with_context(|| format!("writing {}", path.display()))?;
        rec.output(path);
    }
    eprintln!("wrote {} slice(s) to {}", slices.len(), args.out.display());
    rec.primary_output(&args.out);
    Ok(())
}

/// The sidecar record for `slice_path`: the only record, or the one whose
/// slice id matches the file stem.
fn sidecar_label(labels_path: &Path, slice_path: &Path, rec: &mut RunRecord) -> Result<CountLabel> {
    rec.input(labels_path);
    let mut labels: Vec<CountLabel> = read_jsonl(labels_path)?;
    if labels.len() == 1 {
        return Ok(labels.remove(0));
    }
    let stem = file_stem(slice_path)?;
    let mut matching = labels.into_iter().filter(|l| slice_id(&l.clip_id, l.x_offset) == stem);
    match (matching.next(), matching.next()) {
        (Some(l), None) => Ok(l),
        (None, _) => bail!("{} has no label for slice {stem}", labels_path.display()),
        (Some(_), Some(_)) => bail!("{} has several labels for slice {stem}", labels_path.display()),
    }
}

fn labeled(file: EcgFile, label: Option<CountLabel>) -> LabeledSlice {
    let label = label.unwrap_or_else(|| CountLabel {
        clip_id: String::new(),
        x_offset: 0,
        left: 0,
        right: 0,
        source: LabelSource::Strong,
    });
    LabeledSlice {
        slice: EchogramSlice {
            clip_id: label.clip_id.clone(),
            x_offset: label.x_offset,
            image: file.image,
            pad_start: file.pad_start,
        },
        label,
    }
}

fn write_labeled(x: &LabeledSlice, out: &Path, label_out: Option<&Path>, rec: &mut RunRecord) -> Result<()> {
    write_ecg(&EcgFile::from_slice(&x.slice), out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = label_out {
        write_jsonl(std::slice::from_ref(&x.label), path)?;
        rec.output(path);
    }
    rec.primary_output(out);
    Ok(())
}

fn augment(args: &AugmentArgs, rec: &mut RunRecord) -> Result<()> {
    let op: FlipOp = args.op.parse().map_err(anyhow::Error::msg)?;
    let file = load_ecg(&args.input, rec)?;
    let label = match &args.label_in {
        Some(p) => Some(sidecar_label(p, &args.input, rec)?),
        None => None,
    };
    let y = flip(&labeled(file, label), op);
    write_labeled(&y, &args.out, args.label_out.as_deref(), rec)
}

fn superpose_cmd(args: &SuperposeArgs, rec: &mut RunRecord) -> Result<()> {
    let fa = load_ecg(&args.a, rec)?;
    let fb = load_ecg(&args.b, rec)?;
    let (la, lb) = match (&args.a_label, &args.b_label) {
        (Some(pa), Some(pb)) => (Some(sidecar_label(pa, &args.a, rec)?), Some(sidecar_label(pb, &args.b, rec)?)),
        _ => (None, None),
    };
    let out = superpose(&labeled(fa, la), &labeled(fb, lb))?;
    write_labeled(&out, &args.out, args.label_out.as_deref(), rec)
}

fn label(args: &LabelArgs, rec: &mut RunRecord) -> Result<()> {
    rec.input(&args.tracks);
    let tracks = read_tracks(&args.tracks).with_context(|| format!("reading {}", args.tracks.display()))?;
    let labels = tracks_to_counts(&orient(&tracks), args.window, args.frames, args.source)?;
    write_jsonl(&labels, &args.out)?;
    let (left, right) = labels.iter().fold((0, 0), |(l, r), x| (l + x.left, r + x.right));
    eprintln!("{} window(s), {left} left and {right} right", labels.len());
    rec.primary_output(&args.out);
    Ok(())
}

fn manifest(args: &ManifestArgs, rec: &mut RunRecord) -> Result<()> {
    let mut collection = |dir: &Option<PathBuf>| -> Result<Vec<_>> {
        match dir {
            Some(d) => {
                rec.input(d);
                load_collection(d).with_context(|| format!("loading {}", d.display()))
            }
            None => Ok(Vec::new()),
        }
    };
    let strong = collection(&args.strong)?;
    let weak = collection(&args.weak)?;
    ensure!(
        strong.iter().all(|s| s.label.source == LabelSource::Strong),
        "--strong collection contains labels with another source tag"
    );
    ensure!(
        weak.iter().all(|s| s.label.source != LabelSource::Strong),
        "--weak collection contains strong labels"
    );
    rec.input(&args.splits);
    let splits = SplitAssignment::read(&args.splits).with_context(|| format!("reading {}", args.splits.display()))?;
    let m = build_manifest(&strong, &weak, &splits)?;
    write_manifest(&m, &args.out)?;
    eprintln!("wrote {} record(s) to {}", m.records.len(), args.out.display());
    rec.primary_output(&args.out);
    Ok(())
}

fn manifest_check(args: &ManifestCheckArgs, rec: &mut RunRecord) -> Result<()> {
    rec.input(&args.input);
    let m = read_manifest(&args.input)?;
    #[derive(Serialize)]
    struct Report {
        records: usize,
        split_check: echokit_core::dataset::SplitReport,
        balance: Vec<echokit_core::dataset::SplitBalance>,
    }
    let report = Report {
        records: m.records.len(),
        split_check: check_split_disjoint(&m),
        balance: class_balance(&m),
    };
    print_json(&report)?;
    if let Some(path) = &args.report {
        write_json(&report, path)?;
        rec.primary_output(path);
    }
    if !report.split_check.ok {
        let leaks: Vec<String> = report
            .split_check
            .leaks
            .iter()
            .map(|l| format!("{} in {:?}", l.clip_id, l.splits))
            .collect();
        bail!("clips appear in more than one split: {}", leaks.join("; "));
    }
    Ok(())
}

fn eval(args: &EvalArgs, rec: &mut RunRecord) -> Result<()> {
    rec.input(&args.pred);
    rec.input(&args.labels);
    let preds: Vec<Prediction> = read_jsonl(&args.pred)?;
    let labels: Vec<CountLabel> = read_jsonl(&args.labels)?;
    let report = nmae(&preds, &labels)?;
    print_json(&report)?;
    if let Some(path) = &args.report {
        write_json(&report, path)?;
        rec.primary_output(path);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SweepConfigRow {
    alpha0: f64,
    alpha1: f64,
    alpha2: f64,
    size_thresh: f64,
    #[serde(default)]
    reference_range: Option<f64>,
}

fn sweep_configs(source: &str, rec: &mut RunRecord) -> Result<Vec<PreprocessConfig>> {
    if source == "ablation" {
        return Ok(PreprocessConfig::ablation_rows().to_vec());
    }
    rec.input(source);
    let mut reader = csv::Reader::from_path(source).with_context(|| format!("reading {source}"))?;
    let configs = reader
        .deserialize::<SweepConfigRow>()
        .map(|row| {
            let row = row.with_context(|| format!("parsing {source}"))?;
            let mut c = PreprocessConfig::sweep_row(row.alpha0, row.alpha1, row.alpha2, row.size_thresh);
            if let Some(r) = row.reference_range {
                c.reference_range = r;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(!configs.is_empty(), "{source} has no config rows");
    Ok(configs)
}

fn sweep(args: &SweepArgs, rec: &mut RunRecord) -> Result<()> {
    let configs = sweep_configs(&args.configs, rec)?;
    for (i, c) in configs.iter().enumerate() {
        c.validate().with_context(|| format!("config row {i}"))?;
    }
    let paths = files_with_extension(&args.clips, "svc")?;
    ensure!(!paths.is_empty(), "no .svc clips in {}", args.clips.display());
    let scored = args.oracle || args.pred_dir.is_some();
    let clips = paths
        .par_iter()
        .map(|p| {
            let clip_id = file_stem(p)?;
            let clip = read_clip(p).with_context(|| format!("reading {}", p.display()))?;
            let labels_path = p.with_file_name(format!("{clip_id}.labels.jsonl"));
            let labels = if labels_path.is_file() {
                read_jsonl(&labels_path)?
            } else {
                ensure!(!scored, "scoring needs {}", labels_path.display());
                Vec::new()
            };
            Ok(SweepClip { clip_id, clip, labels })
        })
        .collect::<Result<Vec<_>>>()?;
    for p in &paths {
        rec.input(p);
    }

    let oracle: Vec<Prediction> = clips.iter().flat_map(|c| labels_as_predictions(&c.labels)).collect();
    let pred_dir = args.pred_dir.clone();
    let predict = move |i: usize, _: &PreprocessConfig, _: &[EchogramSlice]| -> echokit_core::Result<Option<Vec<Prediction>>> {
        if let Some(dir) = &pred_dir {
            let path = dir.join(format!("config_{i}.jsonl"));
            return if path.is_file() { read_jsonl(path).map(Some) } else { Ok(None) };
        }
        Ok(Some(oracle.clone()))
    };
    let rows = run_sweep(&clips, &configs, args.window, if scored { Some(&predict) } else { None })?;
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_sweep_csv(&rows, BufWriter::new(file))?;
    for r in &rows {
        let score = r.total_nmae.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "config {}: alphas {}/{}/{} size {} -> {} nonzero pixels, nmae {score}",
            r.config, r.alpha0, r.alpha1, r.alpha2, r.size_thresh, r.nonzero_pixels
        );
    }
    rec.primary_output(&args.out);
    Ok(())
}

fn export_png(args: &ExportPngArgs, rec: &mut RunRecord) -> Result<()> {
    let file = load_ecg(&args.input, rec)?;
    crate::png::render(&file.image)
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    rec.primary_output(&args.out);
    Ok(())
}
