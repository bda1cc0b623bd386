use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echokit_core::echogram::read_ecg;
use echokit_core::jsonl::read_jsonl;
use echokit_core::{read_clip, CountLabel};

fn echokit<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_echokit"))
        .args(args)
        .env_remove("ECHOKIT_JOBS")
        .output()
        .expect("spawn echokit")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn suite(dir: &Path, n: u32, seed: u64) -> PathBuf {
    let out = dir.join("suite");
    ok(echokit(["synth", "--suite", &n.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]));
    out
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(echokit(["frobnicate"]).status.code(), Some(2));
}

#[test]
fn threshold_ordering_violation_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let clips = suite(tmp.path(), 1, 3);
    let out = echokit([
        "echogram", "--in", p(&clips), "--out", p(&tmp.path().join("e")), "--alpha0", "50", "--alpha1", "40",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha0 < alpha1 < alpha2"));
    assert!(!tmp.path().join("e").exists(), "no work before validation");
}

#[test]
fn zero_jobs_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_echokit"))
        .args(["eval", "--pred", "x", "--labels", "y"])
        .env("ECHOKIT_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_pipeline_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let clips = suite(tmp.path(), 3, 11);
    let ecg = tmp.path().join("ecg");
    ok(echokit(["echogram", "--in", p(&clips), "--out", p(&ecg)]));

    let mut all_labels: Vec<CountLabel> = Vec::new();
    for id in ["clip_000", "clip_001", "clip_002"] {
        let frames = read_clip(clips.join(format!("{id}.svc"))).unwrap().header.frame_count;
        let slices = tmp.path().join(format!("slices_{id}"));
        ok(echokit(["slice", "--in", p(&ecg.join(format!("{id}.ecg"))), "--out", p(&slices)]));
        let labels_path = tmp.path().join(format!("{id}.labels.jsonl"));
        ok(echokit([
            "label",
            "--tracks",
            p(&clips.join(format!("{id}.tracks.json"))),
            "--frames",
            &frames.to_string(),
            "--source",
            "synthetic",
            "--out",
            p(&labels_path),
        ]));
        let labels: Vec<CountLabel> = read_jsonl(&labels_path).unwrap();
        let generated: Vec<CountLabel> = read_jsonl(clips.join(format!("{id}.labels.jsonl"))).unwrap();
        assert_eq!(labels, generated);
        for l in &labels {
            let slice = slices.join(format!("{id}_x{:06}.ecg", l.x_offset));
            assert_eq!(read_ecg(&slice).unwrap().image.width(), 200, "{}", slice.display());
        }
        assert_eq!(fs::read_dir(&slices).unwrap().count(), labels.len());
        all_labels.extend(labels);
    }
    let labels_path = tmp.path().join("labels.jsonl");
    echokit_core::jsonl::write_jsonl(&all_labels, &labels_path).unwrap();
    let report_path = tmp.path().join("report.json");
    let out = ok(echokit(["eval", "--pred", p(&labels_path), "--labels", p(&labels_path), "--report", p(&report_path)]));
    let report = json(&out);
    assert_eq!(report["total_nmae"], 0.0);
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(saved, report);
    for key in ["n_clips", "total_nmae", "left_nmae", "right_nmae", "total_error", "total_target"] {
        assert!(saved.get(key).is_some(), "report lacks {key}");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("report.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["subcommand"], "eval");
    assert!(meta["duration_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn eval_reports_missing_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = tmp.path().join("l.jsonl");
    let preds = tmp.path().join("p.jsonl");
    fs::write(
        &labels,
        "{\"clip_id\":\"a\",\"x_offset\":0,\"left\":0,\"right\":2,\"source\":\"strong\"}\n\
         {\"clip_id\":\"a\",\"x_offset\":200,\"left\":1,\"right\":0,\"source\":\"strong\"}\n",
    )
    .unwrap();
    fs::write(&preds, "{\"clip_id\":\"a\",\"x_offset\":0,\"left_pred\":0.0,\"right_pred\":1.0}\n").unwrap();
    let out = echokit(["eval", "--pred", p(&preds), "--labels", p(&labels)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a@200"));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let clips = suite(tmp.path(), 4, 5);
    let mut runs = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.path().join(format!("ecg{jobs}"));
        ok(echokit(["--jobs", jobs, "echogram", "--in", p(&clips), "--out", p(&out)]));
        let csv = tmp.path().join(format!("sweep{jobs}.csv"));
        ok(echokit(["sweep", "--jobs", jobs, "--clips", p(&clips), "--out", p(&csv)]));
        runs.push((out, csv));
    }
    for name in ["clip_000.ecg", "clip_001.ecg", "clip_002.ecg", "clip_003.ecg"] {
        assert_eq!(fs::read(runs[0].0.join(name)).unwrap(), fs::read(runs[1].0.join(name)).unwrap());
    }
    assert_eq!(fs::read(&runs[0].1).unwrap(), fs::read(&runs[1].1).unwrap());

    let again = tmp.path().join("again");
    ok(echokit(["synth", "--suite", "4", "--seed", "5", "--out", p(&again)]));
    for name in ["clip_000.svc", "clip_003.tracks.json", "clip_002.labels.jsonl"] {
        assert_eq!(fs::read(clips.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }
}

#[test]
fn synth_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    ok(echokit(["synth", "--config", p(&configs_dir().join("single_fish.toml")), "--out", p(tmp.path())]));
    let labels: Vec<CountLabel> = read_jsonl(tmp.path().join("single_fish.labels.jsonl")).unwrap();
    assert_eq!(labels.len(), 2);
    assert_eq!((labels[0].left, labels[0].right), (0, 1));
    assert_eq!(labels[1].total(), 0);
}

fn one_slice(tmp: &Path) -> (PathBuf, PathBuf) {
    let clips = suite(tmp, 1, 21);
    let ecg = tmp.join("clip.ecg");
    ok(echokit(["echogram", "--in", p(&clips.join("clip_000.svc")), "--out", p(&ecg)]));
    let slices = tmp.join("slices");
    ok(echokit(["slice", "--in", p(&ecg), "--clip-id", "clip_000", "--out", p(&slices)]));
    (slices.join("clip_000_x000000.ecg"), clips.join("clip_000.labels.jsonl"))
}

#[test]
fn augment_with_label_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let (slice, labels) = one_slice(tmp.path());
    let original: Vec<CountLabel> = read_jsonl(&labels).unwrap();

    let flipped = tmp.path().join("h.ecg");
    let flipped_label = tmp.path().join("h.jsonl");
    ok(echokit([
        "augment", "--op", "hflip", "--in", p(&slice), "--out", p(&flipped), "--label-in", p(&labels), "--label-out",
        p(&flipped_label),
    ]));
    let l: Vec<CountLabel> = read_jsonl(&flipped_label).unwrap();
    assert_eq!((l[0].left, l[0].right), (original[0].right, original[0].left));

    let once = tmp.path().join("r1.ecg");
    let twice = tmp.path().join("r2.ecg");
    ok(echokit(["augment", "--op", "rhflip", "--in", p(&slice), "--out", p(&once)]));
    ok(echokit(["augment", "--op", "rhflip", "--in", p(&once), "--out", p(&twice)]));
    assert_eq!(fs::read(&slice).unwrap(), fs::read(&twice).unwrap());
    assert_ne!(fs::read(&slice).unwrap(), fs::read(&once).unwrap());

    let bad = echokit(["augment", "--op", "diagonal", "--in", p(&slice), "--out", p(&once)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn superpose_adds_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (slice, clip_labels) = one_slice(tmp.path());
    // Single-record sidecar: the flipped file's name carries no slice id.
    let first: Vec<CountLabel> = read_jsonl::<CountLabel>(&clip_labels).unwrap().into_iter().take(1).collect();
    let labels = tmp.path().join("first.jsonl");
    echokit_core::jsonl::write_jsonl(&first, &labels).unwrap();
    let v = tmp.path().join("v.ecg");
    ok(echokit(["augment", "--op", "vflip", "--in", p(&slice), "--out", p(&v)]));
    let out = tmp.path().join("s.ecg");
    let out_label = tmp.path().join("s.jsonl");
    ok(echokit([
        "superpose", "--a", p(&slice), "--b", p(&v), "--out", p(&out), "--a-label", p(&labels), "--b-label",
        p(&labels), "--label-out", p(&out_label),
    ]));
    let original: Vec<CountLabel> = read_jsonl(&labels).unwrap();
    let summed: Vec<CountLabel> = read_jsonl(&out_label).unwrap();
    assert_eq!(summed[0].left, 2 * original[0].left);
    assert_eq!(summed[0].right, 2 * original[0].right);
    let (a, b, s) = (read_ecg(&slice).unwrap(), read_ecg(&v).unwrap(), read_ecg(&out).unwrap());
    for i in 0..a.image.intensity().len() {
        assert_eq!(s.image.intensity()[i], a.image.intensity()[i].max(b.image.intensity()[i]));
    }
}

fn write_collection(dir: &Path, src: &Path, clip: &str, source: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::copy(src, dir.join(format!("{clip}_x000000.ecg"))).unwrap();
    fs::write(
        dir.join("labels.jsonl"),
        format!("{{\"clip_id\":\"{clip}\",\"x_offset\":0,\"left\":1,\"right\":2,\"source\":\"{source}\"}}\n"),
    )
    .unwrap();
}

#[test]
fn manifest_and_split_check() {
    let tmp = tempfile::tempdir().unwrap();
    let (slice, _) = one_slice(tmp.path());
    let strong = tmp.path().join("strong");
    let weak = tmp.path().join("weak");
    write_collection(&strong, &slice, "a", "strong");
    write_collection(&weak, &slice, "b", "weak");
    let splits = tmp.path().join("splits.json");
    fs::write(&splits, r#"{"default_location": "KL", "clips": {"a": "train", "b": {"split": "val", "location": "KR"}}}"#)
        .unwrap();
    let manifest = tmp.path().join("m.jsonl");
    ok(echokit([
        "manifest", "--strong", p(&strong), "--weak", p(&weak), "--splits", p(&splits), "--out", p(&manifest),
    ]));
    let text = fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"location\":\"KR\""));

    let report = json(&ok(echokit(["manifest-check", "--in", p(&manifest)])));
    assert_eq!(report["split_check"]["ok"], true);
    assert_eq!(report["balance"][0]["total"]["right"], 2);

    let leaky = tmp.path().join("leaky.jsonl");
    let extra = text
        .lines()
        .next()
        .unwrap()
        .replace("x000000", "x000200")
        .replace("\"x_offset\":0", "\"x_offset\":200")
        .replace("\"train\"", "\"test\"");
    fs::write(&leaky, format!("{text}{extra}\n")).unwrap();
    let out = echokit(["manifest-check", "--in", p(&leaky)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a in"));

    let clash = echokit(["manifest", "--strong", p(&strong), "--weak", p(&strong), "--splits", p(&splits), "--out", p(&manifest)]);
    assert_eq!(clash.status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_config() {
    let tmp = tempfile::tempdir().unwrap();
    let clips = suite(tmp.path(), 2, 8);
    let csv = tmp.path().join("sweep.csv");
    ok(echokit(["sweep", "--clips", p(&clips), "--oracle", "--out", p(&csv)]));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.0")));

    let custom = tmp.path().join("custom.csv");
    ok(echokit([
        "sweep", "--clips", p(&clips), "--configs", p(&configs_dir().join("thresholds.csv")), "--out", p(&custom),
    ]));
    let text = fs::read_to_string(&custom).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')), "unscored rows leave nmae empty");

    let meta: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("custom.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["subcommand"], "sweep");
    assert_eq!(meta["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn export_png_has_echogram_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let (slice, _) = one_slice(tmp.path());
    let png = tmp.path().join("s.png");
    ok(echokit(["export-png", "--in", p(&slice), "--out", p(&png)]));
    let img = image::open(&png).unwrap();
    let ecg = read_ecg(&slice).unwrap();
    assert_eq!((img.width() as usize, img.height() as usize), (ecg.image.width(), ecg.image.height()));
}
