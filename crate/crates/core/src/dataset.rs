//! Train/val/test manifests mixing strong and weak labels.
//!
//! Split hygiene is checked at clip granularity: slices cut from one clip
//! share content, so a clip may appear in only one split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counts::{CountLabel, LabelSource};
use crate::echogram::slice_id;
use crate::error::{invalid, Error, Result};
use crate::jsonl::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub slice_id: String,
    pub path: String,
    pub clip_id: String,
    pub x_offset: u32,
    pub left: u32,
    pub right: u32,
    pub source: LabelSource,
    pub split: Split,
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

/// A slice file on disk with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSliceRef {
    pub path: PathBuf,
    pub label: CountLabel,
}

impl LabeledSliceRef {
    pub fn slice_id(&self) -> String {
        slice_id(&self.label.clip_id, self.label.x_offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClipAssignment {
    Split(Split),
    Detailed {
        split: Split,
        #[serde(default)]
        location: Option<String>,
    },
}

/// `splits.json`: clip id to split (and optionally location tag).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    #[serde(default)]
    pub default_location: Option<String>,
    pub clips: BTreeMap<String, ClipAssignment>,
}

impl SplitAssignment {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn lookup(&self, clip_id: &str) -> Result<(Split, String)> {
        let assignment = self
            .clips
            .get(clip_id)
            .ok_or_else(|| invalid("splits", format!("clip {clip_id} has no split assignment")))?;
        let (split, location) = match assignment {
            ClipAssignment::Split(s) => (*s, None),
            ClipAssignment::Detailed { split, location } => (*split, location.clone()),
        };
        let location = location
            .or_else(|| self.default_location.clone())
            .unwrap_or_default();
        Ok((split, location))
    }
}

pub fn build_manifest(
    strong: &[LabeledSliceRef],
    weak: &[LabeledSliceRef],
    splits: &SplitAssignment,
) -> Result<Manifest> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for item in strong.iter().chain(weak) {
        *counts.entry(item.slice_id()).or_default() += 1;
    }
    let mut conflicts: Vec<String> = counts
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(id, _)| id)
        .collect();
    if !conflicts.is_empty() {
        conflicts.sort();
        return Err(Error::Conflict(conflicts));
    }

    let mut records = strong
        .iter()
        .chain(weak)
        .map(|item| {
            let (split, location) = splits.lookup(&item.label.clip_id)?;
            Ok(ManifestRecord {
                slice_id: item.slice_id(),
                path: item.path.to_string_lossy().into_owned(),
                clip_id: item.label.clip_id.clone(),
                x_offset: item.label.x_offset,
                left: item.label.left,
                right: item.label.right,
                source: item.label.source,
                split,
                location,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.slice_id.cmp(&b.slice_id));
    Ok(Manifest { records })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLeak {
    pub clip_id: String,
    pub splits: Vec<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub ok: bool,
    pub leaks: Vec<SplitLeak>,
}

pub fn check_split_disjoint(manifest: &Manifest) -> SplitReport {
    let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for r in &manifest.records {
        seen.entry(&r.clip_id).or_default().insert(r.split);
    }
    let leaks: Vec<SplitLeak> = seen
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(clip, s)| SplitLeak {
            clip_id: clip.to_owned(),
            splits: s.into_iter().collect(),
        })
        .collect();
    SplitReport {
        ok: leaks.is_empty(),
        leaks,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub images: u64,
    pub left: u64,
    pub right: u64,
    pub zero_fish_images: u64,
}

impl Tally {
    fn add(&mut self, r: &ManifestRecord) {
        self.images += 1;
        self.left += r.left as u64;
        self.right += r.right as u64;
        if r.left == 0 && r.right == 0 {
            self.zero_fish_images += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBalance {
    pub split: Split,
    pub total: Tally,
    pub by_source: BTreeMap<LabelSource, Tally>,
}

/// Per split (always all three), summed counts and empty-image totals.
pub fn class_balance(manifest: &Manifest) -> Vec<SplitBalance> {
    let mut out: Vec<SplitBalance> = Split::ALL
        .iter()
        .map(|&split| SplitBalance {
            split,
            total: Tally::default(),
            by_source: BTreeMap::new(),
        })
        .collect();
    for r in &manifest.records {
        let entry = &mut out[r.split as usize];
        entry.total.add(r);
        entry.by_source.entry(r.source).or_default().add(r);
    }
    out
}

/// A directory of `*.ecg` slices plus `labels.jsonl`; every label must have
/// its slice file `<clip_id>_x<offset>.ecg`.
pub fn load_collection(dir: impl AsRef<Path>) -> Result<Vec<LabeledSliceRef>> {
    let dir = dir.as_ref();
    let labels: Vec<CountLabel> = read_jsonl(dir.join("labels.jsonl"))?;
    labels
        .into_iter()
        .map(|label| {
            let path = dir.join(format!("{}.ecg", slice_id(&label.clip_id, label.x_offset)));
            if !path.is_file() {
                return Err(invalid(
                    "slice",
                    format!("{} has no slice file at {}", slice_id(&label.clip_id, label.x_offset), path.display()),
                ));
            }
            Ok(LabeledSliceRef { path, label })
        })
        .collect()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    Ok(Manifest {
        records: read_jsonl(path)?,
    })
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(&manifest.records, path)
}
