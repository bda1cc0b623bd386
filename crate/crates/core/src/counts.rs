//! Track-to-count conversion, upstream orientation and nMAE scoring.
//!
//! A track counts as a right (upstream) or left (downstream) crossing only
//! when its first and last points lie strictly on opposite sides of the
//! vertical centerline `x = 0.5`. The crossing is credited to the window
//! holding the frame at which the track first reaches the far side, found by
//! linear interpolation between consecutive points.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sonar_format::UpstreamSide;

const CENTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: u32,
    /// Normalized lateral position in [0, 1].
    pub x: f64,
    /// Normalized range position in [0, 1].
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub clip_id: String,
    pub upstream_side: UpstreamSide,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Strong,
    Weak,
    Synthetic,
}

/// Per-window (left, right) counts. After orientation, right is upstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountLabel {
    pub clip_id: String,
    pub x_offset: u32,
    pub left: u32,
    pub right: u32,
    pub source: LabelSource,
}

impl CountLabel {
    pub fn total(&self) -> u32 {
        self.left + self.right
    }
}

/// Also reads label records (`left`/`right`), so a label file can be scored
/// as its own prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub x_offset: u32,
    #[serde(alias = "left")]
    pub left_pred: f64,
    #[serde(alias = "right")]
    pub right_pred: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub direction: Direction,
    /// Interpolated frame at which the track first reaches the far side.
    pub frame: f64,
}

impl Track {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(invalid("track", format!("track {} has no points", self.id)));
        }
        if self.points.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(invalid(
                "track",
                format!("track {} frames are not strictly increasing", self.id),
            ));
        }
        if let Some(p) = self
            .points
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y))
        {
            return Err(invalid(
                "track",
                format!("track {} point at frame {} lies outside [0,1]", self.id, p.frame),
            ));
        }
        Ok(())
    }

    /// Centerline crossing of this track, if it counts.
    pub fn crossing(&self) -> Option<Crossing> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        let direction = if first.x < CENTER && last.x > CENTER {
            Direction::Right
        } else if first.x > CENTER && last.x < CENTER {
            Direction::Left
        } else {
            return None;
        };
        let reached = |x: f64| match direction {
            Direction::Right => x >= CENTER,
            Direction::Left => x <= CENTER,
        };
        // points[0] is strictly on the start side, so j >= 1.
        let j = self.points.iter().position(|p| reached(p.x))?;
        let (a, b) = (self.points[j - 1], self.points[j]);
        let t = (CENTER - a.x) / (b.x - a.x);
        let frame = a.frame as f64 + t * (b.frame as f64 - a.frame as f64);
        Some(Crossing { direction, frame })
    }
}

impl TrackSet {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for track in &self.tracks {
            track.validate()?;
            if !seen.insert(track.id.as_str()) {
                return Err(invalid("track", format!("duplicate track id {}", track.id)));
            }
        }
        Ok(())
    }

    /// Mirror the scene laterally: `x -> 1 - x` and the upstream side flips.
    pub fn mirrored(&self) -> TrackSet {
        let mut out = self.clone();
        for p in out.tracks.iter_mut().flat_map(|t| t.points.iter_mut()) {
            p.x = 1.0 - p.x;
        }
        out.upstream_side = self.upstream_side.flipped();
        out
    }
}

/// Normalize so that rightward motion is upstream.
pub fn orient(tracks: &TrackSet) -> TrackSet {
    match tracks.upstream_side {
        UpstreamSide::Right => tracks.clone(),
        UpstreamSide::Left => tracks.mirrored(),
    }
}

pub fn window_count(total_frames: u32, window: u32) -> u32 {
    total_frames.div_ceil(window)
}

/// One label per window tiling `[0, total_frames)`, including empty windows.
pub fn tracks_to_counts(
    tracks: &TrackSet,
    window: u32,
    total_frames: u32,
    source: LabelSource,
) -> Result<Vec<CountLabel>> {
    if tracks.upstream_side != UpstreamSide::Right {
        return Err(Error::Precondition(format!(
            "track set for {} is not oriented (upstream side is left)",
            tracks.clip_id
        )));
    }
    if window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    if total_frames == 0 {
        return Err(invalid("frames", "must be at least 1"));
    }
    tracks.validate()?;

    let mut labels: Vec<CountLabel> = (0..window_count(total_frames, window))
        .map(|w| CountLabel {
            clip_id: tracks.clip_id.clone(),
            x_offset: w * window,
            left: 0,
            right: 0,
            source,
        })
        .collect();
    for track in &tracks.tracks {
        let Some(crossing) = track.crossing() else {
            continue;
        };
        if crossing.frame >= total_frames as f64 {
            return Err(Error::Precondition(format!(
                "track {} crosses at frame {} beyond clip length {total_frames}",
                track.id, crossing.frame
            )));
        }
        let label = &mut labels[(crossing.frame / window as f64).floor() as usize];
        match crossing.direction {
            Direction::Left => label.left += 1,
            Direction::Right => label.right += 1,
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_clips: usize,
    /// `None` when the total target count is zero.
    pub total_nmae: Option<f64>,
    /// Downstream.
    pub left_nmae: Option<f64>,
    /// Upstream.
    pub right_nmae: Option<f64>,
    pub total_error: f64,
    pub total_target: u64,
    pub left_error: f64,
    pub left_target: u64,
    pub right_error: f64,
    pub right_target: u64,
}

fn ratio(error: f64, target: u64) -> Option<f64> {
    (target > 0).then(|| error / target as f64)
}

/// Normalized mean absolute error over the prediction/label join.
///
/// Every label needs exactly one prediction with the same `(clip_id,
/// x_offset)`; predictions without a label are ignored.
pub fn nmae(predictions: &[Prediction], labels: &[CountLabel]) -> Result<EvalReport> {
    let mut by_key: HashMap<(&str, u32), &Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !(p.left_pred.is_finite() && p.right_pred.is_finite())
            || p.left_pred < 0.0
            || p.right_pred < 0.0
        {
            return Err(invalid(
                "prediction",
                format!("{}@{} has a negative or non-finite count", p.clip_id, p.x_offset),
            ));
        }
        if by_key.insert((&p.clip_id, p.x_offset), p).is_some() {
            return Err(Error::Join(format!(
                "duplicate prediction for {}@{}",
                p.clip_id, p.x_offset
            )));
        }
    }

    let mut seen = std::collections::HashSet::with_capacity(labels.len());
    let (mut left_error, mut right_error) = (0.0f64, 0.0f64);
    let (mut left_target, mut right_target) = (0u64, 0u64);
    for label in labels {
        if !seen.insert((label.clip_id.as_str(), label.x_offset)) {
            return Err(Error::Join(format!(
                "duplicate label for {}@{}",
                label.clip_id, label.x_offset
            )));
        }
        let p = by_key.get(&(label.clip_id.as_str(), label.x_offset)).ok_or_else(|| {
            Error::Join(format!("missing prediction for {}@{}", label.clip_id, label.x_offset))
        })?;
        left_error += (p.left_pred - label.left as f64).abs();
        right_error += (p.right_pred - label.right as f64).abs();
        left_target += label.left as u64;
        right_target += label.right as u64;
    }
    let total_error = left_error + right_error;
    let total_target = left_target + right_target;
    Ok(EvalReport {
        n_clips: labels.len(),
        total_nmae: ratio(total_error, total_target),
        left_nmae: ratio(left_error, left_target),
        right_nmae: ratio(right_error, right_target),
        total_error,
        total_target,
        left_error,
        left_target,
        right_error,
        right_target,
    })
}

/// Labels used as their own predictions.
pub fn labels_as_predictions(labels: &[CountLabel]) -> Vec<Prediction> {
    labels
        .iter()
        .map(|l| Prediction {
            clip_id: l.clip_id.clone(),
            x_offset: l.x_offset,
            left_pred: l.left as f64,
            right_pred: l.right as f64,
        })
        .collect()
}

/// Sum of (left, right) per clip id.
pub fn clip_totals(labels: &[CountLabel]) -> BTreeMap<String, (u64, u64)> {
    let mut out = BTreeMap::new();
    for l in labels {
        let e = out.entry(l.clip_id.clone()).or_insert((0, 0));
        e.0 += l.left as u64;
        e.1 += l.right as u64;
    }
    out
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<TrackSet> {
    let set: TrackSet = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
    set.validate()?;
    Ok(set)
}

pub fn write_tracks(tracks: &TrackSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, tracks)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
