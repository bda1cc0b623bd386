//! Two-stage background subtraction with connected-component gating.
//!
//! Stage one keeps pixels whose residual over the clip's mean frame exceeds
//! `alpha0`. Foreground regions of that image are labeled (8-connected) and a
//! region is kept when its area beats `size_thresh` scaled by
//! `reference_range / mean_range`. Stage two keeps a stage-one pixel when its
//! residual exceeds `alpha1` inside a kept region, or `alpha2` elsewhere.
//! Surviving pixels carry the rounded residual, not the raw intensity.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sonar_format::{mean_frame, Clip, ClipHeader, Frame, MeanFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Minimum component area (pixels) at `reference_range`.
    pub size_thresh: f64,
    /// Meters.
    pub reference_range: f64,
    /// Relaxes the `alpha0 < alpha1 < alpha2` ordering for parameter sweeps.
    #[serde(default)]
    pub sweep: bool,
}

pub const DEFAULT_REFERENCE_RANGE: f64 = 5.0;

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            alpha0: 20.0,
            alpha1: 40.0,
            alpha2: 60.0,
            size_thresh: 100.0,
            reference_range: DEFAULT_REFERENCE_RANGE,
            sweep: false,
        }
    }
}

impl PreprocessConfig {
    pub fn sweep_row(alpha0: f64, alpha1: f64, alpha2: f64, size_thresh: f64) -> Self {
        Self {
            alpha0,
            alpha1,
            alpha2,
            size_thresh,
            reference_range: DEFAULT_REFERENCE_RANGE,
            sweep: true,
        }
    }

    /// The four rows of the published threshold ablation, in order.
    pub fn ablation_rows() -> [Self; 4] {
        [
            Self::sweep_row(0.0, 0.0, 0.0, 0.0),
            Self::sweep_row(20.0, 0.0, 0.0, 0.0),
            Self::sweep_row(20.0, 40.0, 60.0, 100.0),
            Self::sweep_row(20.0, 40.0, 100.0, 120.0),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("alpha0", self.alpha0), ("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if !(0.0..=255.0).contains(&v) {
                return Err(invalid(field, format!("{v} not in [0, 255]")));
            }
        }
        if !self.sweep && !(self.alpha0 < self.alpha1 && self.alpha1 < self.alpha2) {
            return Err(invalid(
                "alpha",
                format!(
                    "need alpha0 < alpha1 < alpha2, got {} / {} / {}",
                    self.alpha0, self.alpha1, self.alpha2
                ),
            ));
        }
        if !(self.size_thresh.is_finite() && self.size_thresh >= 0.0) {
            return Err(invalid("size_thresh", format!("{} must be >= 0", self.size_thresh)));
        }
        if !(self.reference_range.is_finite() && self.reference_range > 0.0) {
            return Err(invalid(
                "reference_range",
                format!("{} must be > 0", self.reference_range),
            ));
        }
        Ok(())
    }
}

fn check_dims(frame: &Frame, mean: &MeanFrame) -> Result<()> {
    if frame.rows() != mean.rows() || frame.beams() != mean.beams() {
        return Err(invalid(
            "frame",
            format!(
                "frame is {}x{}, mean frame is {}x{}",
                frame.rows(),
                frame.beams(),
                mean.rows(),
                mean.beams()
            ),
        ));
    }
    Ok(())
}

#[inline]
fn residual_value(residual: f64) -> u8 {
    residual.clamp(0.0, 255.0).round() as u8
}

/// Keep pixels exceeding the mean frame by more than `alpha`; they store the
/// rounded residual. Everything else becomes 0.
pub fn subtract_background(frame: &Frame, mean: &MeanFrame, alpha: f64) -> Result<Frame> {
    check_dims(frame, mean)?;
    let samples = frame
        .samples()
        .iter()
        .zip(mean.values())
        .map(|(&p, &m)| {
            let r = p as f64 - m;
            if r > alpha {
                residual_value(r)
            } else {
                0
            }
        })
        .collect();
    Frame::new(frame.rows(), frame.beams(), samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMask {
    rows: usize,
    beams: usize,
    /// Component id per pixel, 0 = background. Ids run 1.. in raster order
    /// of each component's first pixel.
    labels: Vec<u32>,
    areas: Vec<usize>,
    kept: Vec<bool>,
}

impl ComponentMask {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, row: usize, beam: usize) -> u32 {
        self.labels[row * self.beams + beam]
    }

    pub fn component_count(&self) -> usize {
        self.areas.len()
    }

    /// Area of component `id` (1-based).
    pub fn area(&self, id: u32) -> usize {
        self.areas[id as usize - 1]
    }

    pub fn kept_ids(&self) -> BTreeSet<u32> {
        (1..=self.areas.len() as u32)
            .filter(|&id| self.kept[id as usize - 1])
            .collect()
    }

    #[inline]
    pub fn is_kept_at(&self, idx: usize) -> bool {
        match self.labels[idx] {
            0 => false,
            id => self.kept[id as usize - 1],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.beams)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// 8-connected labeling of the nonzero pixels of `frame`, with the
/// range-scaled size test applied per component.
pub fn connected_components(
    frame: &Frame,
    config: &PreprocessConfig,
    header: &ClipHeader,
) -> ComponentMask {
    let (rows, beams) = (frame.rows(), frame.beams());
    let px = frame.samples();
    let mut provisional = vec![0u32; rows * beams];
    let mut sets = DisjointSet::new();

    // First pass: provisional labels from the already visited neighbours
    // (W, NW, N, NE).
    for r in 0..rows {
        for b in 0..beams {
            let i = r * beams + b;
            if px[i] == 0 {
                continue;
            }
            let mut neighbours = [0u32; 4];
            if b > 0 {
                neighbours[0] = provisional[i - 1];
            }
            if r > 0 {
                let up = i - beams;
                if b > 0 {
                    neighbours[1] = provisional[up - 1];
                }
                neighbours[2] = provisional[up];
                if b + 1 < beams {
                    neighbours[3] = provisional[up + 1];
                }
            }
            let mut label = 0;
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                if label == 0 {
                    label = n;
                } else {
                    sets.union(label, n);
                }
            }
            provisional[i] = if label == 0 { sets.make() } else { label };
        }
    }

    // Second pass: resolve roots and renumber in raster order.
    let mut root_to_id = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    let mut areas: Vec<usize> = Vec::new();
    let mut row_sums: Vec<u64> = Vec::new();
    let mut labels = vec![0u32; rows * beams];
    for r in 0..rows {
        for b in 0..beams {
            let i = r * beams + b;
            if provisional[i] == 0 {
                continue;
            }
            let root = sets.find(provisional[i]) as usize;
            if root_to_id[root] == 0 {
                next += 1;
                root_to_id[root] = next;
                areas.push(0);
                row_sums.push(0);
            }
            let id = root_to_id[root];
            labels[i] = id;
            areas[id as usize - 1] += 1;
            row_sums[id as usize - 1] += r as u64;
        }
    }

    let kept = areas
        .iter()
        .zip(&row_sums)
        .map(|(&area, &row_sum)| {
            let mean_range = header.range_at_row(row_sum as f64 / area as f64);
            keep_component(area, mean_range, config)
        })
        .collect();
    ComponentMask {
        rows,
        beams,
        labels,
        areas,
        kept,
    }
}

/// Size test for a component of `area` pixels centered at `mean_range` meters.
pub fn keep_component(area: usize, mean_range: f64, config: &PreprocessConfig) -> bool {
    area as f64 > config.size_thresh * (config.reference_range / mean_range)
}

/// Full two-stage cleaning of one frame against a precomputed mean.
pub fn clean_frame(
    frame: &Frame,
    mean: &MeanFrame,
    config: &PreprocessConfig,
    header: &ClipHeader,
) -> Result<Frame> {
    let stage0 = subtract_background(frame, mean, config.alpha0)?;
    let mask = connected_components(&stage0, config, header);
    let samples = stage0
        .samples()
        .iter()
        .zip(frame.samples().iter().zip(mean.values()))
        .enumerate()
        .map(|(i, (&v, (&p, &m)))| {
            if v == 0 {
                return 0;
            }
            let r = p as f64 - m;
            let alpha = if mask.is_kept_at(i) {
                config.alpha1
            } else {
                config.alpha2
            };
            if r > alpha {
                v
            } else {
                0
            }
        })
        .collect();
    Frame::new(frame.rows(), frame.beams(), samples)
}

pub fn clean_clip(clip: &Clip, config: &PreprocessConfig) -> Result<Clip> {
    config.validate()?;
    let mean = mean_frame(clip)?;
    let frames = clip
        .frames
        .par_iter()
        .map(|f| clean_frame(f, &mean, config, &clip.header))
        .collect::<Result<Vec<_>>>()?;
    Clip::new(clip.header, frames)
}

pub fn nonzero_pixels(clip: &Clip) -> u64 {
    clip.frames
        .iter()
        .map(|f| f.samples().iter().filter(|&&v| v != 0).count() as u64)
        .sum()
}
