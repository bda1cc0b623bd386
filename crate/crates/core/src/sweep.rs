//! Echogram-parameter sweeps over a fixed clip set.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::counts::{labels_as_predictions, nmae, CountLabel, Prediction};
use crate::echogram::{build_echogram, slice_echogram, EchogramSlice};
use crate::error::Result;
use crate::preprocess::PreprocessConfig;
use crate::sonar_format::Clip;

#[derive(Debug, Clone)]
pub struct SweepClip {
    pub clip_id: String,
    pub clip: Clip,
    /// Ground-truth window labels; only needed when scoring predictions.
    pub labels: Vec<CountLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub size_thresh: f64,
    pub reference_range: f64,
    pub n_clips: usize,
    pub n_slices: usize,
    pub nonzero_pixels: u64,
    pub total_pixels: u64,
    pub nonzero_fraction: f64,
    /// Empty when no predictions were supplied or the target total is zero.
    pub total_nmae: Option<f64>,
}

/// Source of predictions for one sweep configuration, given its slices.
/// Returning `None` leaves the row unscored.
pub type PredictFn<'a> =
    dyn Fn(usize, &PreprocessConfig, &[EchogramSlice]) -> Result<Option<Vec<Prediction>>> + Sync + 'a;

/// Scores every configuration with the ground-truth labels themselves.
pub fn oracle_predictions(clips: &[SweepClip]) -> Vec<Prediction> {
    let labels: Vec<CountLabel> = clips.iter().flat_map(|c| c.labels.iter().cloned()).collect();
    labels_as_predictions(&labels)
}

pub fn run_sweep(
    clips: &[SweepClip],
    configs: &[PreprocessConfig],
    window: u32,
    predict: Option<&PredictFn<'_>>,
) -> Result<Vec<SweepRow>> {
    let labels: Vec<CountLabel> = clips.iter().flat_map(|c| c.labels.iter().cloned()).collect();
    configs
        .iter()
        .enumerate()
        .map(|(index, config)| {
            config.validate()?;
            let per_clip = clips
                .par_iter()
                .map(|c| {
                    let e = build_echogram(&c.clip, config, &c.clip_id)?;
                    let nz = e.image.nonzero_pixels() as u64;
                    let total = (e.image.height() * e.image.width()) as u64;
                    Ok((slice_echogram(&e, window, window)?, nz, total))
                })
                .collect::<Result<Vec<_>>>()?;
            let nonzero_pixels = per_clip.iter().map(|p| p.1).sum::<u64>();
            let total_pixels = per_clip.iter().map(|p| p.2).sum::<u64>();
            let slices: Vec<EchogramSlice> = per_clip.into_iter().flat_map(|p| p.0).collect();
            let total_nmae = match predict {
                Some(f) => match f(index, config, &slices)? {
                    Some(preds) => nmae(&preds, &labels)?.total_nmae,
                    None => None,
                },
                None => None,
            };
            Ok(SweepRow {
                config: index,
                alpha0: config.alpha0,
                alpha1: config.alpha1,
                alpha2: config.alpha2,
                size_thresh: config.size_thresh,
                reference_range: config.reference_range,
                n_clips: clips.len(),
                n_slices: slices.len(),
                nonzero_pixels,
                total_pixels,
                nonzero_fraction: if total_pixels == 0 {
                    0.0
                } else {
                    nonzero_pixels as f64 / total_pixels as f64
                },
                total_nmae,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
