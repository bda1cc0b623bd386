//! Deterministic synthetic sonar clips with known fish trajectories.
//!
//! Fish are anisotropic Gaussian blobs moving linearly across the polar
//! grid over a constant background with seeded Gaussian pixel noise. Labels
//! come from the true trajectories, never from rendered pixels.

use rand::{Rng, RngCore, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::counts::{orient, tracks_to_counts, CountLabel, LabelSource, Track, TrackPoint, TrackSet};
use crate::error::{invalid, Result};
use crate::sonar_format::{Clip, ClipHeader, Frame, UpstreamSide};

/// Blob extent rendered around each center, in sigmas.
const BLOB_EXTENT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFish {
    pub entry_frame: u32,
    /// Beams per frame; positive is rightward.
    pub speed: f64,
    pub entry_beam: f64,
    pub range_row: f64,
    /// Rows per frame.
    pub range_drift: f64,
    pub peak_intensity: f64,
    pub blob_sigma_rows: f64,
    pub blob_sigma_beams: f64,
}

impl SynthFish {
    /// Blob center `(row, beam)` at `frame`, or `None` before entry.
    pub fn center(&self, frame: u32) -> Option<(f64, f64)> {
        let dt = frame.checked_sub(self.entry_frame)? as f64;
        Some((
            self.range_row + self.range_drift * dt,
            self.entry_beam + self.speed * dt,
        ))
    }

    fn in_view(&self, frame: u32, header: &ClipHeader) -> Option<(f64, f64)> {
        let (row, beam) = self.center(frame)?;
        let inside = (0.0..=(header.rows() - 1) as f64).contains(&row)
            && (0.0..=(header.beams() - 1) as f64).contains(&beam);
        inside.then_some((row, beam))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub clip_id: String,
    pub header: ClipHeader,
    pub fish: Vec<SynthFish>,
    pub background_level: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Label window width in frames.
    pub window: u32,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        if !(0.0..=255.0).contains(&self.background_level) {
            return Err(invalid("background_level", "must lie in [0, 255]"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", "must be finite and >= 0"));
        }
        for (i, f) in self.fish.iter().enumerate() {
            if !(f.peak_intensity > 0.0 && f.peak_intensity <= 255.0) {
                return Err(invalid("peak_intensity", format!("fish {i}: not in (0, 255]")));
            }
            if !(f.blob_sigma_rows > 0.0 && f.blob_sigma_beams > 0.0) {
                return Err(invalid("blob_sigma", format!("fish {i}: sigmas must be > 0")));
            }
            let finite = [f.speed, f.entry_beam, f.range_row, f.range_drift]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(invalid("fish", format!("fish {i}: non-finite motion parameter")));
            }
        }
        let min_peak = self
            .fish
            .iter()
            .map(|f| f.peak_intensity)
            .fold(f64::INFINITY, f64::min);
        if self.background_level + 3.0 * self.noise_sigma >= min_peak {
            return Err(invalid(
                "noise_sigma",
                format!(
                    "background {} + 3 * sigma {} must stay below the dimmest fish peak {min_peak}",
                    self.background_level, self.noise_sigma
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub clip: Clip,
    pub tracks: TrackSet,
    pub labels: Vec<CountLabel>,
    /// Fish that never enter the field of view; they have no track.
    pub warnings: Vec<String>,
}

pub fn synth_clip(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let header = config.header;
    let (rows, beams) = (header.rows(), header.beams());

    let mut tracks = Vec::new();
    let mut warnings = Vec::new();
    for (i, fish) in config.fish.iter().enumerate() {
        let points: Vec<TrackPoint> = (0..header.frame_count)
            .filter_map(|t| {
                fish.in_view(t, &header).map(|(row, beam)| TrackPoint {
                    frame: t,
                    x: beam / (beams - 1) as f64,
                    y: if rows > 1 { row / (rows - 1) as f64 } else { 0.0 },
                })
            })
            .collect();
        if points.is_empty() {
            warnings.push(format!("fish{i} never enters the field of view"));
        } else {
            tracks.push(Track {
                id: format!("fish{i}"),
                points,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let mut canvas = vec![0.0f64; rows * beams];
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for t in 0..header.frame_count {
        if config.noise_sigma > 0.0 {
            for v in canvas.iter_mut() {
                *v = config.background_level + noise.sample(&mut rng);
            }
        } else {
            canvas.fill(config.background_level);
        }
        for fish in &config.fish {
            if let Some((row, beam)) = fish.in_view(t, &header) {
                splat(&mut canvas, rows, beams, fish, row, beam);
            }
        }
        let samples = canvas.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect();
        frames.push(Frame::new(rows, beams, samples)?);
    }

    let tracks = TrackSet {
        clip_id: config.clip_id.clone(),
        upstream_side: header.upstream_side,
        tracks,
    };
    let labels = tracks_to_counts(
        &orient(&tracks),
        config.window,
        header.frame_count,
        LabelSource::Synthetic,
    )?;
    Ok(SynthOutput {
        clip: Clip::new(header, frames)?,
        tracks,
        labels,
        warnings,
    })
}

fn splat(canvas: &mut [f64], rows: usize, beams: usize, fish: &SynthFish, row: f64, beam: f64) {
    let (sr, sb) = (fish.blob_sigma_rows, fish.blob_sigma_beams);
    let r0 = (row - BLOB_EXTENT * sr).floor().max(0.0) as usize;
    let r1 = ((row + BLOB_EXTENT * sr).ceil() as usize).min(rows - 1);
    let b0 = (beam - BLOB_EXTENT * sb).floor().max(0.0) as usize;
    let b1 = ((beam + BLOB_EXTENT * sb).ceil() as usize).min(beams - 1);
    for r in r0..=r1 {
        let dr = (r as f64 - row) / sr;
        for b in b0..=b1 {
            let db = (b as f64 - beam) / sb;
            canvas[r * beams + b] += fish.peak_intensity * (-0.5 * (dr * dr + db * db)).exp();
        }
    }
}

/// Geometry shared by every clip of a generated suite.
pub fn suite_header(frame_count: u32, upstream_side: UpstreamSide) -> ClipHeader {
    ClipHeader {
        frame_count,
        range_samples: 64,
        beam_count: 32,
        frame_rate: 10.0,
        window_start: 2.0,
        window_end: 12.0,
        beam_fov: 28.0,
        upstream_side,
    }
}

pub const SUITE_WINDOW: u32 = 200;
pub const SUITE_BACKGROUND: f64 = 30.0;
pub const SUITE_NOISE_SIGMA: f64 = 6.0;

/// Varied scenarios: 0-8 fish entering per window, both directions, assorted
/// ranges, speeds and blob sizes, plus occasional loiterers that may never
/// cross the centerline.
pub fn synth_suite(n_clips: usize, seed: u64) -> Result<Vec<SynthOutput>> {
    if n_clips == 0 {
        return Err(invalid("n_clips", "must be at least 1"));
    }
    // Configs are drawn sequentially so the suite does not depend on how
    // rendering is scheduled.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<SynthConfig> = (0..n_clips)
        .map(|i| suite_config(&mut rng, format!("clip_{i:03}")))
        .collect();
    configs.par_iter().map(synth_clip).collect()
}

pub fn suite_config(rng: &mut ChaCha8Rng, clip_id: String) -> SynthConfig {
    let frame_count = [400, 500, 600][rng.random_range(0..3)];
    let side = if rng.random_bool(0.5) {
        UpstreamSide::Right
    } else {
        UpstreamSide::Left
    };
    let header = suite_header(frame_count, side);
    let last_beam = (header.beams() - 1) as f64;
    let rows = header.rows() as f64;

    let mut fish = Vec::new();
    for w in 0..frame_count.div_ceil(SUITE_WINDOW) {
        let start = w * SUITE_WINDOW;
        let end = (start + SUITE_WINDOW).min(frame_count);
        for _ in 0..rng.random_range(0..=8) {
            let upstream = rng.random_bool(0.8);
            // Raw-image direction of travel.
            let rightward = upstream == (side == UpstreamSide::Right);
            let loiter = rng.random_bool(0.1);
            let (entry_beam, speed) = if loiter {
                (
                    rng.random_range(0.1..0.35) * last_beam,
                    rng.random_range(0.0..0.03),
                )
            } else {
                (
                    rng.random_range(0.0..0.15) * last_beam,
                    rng.random_range(0.15..0.5),
                )
            };
            let (entry_beam, speed) = if rightward {
                (entry_beam, speed)
            } else {
                (last_beam - entry_beam, -speed)
            };
            fish.push(SynthFish {
                entry_frame: rng.random_range(start..end),
                speed,
                entry_beam,
                range_row: rng.random_range(0.1..0.9) * rows,
                range_drift: rng.random_range(-0.03..0.03),
                peak_intensity: rng.random_range(110.0..220.0),
                blob_sigma_rows: rng.random_range(2.0..4.0),
                blob_sigma_beams: rng.random_range(1.0..2.0),
            });
        }
    }
    SynthConfig {
        clip_id,
        header,
        fish,
        background_level: SUITE_BACKGROUND,
        noise_sigma: SUITE_NOISE_SIGMA,
        seed: rng.next_u64(),
        window: SUITE_WINDOW,
    }
}
