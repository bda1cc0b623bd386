//! Brute-force reference implementations and random instance generators
//! shared by the integration tests. Nothing here calls the library's
//! cleaning or collapsing code.

#![allow(dead_code)]

use std::collections::VecDeque;

use echokit_core::sonar_format::{Clip, ClipHeader, Frame, UpstreamSide};
use echokit_core::PreprocessConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_header<R: Rng>(rng: &mut R, frames: u32, rows: u32, beams: u32) -> ClipHeader {
    let start = rng.random_range(0.5f32..6.0);
    ClipHeader {
        frame_count: frames,
        range_samples: rows,
        beam_count: beams,
        frame_rate: rng.random_range(1.0f32..15.0),
        window_start: start,
        window_end: start + rng.random_range(1.0f32..20.0),
        beam_fov: rng.random_range(10.0f32..40.0),
        upstream_side: if rng.random_bool(0.5) {
            UpstreamSide::Left
        } else {
            UpstreamSide::Right
        },
    }
}

/// Pixels drawn from a coarse palette so that ties and exact threshold hits
/// are common, mixed with uniform bytes.
pub fn random_pixel<R: Rng>(rng: &mut R) -> u8 {
    const PALETTE: [u8; 6] = [0, 0, 40, 90, 160, 255];
    if rng.random_bool(0.6) {
        PALETTE[rng.random_range(0..PALETTE.len())]
    } else {
        rng.random()
    }
}

pub fn random_clip<R: Rng>(rng: &mut R, frames: u32, rows: u32, beams: u32) -> Clip {
    let header = random_header(rng, frames, rows, beams);
    let n = (rows * beams) as usize;
    let frames = (0..frames)
        .map(|_| Frame::new(rows as usize, beams as usize, (0..n).map(|_| random_pixel(rng)).collect()).unwrap())
        .collect();
    Clip::new(header, frames).unwrap()
}

/// Either an ordered config or one of the relaxed sweep rows.
pub fn random_config(rng: &mut ChaCha8Rng, reference_range: f64) -> PreprocessConfig {
    if rng.random_bool(0.2) {
        let rows = PreprocessConfig::ablation_rows();
        let mut c = rows[rng.random_range(0..rows.len())].clone();
        c.size_thresh = rng.random_range(0.0..20.0);
        c.reference_range = reference_range;
        return c;
    }
    let alpha0 = if rng.random_bool(0.5) {
        rng.random_range(0..80) as f64
    } else {
        rng.random_range(0.0..80.0)
    };
    let alpha1 = alpha0 + rng.random_range(1..60) as f64;
    let alpha2 = alpha1 + rng.random_range(1..60) as f64;
    PreprocessConfig {
        alpha0,
        alpha1,
        alpha2,
        size_thresh: rng.random_range(0..25) as f64,
        reference_range,
        sweep: false,
    }
}

/// Per-pixel mean over frames.
pub fn oracle_mean(clip: &Clip) -> Vec<f64> {
    let n = clip.frames[0].samples().len();
    let mut sums = vec![0.0f64; n];
    for f in &clip.frames {
        for (s, &v) in sums.iter_mut().zip(f.samples()) {
            *s += v as f64;
        }
    }
    sums.iter().map(|s| s / clip.frames.len() as f64).collect()
}

/// 8-connected components of `mask` by breadth-first flood fill, each as a
/// list of pixel indices.
pub fn flood_fill_components(mask: &[bool], rows: usize, beams: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (r, b) = ((i / beams) as i64, (i % beams) as i64);
            for dr in -1..=1 {
                for db in -1..=1 {
                    let (nr, nb) = (r + dr, b + db);
                    if nr < 0 || nb < 0 || nr >= rows as i64 || nb >= beams as i64 {
                        continue;
                    }
                    let j = nr as usize * beams + nb as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Keep decision for one component: area above the size threshold scaled
/// by reference range over the component's mean bin-center range.
pub fn oracle_keep(component: &[usize], beams: usize, header: &ClipHeader, config: &PreprocessConfig) -> bool {
    let area = component.len();
    let row_sum: u64 = component.iter().map(|&i| (i / beams) as u64).sum();
    let start = header.window_start as f64;
    let span = header.window_end as f64 - start;
    let mean_range = start + (row_sum as f64 / area as f64 + 0.5) * span / header.range_samples as f64;
    area as f64 > config.size_thresh * (config.reference_range / mean_range)
}

fn residual_byte(r: f64) -> u8 {
    r.clamp(0.0, 255.0).round() as u8
}

/// Stage-0 output of one frame: rounded residual where it exceeds `alpha`.
pub fn oracle_subtract(frame: &[u8], mean: &[f64], alpha: f64) -> Vec<u8> {
    frame
        .iter()
        .zip(mean)
        .map(|(&p, &m)| {
            let r = p as f64 - m;
            if r > alpha {
                residual_byte(r)
            } else {
                0
            }
        })
        .collect()
}

/// Per-pixel "inside a kept component" flags for a stage-0 frame.
pub fn oracle_kept_mask(stage0: &[u8], header: &ClipHeader, config: &PreprocessConfig) -> Vec<bool> {
    let (rows, beams) = (header.range_samples as usize, header.beam_count as usize);
    let fg: Vec<bool> = stage0.iter().map(|&v| v != 0).collect();
    let mut kept = vec![false; fg.len()];
    for comp in flood_fill_components(&fg, rows, beams) {
        if oracle_keep(&comp, beams, header, config) {
            for i in comp {
                kept[i] = true;
            }
        }
    }
    kept
}

pub fn oracle_clean(clip: &Clip, config: &PreprocessConfig) -> Vec<Vec<u8>> {
    let mean = oracle_mean(clip);
    clip.frames
        .iter()
        .map(|f| {
            let stage0 = oracle_subtract(f.samples(), &mean, config.alpha0);
            let kept = oracle_kept_mask(&stage0, &clip.header, config);
            (0..stage0.len())
                .map(|i| {
                    let r = f.samples()[i] as f64 - mean[i];
                    let alpha = if kept[i] { config.alpha1 } else { config.alpha2 };
                    if stage0[i] != 0 && r > alpha {
                        stage0[i]
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect()
}

/// Column-per-frame echogram from cleaned frames: maximum over beams and the
/// first beam index attaining it (`None` where the maximum is zero).
pub struct OracleEchogram {
    pub height: usize,
    pub width: usize,
    pub intensity: Vec<u8>,
    pub argmax: Vec<Option<usize>>,
    pub ties: usize,
}

pub fn oracle_echogram(frames: &[Vec<u8>], rows: usize, beams: usize) -> OracleEchogram {
    let width = frames.len();
    let mut intensity = vec![0u8; rows * width];
    let mut argmax = vec![None; rows * width];
    let mut ties = 0;
    for (col, f) in frames.iter().enumerate() {
        for r in 0..rows {
            let row = &f[r * beams..(r + 1) * beams];
            let best = *row.iter().max().unwrap();
            if best == 0 {
                continue;
            }
            let at = row.iter().position(|&v| v == best).unwrap();
            if row.iter().filter(|&&v| v == best).count() > 1 {
                ties += 1;
            }
            intensity[r * width + col] = best;
            argmax[r * width + col] = Some(at);
        }
    }
    OracleEchogram {
        height: rows,
        width,
        intensity,
        argmax,
        ties,
    }
}
