//! SVC1 sonar clip container and range/beam geometry.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SVC1" | u32 frame_count | u32 range_samples | u32 beam_count
//!        | f32 frame_rate | f32 window_start | f32 window_end | f32 beam_fov
//!        | u8 upstream_side (0 = left, 1 = right) | 3 reserved zero bytes
//!        | frame_count frames of range_samples * beam_count bytes,
//!          row 0 (nearest range) first, beam index fastest
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const SVC1_MAGIC: [u8; 4] = *b"SVC1";
pub const SVC1_HEADER_LEN: usize = 36;

/// Image side toward which upstream-moving fish travel, in raw coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpstreamSide {
    Left,
    Right,
}

impl UpstreamSide {
    pub fn flipped(self) -> Self {
        match self {
            UpstreamSide::Left => UpstreamSide::Right,
            UpstreamSide::Right => UpstreamSide::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipHeader {
    pub frame_count: u32,
    /// Samples along range (rows of a frame).
    pub range_samples: u32,
    /// Beams (columns of a frame).
    pub beam_count: u32,
    pub frame_rate: f32,
    /// Meters.
    pub window_start: f32,
    /// Meters.
    pub window_end: f32,
    /// Degrees.
    pub beam_fov: f32,
    pub upstream_side: UpstreamSide,
}

impl ClipHeader {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 1 {
            return Err(invalid("frame_count", "must be at least 1"));
        }
        if self.range_samples < 1 {
            return Err(invalid("range_samples", "must be at least 1"));
        }
        if self.beam_count < 2 {
            return Err(invalid("beam_count", "must be at least 2"));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(invalid("frame_rate", format!("{} is not a positive rate", self.frame_rate)));
        }
        if !(self.window_start.is_finite() && self.window_start >= 0.0) {
            return Err(invalid("window_start", format!("{} must be >= 0", self.window_start)));
        }
        if !(self.window_end.is_finite() && self.window_end > self.window_start) {
            return Err(invalid(
                "window_end",
                format!("{} must exceed window_start {}", self.window_end, self.window_start),
            ));
        }
        if !(self.beam_fov > 0.0 && self.beam_fov < 180.0) {
            return Err(invalid("beam_fov", format!("{} not in (0, 180)", self.beam_fov)));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.range_samples as usize
    }

    pub fn beams(&self) -> usize {
        self.beam_count as usize
    }

    pub fn frame_len(&self) -> usize {
        self.rows() * self.beams()
    }

    /// Range in meters at the center of sample bin `row`.
    pub fn range_of_sample(&self, row: usize) -> Result<f64> {
        if row >= self.rows() {
            return Err(Error::Index {
                what: "range samples",
                index: row,
                len: self.rows(),
            });
        }
        Ok(self.range_at_row(row as f64))
    }

    /// Range in meters at a fractional row index, bin centers at `row + 0.5`.
    /// Because the map is affine, the mean range of a set of pixels equals the
    /// range at their mean row.
    pub fn range_at_row(&self, row: f64) -> f64 {
        let start = self.window_start as f64;
        let span = self.window_end as f64 - start;
        start + (row + 0.5) * span / self.range_samples as f64
    }
}

/// One range x beam intensity grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    rows: usize,
    beams: usize,
    samples: Vec<u8>,
}

impl Frame {
    pub fn new(rows: usize, beams: usize, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != rows * beams {
            return Err(invalid(
                "frame",
                format!("{} samples for a {rows}x{beams} grid", samples.len()),
            ));
        }
        Ok(Self {
            rows,
            beams,
            samples,
        })
    }

    pub fn zeros(rows: usize, beams: usize) -> Self {
        Self {
            rows,
            beams,
            samples: vec![0; rows * beams],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, beam: usize) -> u8 {
        self.samples[row * self.beams + beam]
    }

    #[inline]
    pub fn set(&mut self, row: usize, beam: usize, value: u8) {
        self.samples[row * self.beams + beam] = value;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.samples[row * self.beams..(row + 1) * self.beams]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub header: ClipHeader,
    pub frames: Vec<Frame>,
}

impl Clip {
    pub fn new(header: ClipHeader, frames: Vec<Frame>) -> Result<Self> {
        let clip = Self { header, frames };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.frames.len() != self.header.frame_count as usize {
            return Err(invalid(
                "frame_count",
                format!(
                    "header declares {} frames, clip holds {}",
                    self.header.frame_count,
                    self.frames.len()
                ),
            ));
        }
        let (rows, beams) = (self.header.rows(), self.header.beams());
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.rows != rows || frame.beams != beams {
                return Err(invalid(
                    "frame",
                    format!(
                        "frame {i} is {}x{}, header declares {rows}x{beams}",
                        frame.rows, frame.beams
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Per-pixel arithmetic mean over all frames of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFrame {
    rows: usize,
    beams: usize,
    values: Vec<f64>,
}

impl MeanFrame {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, beam: usize) -> f64 {
        self.values[row * self.beams + beam]
    }
}

pub fn mean_frame(clip: &Clip) -> Result<MeanFrame> {
    clip.validate()?;
    let (rows, beams) = (clip.header.rows(), clip.header.beams());
    // u64 sums are exact for any realistic frame count; divide once at the end.
    let mut sums = vec![0u64; rows * beams];
    for frame in &clip.frames {
        for (acc, &v) in sums.iter_mut().zip(&frame.samples) {
            *acc += v as u64;
        }
    }
    let n = clip.frames.len() as f64;
    Ok(MeanFrame {
        rows,
        beams,
        values: sums.into_iter().map(|s| s as f64 / n).collect(),
    })
}

pub fn encode_clip<W: Write>(clip: &Clip, writer: &mut W) -> Result<()> {
    clip.validate()?;
    let h = &clip.header;
    let mut head = Vec::with_capacity(SVC1_HEADER_LEN);
    head.extend_from_slice(&SVC1_MAGIC);
    head.extend_from_slice(&h.frame_count.to_le_bytes());
    head.extend_from_slice(&h.range_samples.to_le_bytes());
    head.extend_from_slice(&h.beam_count.to_le_bytes());
    head.extend_from_slice(&h.frame_rate.to_le_bytes());
    head.extend_from_slice(&h.window_start.to_le_bytes());
    head.extend_from_slice(&h.window_end.to_le_bytes());
    head.extend_from_slice(&h.beam_fov.to_le_bytes());
    head.push(match h.upstream_side {
        UpstreamSide::Left => 0,
        UpstreamSide::Right => 1,
    });
    head.extend_from_slice(&[0, 0, 0]);
    writer.write_all(&head)?;
    for frame in &clip.frames {
        writer.write_all(&frame.samples)?;
    }
    Ok(())
}

pub fn decode_clip(bytes: &[u8]) -> Result<Clip> {
    if bytes.len() < 4 || bytes[..4] != SVC1_MAGIC {
        let got = &bytes[..bytes.len().min(4)];
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"SVC1\"",
            String::from_utf8_lossy(got)
        )));
    }
    if bytes.len() < SVC1_HEADER_LEN {
        return Err(Error::Truncated {
            expected: SVC1_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let upstream_side = match bytes[32] {
        0 => UpstreamSide::Left,
        1 => UpstreamSide::Right,
        other => return Err(invalid("upstream_side", format!("code {other} is not 0 or 1"))),
    };
    if bytes[33..36] != [0, 0, 0] {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    let header = ClipHeader {
        frame_count: u32_at(4),
        range_samples: u32_at(8),
        beam_count: u32_at(12),
        frame_rate: f32_at(16),
        window_start: f32_at(20),
        window_end: f32_at(24),
        beam_fov: f32_at(28),
        upstream_side,
    };
    header.validate()?;

    let frame_len = header.frame_len();
    let payload = frame_len
        .checked_mul(header.frame_count as usize)
        .ok_or_else(|| invalid("frame_count", "payload size overflows"))?;
    let body = &bytes[SVC1_HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::Truncated {
            expected: payload,
            found: body.len(),
        });
    }
    if body.len() > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after last frame",
            body.len() - payload
        )));
    }
    let frames = body
        .chunks_exact(frame_len)
        .map(|chunk| Frame {
            rows: header.rows(),
            beams: header.beams(),
            samples: chunk.to_vec(),
        })
        .collect();
    Ok(Clip { header, frames })
}

pub fn read_clip_from<R: Read>(reader: &mut R) -> Result<Clip> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode_clip(&bytes)
}

pub fn read_clip(path: impl AsRef<Path>) -> Result<Clip> {
    decode_clip(&fs::read(path)?)
}

pub fn write_clip(clip: &Clip, path: impl AsRef<Path>) -> Result<()> {
    clip.validate()?;
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    encode_clip(clip, &mut out)?;
    out.flush()?;
    Ok(())
}
