//! Two-channel echograms: collapse, slicing, normalization and the ECG1 file.
//!
//! Each cleaned frame collapses to one column. Channel 0 holds the maximum
//! intensity across beams at each range; channel 1 holds the arg-max beam
//! normalized to [0, 1] (smallest index wins ties, 0 where the row is empty).
//!
//! ECG1 layout (little-endian):
//!
//! ```text
//! "ECG1" | u32 width | u32 height | u8 flags (bit 0: right-padded)
//!        | u32 pad_start | intensity plane (height*width, row-major)
//!        | lateral plane (height*width, round(v * 255))
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::preprocess::{clean_clip, PreprocessConfig};
use crate::sonar_format::{Clip, Frame};

pub const ECG1_MAGIC: [u8; 4] = *b"ECG1";
pub const ECG1_HEADER_LEN: usize = 17;
const FLAG_RIGHT_PADDED: u8 = 1;

pub const DEFAULT_WINDOW: u32 = 200;
pub const MODEL_HEIGHT: usize = 200;
pub const MODEL_WIDTH: usize = 800;

/// Normalized lateral position `index / span` in [0, 1], kept as an exact
/// ratio so that mirroring (`1 - v`) and 8-bit quantization are exact.
#[derive(Debug, Clone, Copy)]
pub struct Lateral {
    index: u32,
    span: u32,
}

impl Lateral {
    pub const ZERO: Lateral = Lateral { index: 0, span: 1 };

    pub fn new(index: u32, span: u32) -> Result<Self> {
        if span == 0 || index > span {
            return Err(invalid("lateral", format!("{index}/{span} not in [0, 1]")));
        }
        Ok(Self { index, span })
    }

    /// From an 8-bit file value `q / 255`.
    pub fn from_quantized(q: u8) -> Self {
        Self {
            index: q as u32,
            span: 255,
        }
    }

    pub fn index(self) -> u32 {
        self.index
    }

    pub fn span(self) -> u32 {
        self.span
    }

    pub fn value(self) -> f64 {
        self.index as f64 / self.span as f64
    }

    pub fn is_zero(self) -> bool {
        self.index == 0
    }

    pub fn inverted(self) -> Self {
        Self {
            index: self.span - self.index,
            span: self.span,
        }
    }

    /// `round(v * 255)`, halves rounded up, in integer arithmetic.
    pub fn quantized(self) -> u8 {
        let (i, s) = (self.index as u64, self.span as u64);
        ((510 * i + s) / (2 * s)) as u8
    }
}

impl PartialEq for Lateral {
    fn eq(&self, other: &Self) -> bool {
        self.index as u64 * other.span as u64 == other.index as u64 * self.span as u64
    }
}

impl Default for Lateral {
    fn default() -> Self {
        Self::ZERO
    }
}

/// Height x width two-channel grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoImage {
    height: usize,
    width: usize,
    intensity: Vec<u8>,
    lateral: Vec<Lateral>,
}

impl EchoImage {
    pub fn new(height: usize, width: usize, intensity: Vec<u8>, lateral: Vec<Lateral>) -> Result<Self> {
        let n = height * width;
        if intensity.len() != n || lateral.len() != n {
            return Err(invalid(
                "echogram",
                format!(
                    "{height}x{width} grid needs {n} values per channel, got {} and {}",
                    intensity.len(),
                    lateral.len()
                ),
            ));
        }
        for (i, (&v, &l)) in intensity.iter().zip(&lateral).enumerate() {
            if l.span == 0 || l.index > l.span {
                return Err(invalid("lateral", format!("{}/{} at index {i} not in [0, 1]", l.index, l.span)));
            }
            if v == 0 && !l.is_zero() {
                return Err(invalid(
                    "lateral",
                    format!("nonzero lateral {} under zero intensity at index {i}", l.value()),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            intensity,
            lateral,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            intensity: vec![0; height * width],
            lateral: vec![Lateral::ZERO; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn intensity(&self) -> &[u8] {
        &self.intensity
    }

    pub fn lateral(&self) -> &[Lateral] {
        &self.lateral
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> (u8, Lateral) {
        let i = row * self.width + col;
        (self.intensity[i], self.lateral[i])
    }

    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        intensity: Vec<u8>,
        lateral: Vec<Lateral>,
    ) -> Self {
        debug_assert_eq!(intensity.len(), height * width);
        debug_assert_eq!(lateral.len(), height * width);
        Self {
            height,
            width,
            intensity,
            lateral,
        }
    }

    pub(crate) fn into_parts(self) -> (Vec<u8>, Vec<Lateral>) {
        (self.intensity, self.lateral)
    }

    /// Columns `[start, start + width)`, zero-filled past the right edge.
    pub fn crop_columns(&self, start: usize, width: usize) -> EchoImage {
        let mut out = EchoImage::zeros(self.height, width);
        let avail = self.width.saturating_sub(start).min(width);
        for r in 0..self.height {
            let src = r * self.width + start;
            let dst = r * width;
            out.intensity[dst..dst + avail].copy_from_slice(&self.intensity[src..src + avail]);
            out.lateral[dst..dst + avail].copy_from_slice(&self.lateral[src..src + avail]);
        }
        out
    }

    pub fn nonzero_pixels(&self) -> usize {
        self.intensity.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Echogram {
    pub clip_id: String,
    /// Absent when the echogram was read back from an ECG1 file.
    pub source_config: Option<PreprocessConfig>,
    /// Height = range samples, width = frames.
    pub image: EchoImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchogramSlice {
    pub clip_id: String,
    pub x_offset: u32,
    pub image: EchoImage,
    /// First zero-padded column, when the window ran past the echogram.
    pub pad_start: Option<u32>,
}

impl EchogramSlice {
    pub fn window(&self) -> usize {
        self.image.width()
    }

    /// Stable identifier used for file names and manifests.
    pub fn slice_id(&self) -> String {
        slice_id(&self.clip_id, self.x_offset)
    }
}

pub fn slice_id(clip_id: &str, x_offset: u32) -> String {
    format!("{clip_id}_x{x_offset:06}")
}

/// Per-range maximum over beams and its normalized arg-max.
pub fn collapse_frame(frame: &Frame) -> Result<(Vec<u8>, Vec<Lateral>)> {
    if frame.beams() < 2 {
        return Err(invalid("beam_count", "lateral normalization needs at least 2 beams"));
    }
    let span = (frame.beams() - 1) as u32;
    let mut intensity = Vec::with_capacity(frame.rows());
    let mut lateral = Vec::with_capacity(frame.rows());
    for r in 0..frame.rows() {
        let row = frame.row(r);
        let (mut best, mut at) = (row[0], 0usize);
        for (b, &v) in row.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                at = b;
            }
        }
        intensity.push(best);
        lateral.push(if best == 0 {
            Lateral::ZERO
        } else {
            Lateral {
                index: at as u32,
                span,
            }
        });
    }
    Ok((intensity, lateral))
}

/// Collapse every frame of an already-cleaned clip into one column.
pub fn collapse_clip(clip: &Clip) -> Result<EchoImage> {
    clip.validate()?;
    let height = clip.header.rows();
    let width = clip.frames.len();
    let mut intensity = vec![0u8; height * width];
    let mut lateral = vec![Lateral::ZERO; height * width];
    for (x, frame) in clip.frames.iter().enumerate() {
        let (col_i, col_l) = collapse_frame(frame)?;
        for r in 0..height {
            intensity[r * width + x] = col_i[r];
            lateral[r * width + x] = col_l[r];
        }
    }
    Ok(EchoImage::from_parts_unchecked(height, width, intensity, lateral))
}

pub fn build_echogram(clip: &Clip, config: &PreprocessConfig, clip_id: &str) -> Result<Echogram> {
    let cleaned = clean_clip(clip, config)?;
    Ok(Echogram {
        clip_id: clip_id.to_owned(),
        source_config: Some(*config),
        image: collapse_clip(&cleaned)?,
    })
}

/// Offsets `0, stride, 2*stride, ...` while the window fits, then one
/// zero-padded window if columns remain uncovered.
pub fn slice_echogram(e: &Echogram, window: u32, stride: u32) -> Result<Vec<EchogramSlice>> {
    if window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    if stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    let width = e.image.width() as u64;
    let (window64, stride64) = (window as u64, stride as u64);
    let mut slices = Vec::new();
    let mut offset = 0u64;
    let mut covered_end = 0u64;
    while offset + window64 <= width {
        slices.push(EchogramSlice {
            clip_id: e.clip_id.clone(),
            x_offset: offset as u32,
            image: e.image.crop_columns(offset as usize, window as usize),
            pad_start: None,
        });
        covered_end = offset + window64;
        offset += stride64;
    }
    if covered_end < width && offset < width {
        slices.push(EchogramSlice {
            clip_id: e.clip_id.clone(),
            x_offset: offset as u32,
            image: e.image.crop_columns(offset as usize, window as usize),
            pad_start: Some((width - offset) as u32),
        });
    }
    Ok(slices)
}

/// Model-ready two-channel tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub height: usize,
    pub width: usize,
    /// `[intensity, lateral]`, each `height * width` row-major.
    pub channels: [Vec<f32>; 2],
}

#[inline]
fn shift_rescale(v: f64) -> f64 {
    (v - 0.5) / 0.25
}

pub fn normalize_slice(s: &EchogramSlice) -> ModelInput {
    normalize_image(&s.image, MODEL_HEIGHT, MODEL_WIDTH)
}

/// Scale intensity to [0, 1], shift/rescale both channels to [-2, 2], then
/// resize bilinearly (half-pixel centers, edge clamped) to `height x width`.
pub fn normalize_image(image: &EchoImage, height: usize, width: usize) -> ModelInput {
    let intensity: Vec<f64> = image
        .intensity
        .iter()
        .map(|&v| shift_rescale(v as f64 / 255.0))
        .collect();
    let lateral: Vec<f64> = image.lateral.iter().map(|l| shift_rescale(l.value())).collect();
    let (h, w) = (image.height, image.width);
    ModelInput {
        height,
        width,
        channels: [
            resize_bilinear(&intensity, h, w, height, width),
            resize_bilinear(&lateral, h, w, height, width),
        ],
    }
}

fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

pub fn resize_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    if h == 0 || w == 0 {
        return vec![0.0; out_h * out_w];
    }
    let cols: Vec<_> = (0..out_w).map(|x| sample_axis(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, wy) = sample_axis(y, h, out_h);
        for &(x0, x1, wx) in &cols {
            let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
            let bottom = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
            out.push((top * (1.0 - wy) + bottom * wy) as f32);
        }
    }
    out
}

/// Contents of one ECG1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgFile {
    pub image: EchoImage,
    pub pad_start: Option<u32>,
}

impl EcgFile {
    pub fn from_slice(s: &EchogramSlice) -> Self {
        Self {
            image: s.image.clone(),
            pad_start: s.pad_start,
        }
    }

    pub fn from_echogram(e: &Echogram) -> Self {
        Self {
            image: e.image.clone(),
            pad_start: None,
        }
    }
}

pub fn encode_ecg<W: Write>(file: &EcgFile, writer: &mut W) -> Result<()> {
    let img = &file.image;
    let mut head = Vec::with_capacity(ECG1_HEADER_LEN);
    head.extend_from_slice(&ECG1_MAGIC);
    head.extend_from_slice(&(img.width as u32).to_le_bytes());
    head.extend_from_slice(&(img.height as u32).to_le_bytes());
    head.push(if file.pad_start.is_some() { FLAG_RIGHT_PADDED } else { 0 });
    head.extend_from_slice(&file.pad_start.unwrap_or(0).to_le_bytes());
    writer.write_all(&head)?;
    writer.write_all(&img.intensity)?;
    let lateral: Vec<u8> = img.lateral.iter().map(|l| l.quantized()).collect();
    writer.write_all(&lateral)?;
    Ok(())
}

pub fn decode_ecg(bytes: &[u8]) -> Result<EcgFile> {
    if bytes.len() < 4 || bytes[..4] != ECG1_MAGIC {
        return Err(Error::Format("bad magic, expected \"ECG1\"".into()));
    }
    if bytes.len() < ECG1_HEADER_LEN {
        return Err(Error::Truncated {
            expected: ECG1_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let width = u32_at(4) as usize;
    let height = u32_at(8) as usize;
    let flags = bytes[12];
    let pad = u32_at(13);
    if flags & !FLAG_RIGHT_PADDED != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }
    let pad_start = if flags & FLAG_RIGHT_PADDED != 0 {
        if pad as usize > width {
            return Err(invalid("pad_start", format!("{pad} beyond width {width}")));
        }
        Some(pad)
    } else if pad != 0 {
        return Err(Error::Format("pad_start set without the padded flag".into()));
    } else {
        None
    };
    let n = width
        .checked_mul(height)
        .ok_or_else(|| invalid("width", "plane size overflows"))?;
    let body = &bytes[ECG1_HEADER_LEN..];
    if body.len() < 2 * n {
        return Err(Error::Truncated {
            expected: 2 * n,
            found: body.len(),
        });
    }
    if body.len() > 2 * n {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - 2 * n)));
    }
    let intensity = body[..n].to_vec();
    let lateral = body[n..].iter().map(|&q| Lateral::from_quantized(q)).collect();
    let image = EchoImage::new(height, width, intensity, lateral)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(EcgFile { image, pad_start })
}

pub fn read_ecg(path: impl AsRef<Path>) -> Result<EcgFile> {
    decode_ecg(&fs::read(path)?)
}

pub fn write_ecg(file: &EcgFile, path: impl AsRef<Path>) -> Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    encode_ecg(file, &mut out)?;
    out.flush()?;
    Ok(())
}
