//! Echogram-domain augmentations with their label semantics.
//!
//! Rows are the range axis and columns the time axis. A vertical flip mirrors
//! range and leaves counts alone. A naive horizontal flip reverses time, which
//! reverses every apparent crossing, so left and right swap. The realistic
//! horizontal flip reverses time and then inverts the lateral channel on the
//! nonzero support, restoring the original direction of motion; counts stay.
//! Superposition keeps the brighter pixel (first operand on ties) and adds
//! counts.
//!
//! All operations work on un-normalized channels; the `v -> 1 - v` inversion
//! is only meaningful on [0, 1] lateral values.

use crate::counts::{CountLabel, LabelSource};
use crate::echogram::{EchoImage, EchogramSlice};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSlice {
    pub slice: EchogramSlice,
    pub label: CountLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipOp {
    Vertical,
    NaiveHorizontal,
    RealisticHorizontal,
}

impl std::str::FromStr for FlipOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vflip" => Ok(FlipOp::Vertical),
            "hflip" => Ok(FlipOp::NaiveHorizontal),
            "rhflip" => Ok(FlipOp::RealisticHorizontal),
            other => Err(format!("unknown augmentation {other:?} (vflip, hflip, rhflip)")),
        }
    }
}

pub fn flip_rows(img: &EchoImage) -> EchoImage {
    let (h, w) = (img.height(), img.width());
    let mut intensity = Vec::with_capacity(h * w);
    let mut lateral = Vec::with_capacity(h * w);
    for r in (0..h).rev() {
        intensity.extend_from_slice(&img.intensity()[r * w..(r + 1) * w]);
        lateral.extend_from_slice(&img.lateral()[r * w..(r + 1) * w]);
    }
    EchoImage::from_parts_unchecked(h, w, intensity, lateral)
}

pub fn flip_columns(img: &EchoImage) -> EchoImage {
    let (h, w) = (img.height(), img.width());
    let mut intensity = img.intensity().to_vec();
    let mut lateral = img.lateral().to_vec();
    for r in 0..h {
        intensity[r * w..(r + 1) * w].reverse();
        lateral[r * w..(r + 1) * w].reverse();
    }
    EchoImage::from_parts_unchecked(h, w, intensity, lateral)
}

/// `v -> 1 - v` wherever intensity is nonzero.
pub fn invert_lateral(img: &EchoImage) -> EchoImage {
    let (intensity, mut lateral) = img.clone().into_parts();
    for (l, &v) in lateral.iter_mut().zip(&intensity) {
        if v > 0 {
            *l = l.inverted();
        }
    }
    EchoImage::from_parts_unchecked(img.height(), img.width(), intensity, lateral)
}

fn with_image(x: &LabeledSlice, image: EchoImage, label: CountLabel) -> LabeledSlice {
    LabeledSlice {
        slice: EchogramSlice {
            image,
            ..x.slice.clone()
        },
        label,
    }
}

pub fn vflip(x: &LabeledSlice) -> LabeledSlice {
    with_image(x, flip_rows(&x.slice.image), x.label.clone())
}

pub fn hflip_naive(x: &LabeledSlice) -> LabeledSlice {
    let label = CountLabel {
        left: x.label.right,
        right: x.label.left,
        ..x.label.clone()
    };
    with_image(x, flip_columns(&x.slice.image), label)
}

pub fn hflip_realistic(x: &LabeledSlice) -> LabeledSlice {
    with_image(x, invert_lateral(&flip_columns(&x.slice.image)), x.label.clone())
}

pub fn flip(x: &LabeledSlice, op: FlipOp) -> LabeledSlice {
    match op {
        FlipOp::Vertical => vflip(x),
        FlipOp::NaiveHorizontal => hflip_naive(x),
        FlipOp::RealisticHorizontal => hflip_realistic(x),
    }
}

/// Brighter pixel wins, ties keep `a`.
pub fn superpose_images(a: &EchoImage, b: &EchoImage) -> Result<EchoImage> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(invalid(
            "slice",
            format!(
                "cannot superpose {}x{} with {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            ),
        ));
    }
    let n = a.height() * a.width();
    let mut intensity = Vec::with_capacity(n);
    let mut lateral = Vec::with_capacity(n);
    for i in 0..n {
        let (ia, ib) = (a.intensity()[i], b.intensity()[i]);
        if ib > ia {
            intensity.push(ib);
            lateral.push(b.lateral()[i]);
        } else {
            intensity.push(ia);
            lateral.push(a.lateral()[i]);
        }
    }
    Ok(EchoImage::from_parts_unchecked(a.height(), a.width(), intensity, lateral))
}

/// Counts add; identity and padding metadata come from `a`. Mixing sources
/// yields a weak label.
pub fn superpose(a: &LabeledSlice, b: &LabeledSlice) -> Result<LabeledSlice> {
    let image = superpose_images(&a.slice.image, &b.slice.image)?;
    let label = superpose_labels(&a.label, &b.label);
    Ok(with_image(a, image, label))
}

pub fn superpose_labels(a: &CountLabel, b: &CountLabel) -> CountLabel {
    CountLabel {
        left: a.left + b.left,
        right: a.right + b.right,
        source: if a.source == b.source {
            a.source
        } else {
            LabelSource::Weak
        },
        ..a.clone()
    }
}

pub fn flip_label(label: &CountLabel, op: FlipOp) -> CountLabel {
    match op {
        FlipOp::NaiveHorizontal => CountLabel {
            left: label.right,
            right: label.left,
            ..label.clone()
        },
        FlipOp::Vertical | FlipOp::RealisticHorizontal => label.clone(),
    }
}
