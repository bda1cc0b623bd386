//! Debug rendering: lateral position as hue, intensity as value.

use echokit_core::EchoImage;
use image::{Rgb, RgbImage};

/// Hue span in degrees; 0 (first beam) is red, 1 (last beam) is blue.
const HUE_SPAN: f64 = 240.0;

pub fn render(img: &EchoImage) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let (v, l) = img.get(y as usize, x as usize);
        hsv_to_rgb(l.value() * HUE_SPAN, if v == 0 { 0.0 } else { 1.0 }, v as f64 / 255.0)
    })
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to8 = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([to8(r), to8(g), to8(b)])
}
