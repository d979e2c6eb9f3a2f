//! Global photometric enhancements. Each is a blend between the input and a
//! degenerate reference image, so a factor of 1 leaves the input untouched.

use image::{Rgb, Rgb32FImage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enhancement {
    Brightness,
    Contrast,
    Sharpness,
    Color,
}

/// Application order of the photometric chain.
pub const CHAIN: [Enhancement; 4] = [
    Enhancement::Brightness,
    Enhancement::Contrast,
    Enhancement::Sharpness,
    Enhancement::Color,
];

pub fn luminance(p: &Rgb<f32>) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn box_blur3(img: &Rgb32FImage) -> Rgb32FImage {
    let (w, h) = img.dimensions();
    Rgb32FImage::from_fn(w, h, |x, y| {
        let mut acc = [0.0f32; 3];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as u32;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as u32;
                let p = img.get_pixel(sx, sy);
                for c in 0..3 {
                    acc[c] += p[c];
                }
            }
        }
        Rgb(acc.map(|v| v / 9.0))
    })
}

fn blend_towards(img: &Rgb32FImage, f: f32, reference: impl Fn(u32, u32, usize) -> f32) -> Rgb32FImage {
    let mut out = img.clone();
    for (x, y, p) in out.enumerate_pixels_mut() {
        for c in 0..3 {
            let r = reference(x, y, c);
            p[c] = (r + f * (p[c] - r)).clamp(0.0, 1.0);
        }
    }
    out
}

pub fn adjust(img: &Rgb32FImage, factor: f64, kind: Enhancement) -> Rgb32FImage {
    if factor == 1.0 {
        return img.clone();
    }
    let f = factor as f32;
    match kind {
        Enhancement::Brightness => {
            let mut out = img.clone();
            for p in out.pixels_mut() {
                for c in 0..3 {
                    p[c] = (f * p[c]).clamp(0.0, 1.0);
                }
            }
            out
        }
        Enhancement::Contrast => {
            let n = (img.width() * img.height()).max(1) as f64;
            let mean = (img.pixels().map(|p| luminance(p) as f64).sum::<f64>() / n) as f32;
            blend_towards(img, f, |_, _, _| mean)
        }
        Enhancement::Sharpness => {
            let blurred = box_blur3(img);
            blend_towards(img, f, |x, y, c| blurred.get_pixel(x, y)[c])
        }
        Enhancement::Color => blend_towards(img, f, |x, y, _| luminance(img.get_pixel(x, y))),
    }
}

/// Applies brightness, contrast, sharpness, then color.
pub fn apply_chain(img: &Rgb32FImage, brightness: f64, contrast: f64, sharpness: f64, color: f64) -> Rgb32FImage {
    let factors = [brightness, contrast, sharpness, color];
    CHAIN
        .iter()
        .zip(factors)
        .fold(img.clone(), |acc, (kind, f)| adjust(&acc, f, *kind))
}
