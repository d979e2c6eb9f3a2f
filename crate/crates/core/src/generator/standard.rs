//! Classic crop / flip / blur augmentation used as a baseline.

use image::imageops::{self, FilterType};
use rand::Rng;

use super::render::{GroundTruth, LabeledImage};
use super::GeneratorError;
use crate::metrics::BBox;

/// Boxes keeping less than this fraction of their area after cropping are dropped.
pub const MIN_KEPT_AREA: f64 = 0.25;
pub const FLIP_PROBABILITY: f64 = 0.6;
pub const CROP_RANGE: (f64, f64) = (0.10, 0.20);
pub const MAX_BLUR_SIGMA: f64 = 3.0;

/// Concrete draw of the augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardParams {
    /// Crop fractions for left, top, right and bottom sides.
    pub crop: [f64; 4],
    pub flip: bool,
    pub sigma: f64,
}

impl StandardParams {
    pub fn identity() -> Self {
        StandardParams {
            crop: [0.0; 4],
            flip: false,
            sigma: 0.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut crop = [0.0; 4];
        for c in &mut crop {
            *c = rng.random_range(CROP_RANGE.0..=CROP_RANGE.1);
        }
        StandardParams {
            crop,
            flip: rng.random_bool(FLIP_PROBABILITY),
            sigma: rng.random_range(0.0..=MAX_BLUR_SIGMA),
        }
    }
}

pub fn standard_augment<R: Rng + ?Sized>(
    img: &LabeledImage,
    rng: &mut R,
) -> Result<LabeledImage, GeneratorError> {
    apply_standard(img, &StandardParams::draw(rng))
}

pub fn apply_standard(img: &LabeledImage, params: &StandardParams) -> Result<LabeledImage, GeneratorError> {
    let (w, h) = img.pixels.dimensions();
    let [l, t, r, b] = params.crop;
    let x0 = (l * w as f64).round() as u32;
    let y0 = (t * h as f64).round() as u32;
    let x1 = w - (r * w as f64).round() as u32;
    let y1 = h - (b * h as f64).round() as u32;
    if x1 <= x0 || y1 <= y0 {
        return Err(GeneratorError::Augment("crop removes the whole image".into()));
    }
    let (cw, ch) = (x1 - x0, y1 - y0);

    let mut boxes = Vec::new();
    for gt in &img.boxes {
        let moved = gt.bbox.translate(-(x0 as f64), -(y0 as f64));
        if let Some(kept) = moved.clip(cw as f64, ch as f64) {
            if kept.area() >= MIN_KEPT_AREA * gt.bbox.area() {
                boxes.push(GroundTruth { bbox: kept, ..gt.clone() });
            }
        }
    }
    if boxes.is_empty() {
        return Err(GeneratorError::Augment("every box was cropped away".into()));
    }

    let mut pixels = imageops::crop_imm(&img.pixels, x0, y0, cw, ch).to_image();
    if params.flip {
        imageops::flip_horizontal_in_place(&mut pixels);
        for gt in &mut boxes {
            let bb = gt.bbox;
            gt.bbox = BBox::new(cw as f64 - bb.x_max, bb.y_min, cw as f64 - bb.x_min, bb.y_max);
        }
    }
    if params.sigma > 0.0 {
        pixels = imageops::blur(&pixels, params.sigma as f32);
    }
    if (cw, ch) != (w, h) {
        pixels = imageops::resize(&pixels, w, h, FilterType::Triangle);
        let (sx, sy) = (w as f64 / cw as f64, h as f64 / ch as f64);
        for gt in &mut boxes {
            let bb = gt.bbox;
            gt.bbox = BBox::new(bb.x_min * sx, bb.y_min * sy, bb.x_max * sx, bb.y_max * sy);
        }
    }
    Ok(LabeledImage {
        pixels,
        boxes,
        modification: img.modification,
        implicit: img.implicit.clone(),
    })
}
