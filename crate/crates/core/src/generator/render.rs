//! Concretization: modification -> labeled image.

use std::collections::BTreeMap;

use image::imageops::{self, FilterType};
use image::{Rgb32FImage, RgbaImage};
use serde::{Deserialize, Serialize};

use super::assets::{AssetLibrary, OPAQUE_ALPHA};
use super::photometric::apply_chain;
use super::GeneratorError;
use crate::metrics::{BBox, DEFAULT_CATEGORY};
use crate::modspace::{x_dim, z_dim, Modification, BRIGHTNESS, COLOR, CONTRAST, SHARPNESS};

/// A car whose unoccluded opaque fraction falls below this is rejected.
pub const MIN_VISIBLE_FRACTION: f64 = 0.25;
/// Minimum width and height of an emitted box, in pixels.
pub const MIN_BOX_SIDE: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub category: String,
    /// Car slot (0-based) the box belongs to.
    pub slot: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Rgb32FImage,
    pub boxes: Vec<GroundTruth>,
    pub modification: Modification,
    pub implicit: BTreeMap<String, String>,
}

impl LabeledImage {
    pub fn gt_boxes(&self) -> Vec<BBox> {
        self.boxes.iter().map(|b| b.bbox).collect()
    }
}

/// Scaled sprite placed in image coordinates.
struct Placed {
    slot: usize,
    z: f64,
    sprite: RgbaImage,
    left: i64,
    top: i64,
}

impl Placed {
    fn opaque(&self) -> impl Iterator<Item = (i64, i64, &image::Rgba<u8>)> {
        self.sprite
            .enumerate_pixels()
            .filter(|(_, _, p)| p[3] >= OPAQUE_ALPHA)
            .map(|(x, y, p)| (self.left + x as i64, self.top + y as i64, p))
    }

    fn extent(&self) -> Option<BBox> {
        let mut it = self.opaque();
        let (x0, y0, _) = it.next()?;
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (x0, y0, x0, y0);
        for (x, y, _) in it {
            lo_x = lo_x.min(x);
            lo_y = lo_y.min(y);
            hi_x = hi_x.max(x);
            hi_y = hi_y.max(y);
        }
        Some(BBox::new(lo_x as f64, lo_y as f64, (hi_x + 1) as f64, (hi_y + 1) as f64))
    }
}

fn place_cars(m: &Modification, lib: &AssetLibrary) -> Result<Vec<Placed>, GeneratorError> {
    let trap = lib.background(m.background())?.meta.trapezoid;
    let mut placed = Vec::new();
    for slot in 0..3 {
        let Some(id) = m.car(slot) else { continue };
        let car = lib.car(id)?;
        let z = m.continuous[z_dim(slot)];
        let (anchor, scale) = trap.place(m.continuous[x_dim(slot)], z);
        let w = ((car.sprite.width() as f64 * scale).round() as u32).max(1);
        let h = ((car.sprite.height() as f64 * scale).round() as u32).max(1);
        let sprite = imageops::resize(&car.sprite, w, h, FilterType::Nearest);
        placed.push(Placed {
            slot,
            z,
            left: (anchor.x - w as f64 / 2.0).round() as i64,
            top: (anchor.y - h as f64).round() as i64,
            sprite,
        });
    }
    // far to near; the nearer car is painted last
    placed.sort_by(|a, b| b.z.total_cmp(&a.z).then(a.slot.cmp(&b.slot)));
    Ok(placed)
}

/// Renders `m` over `lib`. Deterministic in `(m, lib)`.
pub fn concretize(m: &Modification, lib: &AssetLibrary) -> Result<LabeledImage, GeneratorError> {
    if m.discrete[0].is_none() || m.discrete[1].is_none() {
        return Err(GeneratorError::InvalidModification(
            "background and car1 must be present".into(),
        ));
    }
    let bg = lib.background(m.background())?;
    let mut canvas = bg.pixels.clone();
    let (w, h) = canvas.dimensions();
    let placed = place_cars(m, lib)?;

    let mut owner: Vec<Option<usize>> = vec![None; (w * h) as usize];
    for car in &placed {
        for (x, y, p) in car.opaque() {
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let a = p[3] as f32 / 255.0;
            let dst = canvas.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                dst[c] = a * (p[c] as f32 / 255.0) + (1.0 - a) * dst[c];
            }
            owner[(y as u32 * w + x as u32) as usize] = Some(car.slot);
        }
    }

    let mut boxes = Vec::new();
    for car in &placed {
        let total = car.opaque().count();
        let visible = owner.iter().filter(|o| **o == Some(car.slot)).count();
        if (visible as f64) < MIN_VISIBLE_FRACTION * total as f64 {
            return Err(GeneratorError::InvisibleCar {
                slot: car.slot,
                reason: format!("only {visible} of {total} opaque pixels visible"),
            });
        }
        let clipped = car.extent().and_then(|b| b.clip(w as f64, h as f64));
        match clipped {
            Some(b) if b.width() >= MIN_BOX_SIDE && b.height() >= MIN_BOX_SIDE => {
                boxes.push(GroundTruth {
                    category: DEFAULT_CATEGORY.to_string(),
                    slot: car.slot,
                    bbox: b,
                })
            }
            other => {
                return Err(GeneratorError::InvisibleCar {
                    slot: car.slot,
                    reason: match other {
                        Some(b) => format!("box {}x{} px is too small", b.width(), b.height()),
                        None => "car lies outside the image".to_string(),
                    },
                })
            }
        }
    }
    boxes.sort_by_key(|b| b.slot);

    let c = &m.continuous;
    let pixels = apply_chain(&canvas, c[BRIGHTNESS], c[CONTRAST], c[SHARPNESS], c[COLOR]);
    Ok(LabeledImage {
        pixels,
        boxes,
        modification: *m,
        implicit: lib.implicit_features(m)?,
    })
}

/// The composite before the photometric chain, with the same boxes.
pub fn composite_only(m: &Modification, lib: &AssetLibrary) -> Result<LabeledImage, GeneratorError> {
    let mut neutral = *m;
    for i in [BRIGHTNESS, CONTRAST, SHARPNESS, COLOR] {
        neutral.continuous[i] = 1.0;
    }
    let mut img = concretize(&neutral, lib)?;
    img.modification = *m;
    Ok(img)
}
