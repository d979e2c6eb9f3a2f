//! Procedural backgrounds and car silhouettes for tests and demos.

use std::path::Path;

use image::{Rgb, Rgb32FImage, Rgba, RgbaImage};

use super::assets::{
    write_background, write_car, AssetLibrary, BackgroundAsset, BackgroundMeta, CarAsset, CarMeta,
};
use super::trapezoid::{Point, Trapezoid};
use super::GeneratorError;

pub const ENVIRONMENTS: [(&str, &str, [f32; 3]); 6] = [
    ("forest", "green", [0.18, 0.45, 0.20]),
    ("desert", "yellow", [0.85, 0.75, 0.45]),
    ("city", "gray", [0.55, 0.55, 0.58]),
    ("tunnel", "black", [0.12, 0.12, 0.14]),
    ("bridge", "brown", [0.50, 0.35, 0.22]),
    ("parking", "blue", [0.35, 0.45, 0.65]),
];

pub const CAR_COLORS: [(&str, [u8; 3]); 5] = [
    ("white", [240, 240, 240]),
    ("red", [200, 30, 30]),
    ("blue", [30, 60, 200]),
    ("yellow", [230, 200, 30]),
    ("black", [25, 25, 25]),
];

const DESIGNS: [&str; 3] = ["sedan", "suv", "sports"];

#[derive(Debug, Clone, Copy)]
pub struct TestPackOptions {
    /// Side of the square background images, in pixels.
    pub image_size: u32,
}

impl Default for TestPackOptions {
    fn default() -> Self {
        TestPackOptions { image_size: 64 }
    }
}

pub fn test_trapezoid(size: u32) -> Trapezoid {
    let s = size as f64;
    Trapezoid {
        near_left: Point::new((0.06 * s).round(), (0.97 * s).round()),
        near_right: Point::new((0.94 * s).round(), (0.97 * s).round()),
        far_left: Point::new((0.34 * s).round(), (0.55 * s).round()),
        far_right: Point::new((0.66 * s).round(), (0.55 * s).round()),
        scale_near: 1.0,
        scale_far: 0.65,
    }
}

fn background(id: u32, size: u32) -> BackgroundAsset {
    let (env, color, ground) = ENVIRONMENTS[id as usize % ENVIRONMENTS.len()];
    let trapezoid = test_trapezoid(size);
    let horizon = (0.45 * size as f64) as u32;
    // vary the shade between backgrounds sharing an environment
    let shade = 1.0 - 0.08 * (id as usize / ENVIRONMENTS.len()) as f32;
    let pixels = Rgb32FImage::from_fn(size, size, |x, y| {
        if y < horizon {
            let t = y as f32 / horizon as f32;
            Rgb([0.55 + 0.2 * t, 0.7 + 0.1 * t, 0.95])
        } else {
            let road_half = 0.08 + 0.4 * (y - horizon) as f32 / (size - horizon) as f32;
            let dx = (x as f32 / size as f32 - 0.5).abs();
            if dx < road_half {
                Rgb([0.35, 0.35, 0.37])
            } else {
                Rgb(ground.map(|c| (c * shade).clamp(0.0, 1.0)))
            }
        }
    });
    BackgroundAsset {
        meta: BackgroundMeta {
            id,
            image: format!("bg_{id:03}.png"),
            environment: env.to_string(),
            dominant_color: color.to_string(),
            trapezoid,
        },
        pixels,
    }
}

fn car(id: u32, size: u32) -> CarAsset {
    let (color, rgb) = CAR_COLORS[id as usize % CAR_COLORS.len()];
    let rear = id % 2 == 1;
    let w = ((0.4 * size as f64).round() as u32).max(8);
    let h = ((0.31 * size as f64).round() as u32).max(6);
    let (fw, fh) = (w as f32, h as f32);
    let lamp = if rear { [220, 20, 20] } else { [250, 240, 160] };
    let sprite = RgbaImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f32 / fw, y as f32 / fh);
        let cabin = (0.05..0.4).contains(&fy) && (0.2..0.8).contains(&fx);
        let body = (0.4..0.85).contains(&fy);
        let wheel = fy >= 0.8 && ((0.1..0.35).contains(&fx) || (0.65..0.9).contains(&fx));
        if wheel {
            Rgba([15, 15, 15, 255])
        } else if body {
            if (fx < 0.1 || fx >= 0.9) && fy < 0.6 {
                Rgba([lamp[0], lamp[1], lamp[2], 255])
            } else {
                Rgba([rgb[0], rgb[1], rgb[2], 255])
            }
        } else if cabin {
            if (0.28..0.72).contains(&fx) && fy > 0.12 {
                Rgba([60, 80, 110, 255])
            } else {
                Rgba([rgb[0], rgb[1], rgb[2], 255])
            }
        } else {
            Rgba([0, 0, 0, 0])
        }
    });
    CarAsset {
        meta: CarMeta {
            id,
            image: format!("car_{id:03}.png"),
            name: format!("{color}_{}_{id:03}", DESIGNS[id as usize % DESIGNS.len()]),
            color: color.to_string(),
            orientation: if rear { "rear" } else { "front" }.to_string(),
            design: DESIGNS[id as usize % DESIGNS.len()].to_string(),
        },
        sprite,
    }
}

/// Builds a procedural library in memory.
pub fn test_pack(n_backgrounds: u32, n_cars: u32, opts: TestPackOptions) -> Result<AssetLibrary, GeneratorError> {
    if n_backgrounds == 0 || n_cars == 0 {
        return Err(GeneratorError::Library("test pack needs n >= 1 for both kinds".into()));
    }
    AssetLibrary::from_parts(
        (0..n_backgrounds).map(|i| background(i, opts.image_size)).collect(),
        (0..n_cars).map(|i| car(i, opts.image_size)).collect(),
    )
}

/// Writes a procedural library under `dest` and loads it back.
pub fn gen_test_assets(
    dest: &Path,
    n_backgrounds: u32,
    n_cars: u32,
    opts: TestPackOptions,
) -> Result<AssetLibrary, GeneratorError> {
    if n_backgrounds == 0 || n_cars == 0 {
        return Err(GeneratorError::Library("test pack needs n >= 1 for both kinds".into()));
    }
    for i in 0..n_backgrounds {
        write_background(&dest.join("backgrounds"), &background(i, opts.image_size))?;
    }
    for i in 0..n_cars {
        write_car(&dest.join("cars"), &car(i, opts.image_size))?;
    }
    AssetLibrary::load(dest)
}
