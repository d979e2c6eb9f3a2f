//! Background and car-sprite library with per-asset JSON sidecars.
//!
//! On disk a library is a directory holding `backgrounds/*.json` and
//! `cars/*.json`; each sidecar names its PNG relative to itself.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb32FImage, RgbaImage};
use serde::{Deserialize, Serialize};

use super::trapezoid::Trapezoid;
use super::GeneratorError;
use crate::modspace::{Modification, Range, SpaceLayout};

pub const NONE_VALUE: &str = "none";

/// Alpha at or above this counts as an opaque sprite pixel.
pub const OPAQUE_ALPHA: u8 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundMeta {
    pub id: u32,
    pub image: String,
    pub environment: String,
    pub dominant_color: String,
    pub trapezoid: Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarMeta {
    pub id: u32,
    pub image: String,
    pub name: String,
    pub color: String,
    pub orientation: String,
    pub design: String,
}

#[derive(Debug, Clone)]
pub struct BackgroundAsset {
    pub meta: BackgroundMeta,
    pub pixels: Rgb32FImage,
}

#[derive(Debug, Clone)]
pub struct CarAsset {
    pub meta: CarMeta,
    pub sprite: RgbaImage,
}

/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct AssetLibrary {
    backgrounds: Vec<BackgroundAsset>,
    cars: Vec<CarAsset>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, GeneratorError> {
    let text = fs::read_to_string(path).map_err(|e| GeneratorError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| GeneratorError::Sidecar {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn sidecars(dir: &Path) -> Result<Vec<PathBuf>, GeneratorError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| GeneratorError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn sibling(sidecar: &Path, name: &str) -> PathBuf {
    sidecar.parent().unwrap_or(Path::new(".")).join(name)
}

/// Loads and checks one background sidecar, including that the trapezoid
/// lies inside the referenced image when the image is present.
pub fn load_background(sidecar: &Path) -> Result<BackgroundAsset, GeneratorError> {
    let meta: BackgroundMeta = read_json(sidecar)?;
    meta.trapezoid.validate()?;
    let path = sibling(sidecar, &meta.image);
    let pixels = image::open(&path)
        .map_err(|e| GeneratorError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .to_rgb32f();
    check_corners_in_bounds(&meta.trapezoid, pixels.width(), pixels.height())?;
    Ok(BackgroundAsset { meta, pixels })
}

pub fn check_corners_in_bounds(t: &Trapezoid, w: u32, h: u32) -> Result<(), GeneratorError> {
    for p in t.corners() {
        if p.x < 0.0 || p.y < 0.0 || p.x > w as f64 || p.y > h as f64 {
            return Err(GeneratorError::InvalidTrapezoid(format!(
                "corner ({}, {}) outside the {w}x{h} image",
                p.x, p.y
            )));
        }
    }
    Ok(())
}

fn load_car(sidecar: &Path) -> Result<CarAsset, GeneratorError> {
    let meta: CarMeta = read_json(sidecar)?;
    let path = sibling(sidecar, &meta.image);
    let sprite = image::open(&path)
        .map_err(|e| GeneratorError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .to_rgba8();
    Ok(CarAsset { meta, sprite })
}

impl AssetLibrary {
    pub fn from_parts(
        mut backgrounds: Vec<BackgroundAsset>,
        mut cars: Vec<CarAsset>,
    ) -> Result<Self, GeneratorError> {
        backgrounds.sort_by_key(|b| b.meta.id);
        cars.sort_by_key(|c| c.meta.id);
        if backgrounds.is_empty() || cars.is_empty() {
            return Err(GeneratorError::Library(
                "library needs at least one background and one car".into(),
            ));
        }
        for (i, b) in backgrounds.iter().enumerate() {
            if b.meta.id != i as u32 {
                return Err(GeneratorError::Library(format!(
                    "background ids are not dense: expected {i}, found {}",
                    b.meta.id
                )));
            }
            b.meta.trapezoid.validate()?;
        }
        for (i, c) in cars.iter().enumerate() {
            if c.meta.id != i as u32 {
                return Err(GeneratorError::Library(format!(
                    "car ids are not dense: expected {i}, found {}",
                    c.meta.id
                )));
            }
            if !c.sprite.pixels().any(|p| p[3] >= OPAQUE_ALPHA) {
                return Err(GeneratorError::Library(format!(
                    "car {} sprite has no opaque pixels",
                    c.meta.id
                )));
            }
        }
        Ok(AssetLibrary { backgrounds, cars })
    }

    pub fn load(dir: &Path) -> Result<Self, GeneratorError> {
        let backgrounds = sidecars(&dir.join("backgrounds"))?
            .iter()
            .map(|p| load_background(p))
            .collect::<Result<Vec<_>, _>>()?;
        let cars = sidecars(&dir.join("cars"))?
            .iter()
            .map(|p| load_car(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(backgrounds, cars)
    }

    pub fn num_backgrounds(&self) -> u32 {
        self.backgrounds.len() as u32
    }

    pub fn num_cars(&self) -> u32 {
        self.cars.len() as u32
    }

    pub fn background(&self, id: u32) -> Result<&BackgroundAsset, GeneratorError> {
        self.backgrounds
            .get(id as usize)
            .ok_or(GeneratorError::UnknownAsset { kind: "background", id })
    }

    pub fn car(&self, id: u32) -> Result<&CarAsset, GeneratorError> {
        self.cars
            .get(id as usize)
            .ok_or(GeneratorError::UnknownAsset { kind: "car", id })
    }

    pub fn backgrounds(&self) -> impl Iterator<Item = &BackgroundMeta> {
        self.backgrounds.iter().map(|b| &b.meta)
    }

    pub fn cars(&self) -> impl Iterator<Item = &CarMeta> {
        self.cars.iter().map(|c| &c.meta)
    }

    /// Default layout whose cardinalities match this library.
    pub fn layout(&self) -> SpaceLayout {
        SpaceLayout::new(self.num_backgrounds(), self.num_cars())
            .expect("library has nonzero cardinalities")
    }

    pub fn layout_with_photometric(&self, photometric: Range) -> Result<SpaceLayout, GeneratorError> {
        SpaceLayout::with_photometric_range(self.num_backgrounds(), self.num_cars(), photometric)
            .map_err(|e| GeneratorError::Library(e.to_string()))
    }

    /// Implicit (metadata-derived) features of the scene described by `m`.
    pub fn implicit_features(
        &self,
        m: &Modification,
    ) -> Result<BTreeMap<String, String>, GeneratorError> {
        let mut out = BTreeMap::new();
        let bg = &self.background(m.background())?.meta;
        out.insert("environment".to_string(), bg.environment.clone());
        out.insert("background_color".to_string(), bg.dominant_color.clone());
        out.insert("num_cars".to_string(), m.num_cars().to_string());
        for slot in 0..3 {
            let car = match m.car(slot) {
                Some(id) => Some(&self.car(id)?.meta),
                None => None,
            };
            let n = slot + 1;
            let get = |f: fn(&CarMeta) -> &String| {
                car.map_or(NONE_VALUE.to_string(), |c| f(c).clone())
            };
            out.insert(format!("car{n}_color"), get(|c| &c.color));
            out.insert(format!("car{n}_orientation"), get(|c| &c.orientation));
            out.insert(format!("car{n}_design"), get(|c| &c.design));
            out.insert(format!("car{n}_name"), get(|c| &c.name));
        }
        Ok(out)
    }
}

/// Names of the implicit features produced by [`AssetLibrary::implicit_features`].
pub fn implicit_feature_names() -> Vec<String> {
    let mut names = vec![
        "environment".to_string(),
        "background_color".to_string(),
        "num_cars".to_string(),
    ];
    for n in 1..=3 {
        for f in ["color", "orientation", "design", "name"] {
            names.push(format!("car{n}_{f}"));
        }
    }
    names
}

/// Writes a background sidecar and its PNG.
pub fn write_background(dir: &Path, asset: &BackgroundAsset) -> Result<(), GeneratorError> {
    fs::create_dir_all(dir).map_err(|e| GeneratorError::io(dir, e))?;
    let png = dir.join(&asset.meta.image);
    super::save_png(&asset.pixels, &png)?;
    let side = dir.join(format!("bg_{:03}.json", asset.meta.id));
    fs::write(&side, sidecar_json(&asset.meta)).map_err(|e| GeneratorError::io(&side, e))
}

/// Canonical sidecar text: pretty JSON with a trailing newline.
pub fn sidecar_json(meta: &BackgroundMeta) -> String {
    serde_json::to_string_pretty(meta).expect("meta serializes") + "\n"
}

pub fn write_car(dir: &Path, asset: &CarAsset) -> Result<(), GeneratorError> {
    fs::create_dir_all(dir).map_err(|e| GeneratorError::io(dir, e))?;
    let png = dir.join(&asset.meta.image);
    asset
        .sprite
        .save(&png)
        .map_err(|e| GeneratorError::Image {
            path: png.display().to_string(),
            message: e.to_string(),
        })?;
    let side = dir.join(format!("car_{:03}.json", asset.meta.id));
    let text = serde_json::to_string_pretty(&asset.meta).expect("meta serializes");
    fs::write(&side, text).map_err(|e| GeneratorError::io(&side, e))
}
