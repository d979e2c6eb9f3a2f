//! Image generator: renders modifications into labeled images.

mod assets;
mod manifest;
mod photometric;
mod render;
mod standard;
mod testpack;
mod trapezoid;

use std::path::Path;

use image::Rgb32FImage;
use thiserror::Error;

pub use assets::{
    check_corners_in_bounds, implicit_feature_names, load_background, sidecar_json, write_background,
    write_car,
    AssetLibrary, BackgroundAsset, BackgroundMeta, CarAsset, CarMeta, NONE_VALUE, OPAQUE_ALPHA,
};
pub use manifest::{read_manifest, write_manifest, ManifestRecord, ManifestWriter};
pub use photometric::{adjust, apply_chain, luminance, Enhancement, CHAIN};
pub use render::{
    composite_only, concretize, GroundTruth, LabeledImage, MIN_BOX_SIDE, MIN_VISIBLE_FRACTION,
};
pub use standard::{
    apply_standard, standard_augment, StandardParams, CROP_RANGE, FLIP_PROBABILITY, MAX_BLUR_SIGMA,
    MIN_KEPT_AREA,
};
pub use testpack::{gen_test_assets, test_pack, test_trapezoid, TestPackOptions, CAR_COLORS, ENVIRONMENTS};
pub use trapezoid::{Point, Trapezoid};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("unknown {kind} id {id}")]
    UnknownAsset { kind: &'static str, id: u32 },
    #[error("car in slot {} is not visible: {reason}", slot + 1)]
    InvisibleCar { slot: usize, reason: String },
    #[error("invalid trapezoid: {0}")]
    InvalidTrapezoid(String),
    #[error("invalid modification: {0}")]
    InvalidModification(String),
    #[error("asset library: {0}")]
    Library(String),
    #[error("sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("image {path}: {message}")]
    Image { path: String, message: String },
    #[error("augmentation rejected: {0}")]
    Augment(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GeneratorError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GeneratorError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Whether the caller should resample rather than fail.
    pub fn is_rejection(&self) -> bool {
        matches!(self, GeneratorError::InvisibleCar { .. })
    }
}

/// Quantizes to 8-bit RGB and writes a PNG.
pub fn save_png(pixels: &Rgb32FImage, path: &Path) -> Result<(), GeneratorError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| GeneratorError::io(parent, e))?;
    }
    to_rgb8(pixels).save(path).map_err(|e| GeneratorError::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn to_rgb8(pixels: &Rgb32FImage) -> image::RgbImage {
    image::RgbImage::from_fn(pixels.width(), pixels.height(), |x, y| {
        let p = pixels.get_pixel(x, y);
        image::Rgb(p.0.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

pub fn encode_png(pixels: &Rgb32FImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    to_rgb8(pixels)
        .write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory png encoding");
    buf.into_inner()
}
