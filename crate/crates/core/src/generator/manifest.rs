//! JSONL dataset manifests: one labeled image per line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::{GroundTruth, LabeledImage};
use super::{save_png, GeneratorError};
use crate::jsonl::{read_jsonl, JsonlWriter};
use crate::modspace::Modification;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub modification: Modification,
    pub boxes: Vec<GroundTruth>,
    pub implicit: BTreeMap<String, String>,
}

impl ManifestRecord {
    pub fn from_image(img: &LabeledImage, image_path: impl Into<String>) -> Self {
        ManifestRecord {
            image_path: image_path.into(),
            modification: img.modification,
            boxes: img.boxes.clone(),
            implicit: img.implicit.clone(),
        }
    }

    /// Reads the PNG at `image_path` back into a labeled image.
    pub fn load_image(&self) -> Result<LabeledImage, GeneratorError> {
        let pixels = image::open(&self.image_path)
            .map_err(|e| GeneratorError::Image {
                path: self.image_path.clone(),
                message: e.to_string(),
            })?
            .to_rgb32f();
        Ok(LabeledImage {
            pixels,
            boxes: self.boxes.clone(),
            modification: self.modification,
            implicit: self.implicit.clone(),
        })
    }
}

/// Writes images as PNGs under `image_dir` and records them in a manifest.
pub struct ManifestWriter {
    image_dir: PathBuf,
    out: JsonlWriter,
    count: usize,
}

impl ManifestWriter {
    pub fn create(manifest: &Path, image_dir: &Path) -> Result<Self, GeneratorError> {
        std::fs::create_dir_all(image_dir).map_err(|e| GeneratorError::io(image_dir, e))?;
        Ok(ManifestWriter {
            image_dir: image_dir.to_path_buf(),
            out: JsonlWriter::create(manifest).map_err(|e| GeneratorError::Manifest(e.to_string()))?,
            count: 0,
        })
    }

    pub fn push(&mut self, img: &LabeledImage, stem: &str) -> Result<ManifestRecord, GeneratorError> {
        let path = self.image_dir.join(format!("{stem}.png"));
        save_png(&img.pixels, &path)?;
        let record = ManifestRecord::from_image(img, path.display().to_string());
        self.push_record(&record)?;
        Ok(record)
    }

    pub fn push_record(&mut self, record: &ManifestRecord) -> Result<(), GeneratorError> {
        self.out
            .write(record)
            .map_err(|e| GeneratorError::Manifest(e.to_string()))?;
        self.count += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, GeneratorError> {
    read_jsonl(path).map_err(|e| GeneratorError::Manifest(e.to_string()))
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), GeneratorError> {
    let mut w = JsonlWriter::create(path).map_err(|e| GeneratorError::Manifest(e.to_string()))?;
    for r in records {
        w.write(r).map_err(|e| GeneratorError::Manifest(e.to_string()))?;
    }
    Ok(())
}
