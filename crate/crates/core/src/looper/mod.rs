//! The closed augmentation loop: harvest counterexamples, split them, build
//! augmented training sets, retrain and compare.

mod config;
mod cycles;
mod harvest;
mod report;

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{FeedbackSchedule, LoopConfig, TestPackSpec, DEFAULT_RATIOS};
pub use cycles::{build_ratio_sets, evaluate, ratio_count, run_cycles, run_cycles_with, split};
pub use harvest::{harvest, harvest_with, HarvestOutcome, MAX_CONSECUTIVE_REJECTIONS};
pub use report::{AccuracyEntry, CycleReport, HarvestSummary, IterationRecord, LoopReport, StopReason, VariantReport};

use crate::errortable::{ErrorTableError, FeatureSchema};
use crate::generator::{
    concretize, save_png, test_pack, write_manifest, AssetLibrary, GeneratorError, LabeledImage,
    ManifestRecord, TestPackOptions,
};
use crate::jsonl::JsonlError;
use crate::modspace::SpaceLayout;
use crate::oracle::{
    fnv1a64, Detector, ExecClient, HttpClient, ModelSpec, OracleError, SurrogateModel, TrainingPoint,
};
use crate::sampler::{sample_uniform, SamplerError};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("model failed after {iterations} evaluations: {source}")]
    Model {
        iterations: usize,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    ErrorTable(#[from] ErrorTableError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("ratio {ratio} needs {needed} counterexamples but only {available} are available (short by {})", needed - available)]
    InsufficientCounterexamples {
        ratio: f64,
        needed: usize,
        available: usize,
    },
    #[error("{0} consecutive samples were rejected without a model evaluation")]
    Stalled(usize),
    #[error("retrain: {0}")]
    Retrain(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LoopError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        LoopError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Seed for an independent stream labelled `tag`.
pub(crate) fn subseed(seed: u64, tag: &str, index: u64) -> u64 {
    fnv1a64(format!("{seed}:{tag}:{index}").as_bytes())
}

/// Everything a loop run needs besides the model.
pub struct LoopContext {
    pub config: LoopConfig,
    pub lib: AssetLibrary,
    pub layout: SpaceLayout,
    pub schema: FeatureSchema,
}

impl LoopContext {
    pub fn new(config: LoopConfig) -> Result<Self, LoopError> {
        config.validate()?;
        let lib = match &config.assets {
            Some(dir) => AssetLibrary::load(dir)?,
            None => {
                let t = config.test_pack;
                test_pack(
                    t.backgrounds,
                    t.cars,
                    TestPackOptions {
                        image_size: t.image_size,
                    },
                )?
            }
        };
        Self::with_library(config, lib)
    }

    pub fn with_library(config: LoopConfig, lib: AssetLibrary) -> Result<Self, LoopError> {
        config.validate()?;
        let layout = match &config.layout {
            Some(path) => {
                let layout = SpaceLayout::load(path).map_err(|e| LoopError::Config(e.to_string()))?;
                let own = lib.layout();
                if (0..2).any(|d| layout.cardinality(d) != own.cardinality(d)) {
                    return Err(LoopError::Config(format!(
                        "layout {} does not match the asset library cardinalities",
                        path.display()
                    )));
                }
                layout
            }
            None => lib.layout(),
        };
        let schema = FeatureSchema::for_library(&layout, &lib)?;
        Ok(LoopContext {
            config,
            lib,
            layout,
            schema,
        })
    }

    /// Instantiates the configured model.
    pub fn model(&self) -> Result<Model, LoopError> {
        let surrogate = |m: SurrogateModel| Model::Surrogate {
            current: m.clone(),
            pristine: m,
        };
        match (&self.config.model, &self.config.surrogate) {
            (None, Some(cfg)) => Ok(surrogate(SurrogateModel::new(cfg.clone(), &self.layout)?)),
            (Some(spec), _) => Ok(match spec.parse::<ModelSpec>()? {
                ModelSpec::Surrogate(path) => {
                    surrogate(SurrogateModel::load(Path::new(&path), &self.layout)?)
                }
                ModelSpec::Http(url) => Model::External {
                    detector: Box::new(HttpClient::new(&url, self.config.external.clone())),
                    hook: self.config.retrain_hook.clone(),
                },
                ModelSpec::Exec(cmd) => Model::External {
                    detector: Box::new(ExecClient::spawn(&cmd, self.config.external.clone())?),
                    hook: self.config.retrain_hook.clone(),
                },
            }),
            (None, None) => Err(LoopError::Config("no model configured".into())),
        }
    }

    /// Renders `n` uniform samples, resampling on visibility rejection.
    pub fn generate_dataset(
        &self,
        n: usize,
        seed: u64,
        prefix: &str,
        dir: Option<&Path>,
    ) -> Result<Vec<Sample>, LoopError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mods = Vec::with_capacity(n);
        let mut rejected = 0;
        while mods.len() < n {
            // Draw a batch, render it in parallel, keep accepted renders in order.
            let want = n - mods.len();
            let batch: Vec<_> = (0..want).map(|_| sample_uniform(&self.layout, &mut rng)).collect();
            let rendered: Vec<Result<Option<LabeledImage>, GeneratorError>> = batch
                .par_iter()
                .map(|m| match concretize(m, &self.lib) {
                    Ok(img) => Ok(Some(img)),
                    Err(e) if e.is_rejection() => Ok(None),
                    Err(e) => Err(e),
                })
                .collect();
            let before = mods.len();
            for r in rendered {
                match r? {
                    Some(img) => mods.push(img),
                    None => rejected += 1,
                }
            }
            if mods.len() == before && rejected >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(LoopError::Stalled(rejected));
            }
        }
        let mut out = Vec::with_capacity(n);
        for (i, image) in mods.into_iter().enumerate() {
            let id = format!("{prefix}-{i:06}");
            let path = match dir {
                Some(d) => {
                    let p = d.join(format!("{id}.png"));
                    save_png(&image.pixels, &p)?;
                    Some(p)
                }
                None => None,
            };
            out.push(Sample { id, image, path });
        }
        Ok(out)
    }
}

/// A rendered scene with its identity and, if saved, its file.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: LabeledImage,
    pub path: Option<PathBuf>,
}

impl Sample {
    pub fn record(&self) -> ManifestRecord {
        let path = self
            .path
            .as_ref()
            .map_or_else(|| self.id.clone(), |p| p.display().to_string());
        ManifestRecord::from_image(&self.image, path)
    }
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), LoopError> {
    let records: Vec<ManifestRecord> = samples.iter().map(Sample::record).collect();
    write_manifest(path, &records)?;
    Ok(())
}

/// A detector together with the means to retrain it.
pub enum Model {
    /// `pristine` is the surrogate as configured; `current` adds the training set.
    Surrogate {
        pristine: SurrogateModel,
        current: SurrogateModel,
    },
    External {
        detector: Box<dyn Detector>,
        hook: Option<String>,
    },
}

impl Model {
    pub fn detector(&self) -> &dyn Detector {
        match self {
            Model::Surrogate { current, .. } => current,
            Model::External { detector, .. } => detector.as_ref(),
        }
    }

    /// Retrains from scratch on `train`, whose manifest has been written to `manifest`.
    pub fn fit(&mut self, train: &[Sample], manifest: &Path) -> Result<(), LoopError> {
        match self {
            Model::Surrogate { pristine, current } => {
                let points: Vec<TrainingPoint> =
                    train.iter().map(|s| TrainingPoint::from(&s.image)).collect();
                *current = pristine.retrain(&points);
                Ok(())
            }
            Model::External { hook, .. } => {
                let hook = hook.as_deref().ok_or_else(|| {
                    LoopError::Retrain("external model without a retrain hook".into())
                })?;
                let status = Command::new("sh")
                    .arg("-c")
                    .arg(format!("{hook} \"$1\""))
                    .arg("sh")
                    .arg(manifest)
                    .status()
                    .map_err(|e| LoopError::Retrain(format!("spawn '{hook}': {e}")))?;
                if status.success() {
                    Ok(())
                } else {
                    Err(LoopError::Retrain(format!("'{hook}' exited with {status}")))
                }
            }
        }
    }
}
