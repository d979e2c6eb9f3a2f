use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LoopError;
use crate::errortable::FeedbackOptions;
use crate::oracle::{ExternalConfig, ModelSpec, SurrogateConfig};
use crate::sampler::{SamplerConfig, SamplerKind};

pub const DEFAULT_RATIOS: [f64; 4] = [0.08, 0.17, 0.35, 0.50];

/// Built-in synthetic assets used when no asset directory is configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestPackSpec {
    pub backgrounds: u32,
    pub cars: u32,
    pub image_size: u32,
}

impl Default for TestPackSpec {
    fn default() -> Self {
        TestPackSpec {
            backgrounds: 6,
            cars: 10,
            image_size: 64,
        }
    }
}

/// When the feedback sampler (re)derives its bias from the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackSchedule {
    /// Uniform iterations before the first analysis.
    pub warmup: usize,
    /// Re-analyze every this many iterations; 0 keeps the first result.
    pub refresh: usize,
    /// Existing error table to derive the initial bias from (skips warm-up).
    pub table: Option<PathBuf>,
    pub options: FeedbackOptions,
}

impl Default for FeedbackSchedule {
    fn default() -> Self {
        FeedbackSchedule {
            warmup: 1000,
            refresh: 1000,
            table: None,
            options: FeedbackOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Asset directory (`backgrounds/`, `cars/`); the built-in test pack if unset.
    pub assets: Option<PathBuf>,
    pub test_pack: TestPackSpec,
    /// Layout file; derived from the asset library if unset.
    pub layout: Option<PathBuf>,
    /// The loop overrides `sampler.seed` with seeds derived from `seed`.
    pub sampler: SamplerConfig,
    pub feedback: FeedbackSchedule,
    /// `surrogate:<rules.json>`, `http:<url>` or `exec:<cmd>`.
    pub model: Option<String>,
    /// Inline surrogate, used when `model` is unset.
    pub surrogate: Option<SurrogateConfig>,
    pub external: ExternalConfig,
    /// Command run with the augmented manifest path to retrain an external model.
    pub retrain_hook: Option<String>,
    /// Counterexamples to collect per harvest.
    pub target: usize,
    /// Model evaluations allowed per harvest.
    pub budget: usize,
    pub min_distance: Option<f64>,
    pub split_fraction: f64,
    pub ratios: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub out_dir: PathBuf,
    /// Error-table path for a standalone harvest; `<out_dir>/error_table.csv` if unset.
    pub error_table: Option<PathBuf>,
    /// Write rendered datasets and counterexamples as PNG files.
    pub save_images: bool,
    /// Samples rendered and evaluated concurrently.
    pub parallelism: usize,
    /// Master seed for sampling, dataset draws and splits.
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            assets: None,
            test_pack: TestPackSpec::default(),
            layout: None,
            sampler: SamplerConfig::default(),
            feedback: FeedbackSchedule::default(),
            model: None,
            surrogate: None,
            external: ExternalConfig::default(),
            retrain_hook: None,
            target: 100,
            budget: 10_000,
            min_distance: None,
            split_fraction: 0.5,
            ratios: DEFAULT_RATIOS.to_vec(),
            train_size: 200,
            test_size: 200,
            out_dir: PathBuf::from("augloop-out"),
            error_table: None,
            save_images: true,
            parallelism: 1,
            seed: 0,
        }
    }
}

impl LoopConfig {
    /// Reads a TOML or JSON file (by extension). Relative paths inside are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, LoopError> {
        let text = fs::read_to_string(path).map_err(|e| LoopError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut cfg: LoopConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| LoopError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| LoopError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.assets.as_mut(),
            self.layout.as_mut(),
            self.error_table.as_mut(),
            self.feedback.table.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
        if let Some(spec) = &self.model {
            if let Some(rules) = spec.strip_prefix("surrogate:") {
                let mut p = PathBuf::from(rules);
                fix(&mut p);
                self.model = Some(format!("surrogate:{}", p.display()));
            }
        }
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |m: &str| Err(LoopError::Config(m.to_string()));
        if self.target == 0 {
            return bad("target must be at least 1");
        }
        if self.budget < self.target {
            return bad("budget must be at least the target size");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split fraction must lie in (0, 1)");
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("augmentation ratios must lie in (0, 1]");
        }
        if self.min_distance.is_some_and(|d| !(d > 0.0)) {
            return bad("min_distance must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        match (&self.model, &self.surrogate) {
            (Some(_), Some(_)) => return bad("set either model or surrogate, not both"),
            // Commands that never query a model run without one; `LoopContext::model` reports it.
            (None, None) => {}
            (Some(spec), None) => {
                let spec: ModelSpec = spec.parse()?;
                if !matches!(spec, ModelSpec::Surrogate(_)) && !self.save_images {
                    return bad("external models need save_images = true");
                }
            }
            (None, Some(_)) => {}
        }
        if self.sampler.kind == SamplerKind::Feedback
            && self.feedback.table.is_none()
            && self.feedback.warmup >= self.budget
        {
            return bad("feedback warm-up leaves no budget for guided sampling");
        }
        Ok(())
    }

    pub fn error_table_path(&self) -> PathBuf {
        self.error_table
            .clone()
            .unwrap_or_else(|| self.out_dir.join("error_table.csv"))
    }
}
