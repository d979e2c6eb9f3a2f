//! Samplers over the modification space.

mod cross_entropy;
mod diversity;
mod feedback;
mod halton;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cross_entropy::{ce_sample, ce_update, CeConfig, CeParams, MIN_BATCH};
pub use diversity::{DiversityFilter, DEFAULT_MIN_DISTANCE};
pub use feedback::{check_feedback, sample_feedback, window, MIN_HALF_WINDOW};
pub use halton::{halton_point, radical_inverse, sample_halton, sample_halton_with, Scramble, PRIMES};

use crate::errortable::FeedbackSpec;
use crate::modspace::{Modification, SpaceLayout, NUM_CONTINUOUS, NUM_DISCRETE};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("cross-entropy update with an empty elite set")]
    EmptyElite,
    #[error("cross-entropy batch of {0} is below the minimum of {MIN_BATCH}")]
    BatchTooSmall(usize),
    #[error("feedback has neither constraints nor priorities")]
    DegenerateFeedback,
    #[error("feedback references unknown asset or dim '{0}'")]
    UnknownFeedback(String),
    #[error("feedback sampler selected without feedback")]
    MissingFeedback,
}

/// Uniform draw: every discrete dim uniform over its buckets (ABSENT
/// included for car slots 2-3), every continuous dim uniform over its range.
pub fn sample_uniform<R: Rng + ?Sized>(layout: &SpaceLayout, rng: &mut R) -> Modification {
    let mut discrete = [None; NUM_DISCRETE];
    for (d, slot) in discrete.iter_mut().enumerate() {
        let bucket = rng.random_range(0..layout.buckets(d));
        *slot = (bucket < layout.cardinality(d)).then_some(bucket);
    }
    let mut continuous = [0.0; NUM_CONTINUOUS];
    for (d, c) in continuous.iter_mut().enumerate() {
        let r = layout.range(d);
        *c = rng.random_range(r.min..=r.max);
    }
    Modification {
        discrete,
        continuous,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Halton,
    #[serde(alias = "ce")]
    CrossEntropy,
    Feedback,
}

impl std::str::FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "halton" => Ok(SamplerKind::Halton),
            "ce" | "cross_entropy" => Ok(SamplerKind::CrossEntropy),
            "feedback" => Ok(SamplerKind::Feedback),
            other => Err(format!("unknown sampler '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub seed: u64,
    pub ce: CeConfig,
    pub halton_scramble: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Uniform,
            seed: 0,
            ce: CeConfig::default(),
            halton_scramble: false,
        }
    }
}

/// Stateful sampler. Single writer: callers serialize `next` and `observe`.
#[derive(Debug, Clone)]
pub struct Sampler {
    layout: SpaceLayout,
    config: SamplerConfig,
    rng: ChaCha8Rng,
    halton_index: u64,
    scramble: Option<Scramble>,
    ce: CeParams,
    pending: Vec<(Modification, f64)>,
    feedback: Option<FeedbackSpec>,
}

impl Sampler {
    pub fn new(layout: SpaceLayout, config: SamplerConfig) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            halton_index: 0,
            scramble: config.halton_scramble.then(|| Scramble::new(config.seed)),
            ce: CeParams::initial(&layout),
            pending: Vec::new(),
            feedback: None,
            layout,
            config,
        }
    }

    pub fn with_feedback(mut self, fb: FeedbackSpec) -> Result<Self, SamplerError> {
        check_feedback(&self.layout, &fb)?;
        self.feedback = Some(fb);
        Ok(self)
    }

    pub fn kind(&self) -> SamplerKind {
        self.config.kind
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn halton_index(&self) -> u64 {
        self.halton_index
    }

    pub fn ce_params(&self) -> &CeParams {
        &self.ce
    }

    pub fn next(&mut self) -> Result<Modification, SamplerError> {
        Ok(match self.config.kind {
            SamplerKind::Uniform => sample_uniform(&self.layout, &mut self.rng),
            SamplerKind::Halton => {
                self.halton_index += 1;
                sample_halton_with(&self.layout, self.halton_index, self.scramble.as_ref())
            }
            SamplerKind::CrossEntropy => ce_sample(&self.ce, &self.layout, &mut self.rng),
            SamplerKind::Feedback => {
                let fb = self.feedback.as_ref().ok_or(SamplerError::MissingFeedback)?;
                sample_feedback(&self.layout, fb, &mut self.rng)?
            }
        })
    }

    /// Reports the objective of an evaluated sample (higher is more
    /// falsifying). The cross-entropy sampler refits once a full batch has
    /// been observed; other kinds ignore it.
    pub fn observe(&mut self, m: Modification, objective: f64) -> Result<(), SamplerError> {
        if self.config.kind != SamplerKind::CrossEntropy {
            return Ok(());
        }
        self.pending.push((m, objective));
        if self.pending.len() >= self.config.ce.batch_size.max(MIN_BATCH) {
            let batch = std::mem::take(&mut self.pending);
            self.ce = ce_update(&self.ce, &self.layout, &self.config.ce, &batch)?;
        }
        Ok(())
    }
}

/// Cross-entropy objective: 1 for a counterexample, otherwise `-min(p, r)`.
pub fn objective(misclassified: bool, precision: f64, recall: f64) -> f64 {
    if misclassified {
        1.0
    } else {
        -precision.min(recall)
    }
}
