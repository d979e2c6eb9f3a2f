use serde::{Deserialize, Serialize};

use crate::modspace::Modification;
use crate::sampler::SamplerKind;

/// One line of the per-iteration harvest log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub image_id: String,
    pub modification: Modification,
    pub misclassified: bool,
    pub precision: f64,
    pub recall: f64,
    /// Added to the augmentation set (misclassified and diverse enough).
    pub harvested: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestSummary {
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub counterexamples: usize,
    /// Misclassified images discarded by the diversity filter.
    pub rejected_diversity: usize,
    /// Samples the generator refused to render; they do not count as iterations.
    pub rejected_render: usize,
    pub hit_rate: f64,
    pub stop: StopReason,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub test_set: String,
    pub ap: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub ratio: f64,
    pub train_size: usize,
    pub accuracy: Vec<AccuracyEntry>,
    /// Mean of AP + AR over the test sets; the selection criterion.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub harvest: HarvestSummary,
    pub c_x: usize,
    pub c_t: usize,
    /// The model entering this cycle, on every test set known after the split.
    pub base: Vec<AccuracyEntry>,
    pub variants: Vec<VariantReport>,
    pub selected_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    /// The initial model on the original test set.
    pub baseline: Vec<AccuracyEntry>,
    pub cycles: Vec<CycleReport>,
    pub final_train_size: usize,
    pub wall_time_s: f64,
}

pub(crate) fn entry<'a>(entries: &'a [AccuracyEntry], name: &str) -> Option<&'a AccuracyEntry> {
    entries.iter().find(|e| e.test_set == name)
}

impl CycleReport {
    pub fn base_on(&self, test_set: &str) -> Option<&AccuracyEntry> {
        entry(&self.base, test_set)
    }

    pub fn selected(&self) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.ratio == self.selected_ratio)
    }
}
