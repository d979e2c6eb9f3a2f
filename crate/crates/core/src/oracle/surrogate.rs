//! Deterministic stand-in detector with planted blind spots.
//!
//! Every ground-truth car comes back as a slightly jittered box, unless the
//! scene matches a blind-spot rule that the training memory does not yet
//! cover. Coverage of a rule at a scene counts memory points within
//! `coverage_radius` (modification distance) that match the same rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detector, OracleError, Query};
use crate::errortable::{feature_value, FeatureValue};
use crate::generator::{implicit_feature_names, LabeledImage, ManifestRecord, MIN_BOX_SIDE};
use crate::metrics::{BBox, Detection};
use crate::modspace::{distance, Modification, SpaceLayout, CONTINUOUS_NAMES, DISCRETE_NAMES};

pub const DEFAULT_COVERAGE_RADIUS: f64 = 0.75;
pub const DEFAULT_COVERAGE_COUNT: usize = 5;
/// Maximum relative shift and relative size change applied to each box.
pub const JITTER_FRACTION: f64 = 0.05;
const CLUTTER_SCORE: f64 = 0.6;
const CLUTTER_TRIES: u64 = 64;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Four values in [-1, 1] from the 16-bit lanes of `h`.
fn lanes(h: u64) -> [f64; 4] {
    std::array::from_fn(|k| ((h >> (16 * k)) & 0xFFFF) as f64 / 65535.0 * 2.0 - 1.0)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Shifts the centre by up to `JITTER_FRACTION` of the box size on each axis
/// and rescales each side by a factor in `1 ± JITTER_FRACTION`.
pub fn jitter_box(b: &BBox, h: u64) -> BBox {
    let [ux, uy, uw, uh] = lanes(h);
    let (w, ht) = (b.width(), b.height());
    let cx = (b.x_min + b.x_max) / 2.0 + ux * JITTER_FRACTION * w;
    let cy = (b.y_min + b.y_max) / 2.0 + uy * JITTER_FRACTION * ht;
    let hw = w * (1.0 + uw * JITTER_FRACTION) / 2.0;
    let hh = ht * (1.0 + uh * JITTER_FRACTION) / 2.0;
    BBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
}

/// Conjunction of interval constraints on ordered features and value-set
/// constraints on unordered ones. Intervals are half-open `[lo, hi)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlindSpotRule {
    pub ordered: BTreeMap<String, [f64; 2]>,
    pub unordered: BTreeMap<String, BTreeSet<String>>,
}

impl BlindSpotRule {
    pub fn validate(&self, layout: &SpaceLayout) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Config(m));
        if self.ordered.is_empty() && self.unordered.is_empty() {
            return bad("blind-spot rule without constraints".into());
        }
        for (name, [lo, hi]) in &self.ordered {
            let Some(d) = CONTINUOUS_NAMES.iter().position(|n| n == name) else {
                return bad(format!("'{name}' is not an ordered feature"));
            };
            let r = layout.range(d);
            if !(lo < hi) || *lo < r.min || *hi > r.max {
                return bad(format!(
                    "interval [{lo}, {hi}) for '{name}' not within [{}, {}]",
                    r.min, r.max
                ));
            }
        }
        let implicit = implicit_feature_names();
        for (name, values) in &self.unordered {
            if !DISCRETE_NAMES.contains(&name.as_str()) && !implicit.contains(name) {
                return bad(format!("'{name}' is not an unordered feature"));
            }
            if values.is_empty() {
                return bad(format!("empty value set for '{name}'"));
            }
        }
        Ok(())
    }

    pub fn matches(&self, m: &Modification, implicit: &BTreeMap<String, String>) -> bool {
        self.ordered.iter().all(|(name, [lo, hi])| {
            matches!(feature_value(name, m, implicit), Some(FeatureValue::Real(v)) if *lo <= v && v < *hi)
        }) && self.unordered.iter().all(|(name, set)| {
            matches!(feature_value(name, m, implicit), Some(FeatureValue::Cat(v)) if set.contains(&v))
        })
    }
}

/// A training scene as the surrogate remembers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub modification: Modification,
    pub implicit: BTreeMap<String, String>,
}

impl From<&LabeledImage> for TrainingPoint {
    fn from(img: &LabeledImage) -> Self {
        TrainingPoint {
            modification: img.modification,
            implicit: img.implicit.clone(),
        }
    }
}

impl From<&ManifestRecord> for TrainingPoint {
    fn from(r: &ManifestRecord) -> Self {
        TrainingPoint {
            modification: r.modification,
            implicit: r.implicit.clone(),
        }
    }
}

/// On-disk form of a surrogate (`--model=surrogate:<file>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub rules: Vec<BlindSpotRule>,
    pub coverage_radius: f64,
    pub coverage_count: usize,
    pub clutter_tags: BTreeSet<String>,
    pub memory: Vec<TrainingPoint>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            rules: Vec::new(),
            coverage_radius: DEFAULT_COVERAGE_RADIUS,
            coverage_count: DEFAULT_COVERAGE_COUNT,
            clutter_tags: BTreeSet::new(),
            memory: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    config: SurrogateConfig,
}

impl SurrogateModel {
    pub fn new(config: SurrogateConfig, layout: &SpaceLayout) -> Result<Self, OracleError> {
        if !(config.coverage_radius > 0.0) {
            return Err(OracleError::Config("coverage radius must be positive".into()));
        }
        if config.coverage_count < 1 {
            return Err(OracleError::Config("coverage count must be at least 1".into()));
        }
        for r in &config.rules {
            r.validate(layout)?;
        }
        Ok(SurrogateModel { config })
    }

    pub fn load(path: &Path, layout: &SpaceLayout) -> Result<Self, OracleError> {
        let text = fs::read_to_string(path)
            .map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?;
        let config: SurrogateConfig = serde_json::from_str(&text)
            .map_err(|e| OracleError::Config(format!("{}: {e}", path.display())))?;
        Self::new(config, layout)
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn memory(&self) -> &[TrainingPoint] {
        &self.config.memory
    }

    /// Returns the model after training on `augmentation`.
    pub fn retrain(&self, augmentation: &[TrainingPoint]) -> SurrogateModel {
        let mut next = self.clone();
        next.retrain_in_place(augmentation);
        next
    }

    pub fn retrain_in_place(&mut self, augmentation: &[TrainingPoint]) {
        self.config.memory.extend_from_slice(augmentation);
    }

    fn nearby(&self, m: &Modification) -> impl Iterator<Item = &TrainingPoint> + '_ {
        let m = *m;
        let radius = self.config.coverage_radius;
        self.config
            .memory
            .iter()
            .filter(move |p| distance(&p.modification, &m) <= radius)
    }

    /// Memory points within the radius that also match `rule`.
    pub fn rule_coverage(&self, rule: &BlindSpotRule, m: &Modification) -> usize {
        self.nearby(m)
            .filter(|p| rule.matches(&p.modification, &p.implicit))
            .count()
    }

    /// Whether some rule matches the scene and is under-covered.
    pub fn in_blind_spot(&self, m: &Modification, implicit: &BTreeMap<String, String>) -> bool {
        self.config.rules.iter().any(|r| {
            r.matches(m, implicit) && self.rule_coverage(r, m) < self.config.coverage_count
        })
    }

    fn cluttered(&self, m: &Modification, implicit: &BTreeMap<String, String>) -> bool {
        let Some(env) = implicit.get("environment") else {
            return false;
        };
        if !self.config.clutter_tags.contains(env) {
            return false;
        }
        let covered = self
            .nearby(m)
            .filter(|p| p.implicit.get("environment") == Some(env))
            .count();
        covered < self.config.coverage_count
    }

    pub fn detect(&self, image: &LabeledImage) -> Vec<Detection> {
        let m = &image.modification;
        let canon = m.canonical_json();
        let (w, h) = image.pixels.dimensions();
        let (w, h) = (f64::from(w), f64::from(h));
        let mut out = Vec::new();
        if !self.in_blind_spot(m, &image.implicit) {
            for gt in &image.boxes {
                let key = format!("{canon}#{}", gt.slot);
                let jittered = jitter_box(&gt.bbox, fnv1a64(key.as_bytes()));
                let bbox = jittered.clip(w, h).unwrap_or(jittered);
                let score = 0.5 + 0.5 * unit(fnv1a64(format!("{key}#score").as_bytes()));
                out.push(Detection::new(bbox, score));
            }
        }
        if self.cluttered(m, &image.implicit) {
            if let Some(b) = clutter_box(&canon, &image.gt_boxes(), w, h) {
                out.push(Detection::new(b, CLUTTER_SCORE));
            }
        }
        out
    }
}

/// Hash-placed square box that does not overlap any ground truth.
fn clutter_box(canon: &str, gts: &[BBox], w: f64, h: f64) -> Option<BBox> {
    let side = (0.2 * w.min(h)).max(MIN_BOX_SIDE).min(w.min(h));
    let disjoint = |b: &BBox| gts.iter().all(|g| b.intersection(g).is_none());
    (0..CLUTTER_TRIES)
        .map(|k| {
            let hx = fnv1a64(format!("{canon}#clutter#{k}").as_bytes());
            let x = unit(hx) * (w - side);
            let y = unit(hx.rotate_left(32).wrapping_mul(0x9e37_79b9_7f4a_7c15)) * (h - side);
            BBox::new(x, y, x + side, y + side)
        })
        .find(disjoint)
}

impl Detector for SurrogateModel {
    fn predict(&self, query: &Query<'_>) -> Result<Vec<Detection>, OracleError> {
        Ok(self.detect(query.image))
    }
}
