//! The 14-dimensional modification space: layout, validity, unit-cube
//! mapping and the diversity metric.
//!
//! Dimension order is fixed: `background, car1, car2, car3` (discrete) followed
//! by `x1, z1, x2, z2, x3, z3, brightness, sharpness, contrast, color`
//! (continuous). Car slots 2 and 3 may be [`ABSENT`]; slot 1 never is.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_DISCRETE: usize = 4;
pub const NUM_CONTINUOUS: usize = 10;
pub const NUM_DIMS: usize = NUM_DISCRETE + NUM_CONTINUOUS;

/// Sentinel for an empty car slot.
pub const ABSENT: Option<u32> = None;

pub const DISCRETE_NAMES: [&str; NUM_DISCRETE] = ["background", "car1", "car2", "car3"];
pub const CONTINUOUS_NAMES: [&str; NUM_CONTINUOUS] = [
    "x1",
    "z1",
    "x2",
    "z2",
    "x3",
    "z3",
    "brightness",
    "sharpness",
    "contrast",
    "color",
];

pub const BACKGROUND: usize = 0;
pub const BRIGHTNESS: usize = 6;
pub const SHARPNESS: usize = 7;
pub const CONTRAST: usize = 8;
pub const COLOR: usize = 9;

/// Index of the continuous `x` dim for car slot `slot` (0-based).
pub fn x_dim(slot: usize) -> usize {
    2 * slot
}

/// Index of the continuous `z` dim for car slot `slot` (0-based).
pub fn z_dim(slot: usize) -> usize {
    2 * slot + 1
}

#[derive(Debug, Error)]
pub enum ModSpaceError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("unit vector has {0} entries, expected {NUM_DIMS}")]
    UnitLength(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDim {
    pub name: String,
    pub cardinality: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDim {
    pub name: String,
    #[serde(flatten)]
    pub range: Range,
}

/// Names, cardinalities and ranges of the modification space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct SpaceLayout {
    discrete: [DiscreteDim; NUM_DISCRETE],
    continuous: [ContinuousDim; NUM_CONTINUOUS],
}

#[derive(Serialize, Deserialize)]
struct RawLayout {
    discrete: Vec<DiscreteDim>,
    continuous: Vec<ContinuousDim>,
}

impl TryFrom<RawLayout> for SpaceLayout {
    type Error = ModSpaceError;

    fn try_from(raw: RawLayout) -> Result<Self, Self::Error> {
        if raw.discrete.len() != NUM_DISCRETE || raw.continuous.len() != NUM_CONTINUOUS {
            return Err(ModSpaceError::InvalidLayout(format!(
                "expected {NUM_DISCRETE} discrete and {NUM_CONTINUOUS} continuous dims, got {} and {}",
                raw.discrete.len(),
                raw.continuous.len()
            )));
        }
        for (dim, expected) in raw.discrete.iter().zip(DISCRETE_NAMES) {
            if dim.name != expected {
                return Err(ModSpaceError::InvalidLayout(format!(
                    "discrete dim '{}' where '{expected}' was expected",
                    dim.name
                )));
            }
            if dim.cardinality == 0 {
                return Err(ModSpaceError::InvalidLayout(format!(
                    "dim '{}' has zero cardinality",
                    dim.name
                )));
            }
        }
        for (dim, expected) in raw.continuous.iter().zip(CONTINUOUS_NAMES) {
            if dim.name != expected {
                return Err(ModSpaceError::InvalidLayout(format!(
                    "continuous dim '{}' where '{expected}' was expected",
                    dim.name
                )));
            }
            let r = dim.range;
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(ModSpaceError::InvalidLayout(format!(
                    "dim '{}' has empty or unbounded range [{}, {}]",
                    dim.name, r.min, r.max
                )));
            }
        }
        Ok(SpaceLayout {
            discrete: raw.discrete.try_into().expect("length checked"),
            continuous: raw.continuous.try_into().expect("length checked"),
        })
    }
}

impl From<SpaceLayout> for RawLayout {
    fn from(layout: SpaceLayout) -> Self {
        RawLayout {
            discrete: layout.discrete.to_vec(),
            continuous: layout.continuous.to_vec(),
        }
    }
}

impl SpaceLayout {
    /// Layout with position dims over `[0,1]` and photometric dims over
    /// `[0.5, 1.5]`.
    pub fn new(n_backgrounds: u32, n_cars: u32) -> Result<Self, ModSpaceError> {
        Self::with_photometric_range(n_backgrounds, n_cars, Range::new(0.5, 1.5))
    }

    pub fn with_photometric_range(
        n_backgrounds: u32,
        n_cars: u32,
        photometric: Range,
    ) -> Result<Self, ModSpaceError> {
        if !photometric.contains(1.0) || photometric.min >= 1.0 || photometric.max <= 1.0 {
            return Err(ModSpaceError::InvalidLayout(
                "photometric range must contain 1.0 in its interior".into(),
            ));
        }
        let cards = [n_backgrounds, n_cars, n_cars, n_cars];
        let raw = RawLayout {
            discrete: DISCRETE_NAMES
                .iter()
                .zip(cards)
                .map(|(name, cardinality)| DiscreteDim {
                    name: name.to_string(),
                    cardinality,
                })
                .collect(),
            continuous: CONTINUOUS_NAMES
                .iter()
                .enumerate()
                .map(|(i, name)| ContinuousDim {
                    name: name.to_string(),
                    range: if i < BRIGHTNESS {
                        Range::new(0.0, 1.0)
                    } else {
                        photometric
                    },
                })
                .collect(),
        };
        SpaceLayout::try_from(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ModSpaceError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModSpaceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn discrete(&self) -> &[DiscreteDim; NUM_DISCRETE] {
        &self.discrete
    }

    pub fn continuous(&self) -> &[ContinuousDim; NUM_CONTINUOUS] {
        &self.continuous
    }

    pub fn cardinality(&self, dim: usize) -> u32 {
        self.discrete[dim].cardinality
    }

    pub fn range(&self, dim: usize) -> Range {
        self.continuous[dim].range
    }

    /// Car slots 2 and 3 may be empty.
    pub fn allows_absent(dim: usize) -> bool {
        dim >= 2
    }

    /// Number of buckets used for a discrete dim on the unit interval,
    /// counting the ABSENT bucket where allowed.
    pub fn buckets(&self, dim: usize) -> u32 {
        self.cardinality(dim) + u32::from(Self::allows_absent(dim))
    }
}

/// A point of the modification space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "NamedModification", into = "NamedModification")]
pub struct Modification {
    pub discrete: [Option<u32>; NUM_DISCRETE],
    pub continuous: [f64; NUM_CONTINUOUS],
}

/// Flat wire form of a [`Modification`]; ABSENT slots serialize as `null`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct NamedModification {
    background: Option<u32>,
    car1: Option<u32>,
    car2: Option<u32>,
    car3: Option<u32>,
    x1: f64,
    z1: f64,
    x2: f64,
    z2: f64,
    x3: f64,
    z3: f64,
    brightness: f64,
    sharpness: f64,
    contrast: f64,
    color: f64,
}

impl From<NamedModification> for Modification {
    fn from(n: NamedModification) -> Self {
        Modification {
            discrete: [n.background, n.car1, n.car2, n.car3],
            continuous: [
                n.x1,
                n.z1,
                n.x2,
                n.z2,
                n.x3,
                n.z3,
                n.brightness,
                n.sharpness,
                n.contrast,
                n.color,
            ],
        }
    }
}

impl From<Modification> for NamedModification {
    fn from(m: Modification) -> Self {
        let [background, car1, car2, car3] = m.discrete;
        let [x1, z1, x2, z2, x3, z3, brightness, sharpness, contrast, color] = m.continuous;
        NamedModification {
            background,
            car1,
            car2,
            car3,
            x1,
            z1,
            x2,
            z2,
            x3,
            z3,
            brightness,
            sharpness,
            contrast,
            color,
        }
    }
}

impl Modification {
    /// Canonical JSON form, used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("modification serializes")
    }

    pub fn background(&self) -> u32 {
        self.discrete[BACKGROUND].expect("background is never absent in a valid modification")
    }

    /// Model id in car slot `slot` (0-based), `None` if the slot is empty.
    pub fn car(&self, slot: usize) -> Option<u32> {
        self.discrete[1 + slot]
    }

    pub fn num_cars(&self) -> usize {
        (0..3).filter(|&s| self.car(s).is_some()).count()
    }

    /// Photometric neutral modification at midpoint positions; used as a
    /// starting point by tests and fixtures.
    pub fn neutral(background: u32, car1: u32) -> Self {
        Modification {
            discrete: [Some(background), Some(car1), ABSENT, ABSENT],
            continuous: [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0],
        }
    }
}

/// A violated constraint reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoCar,
    MissingBackground,
    IdOutOfRange { dim: String, id: u32, cardinality: u32 },
    OutOfRange { dim: String, value: f64, range: Range },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoCar => write!(f, "at least one car: car1 must not be ABSENT"),
            Violation::MissingBackground => write!(f, "background must not be ABSENT"),
            Violation::IdOutOfRange { dim, id, cardinality } => {
                write!(f, "{dim}: id {id} outside [0, {cardinality})")
            }
            Violation::OutOfRange { dim, value, range } => {
                write!(f, "{dim}: {value} outside [{}, {}]", range.min, range.max)
            }
        }
    }
}

/// Checks every invariant of `m` under `layout`; an empty list means valid.
pub fn validate(m: &Modification, layout: &SpaceLayout) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, dim) in layout.discrete().iter().enumerate() {
        match m.discrete[i] {
            None if i == BACKGROUND => out.push(Violation::MissingBackground),
            None if i == 1 => out.push(Violation::NoCar),
            None => {}
            Some(id) if id >= dim.cardinality => out.push(Violation::IdOutOfRange {
                dim: dim.name.clone(),
                id,
                cardinality: dim.cardinality,
            }),
            Some(_) => {}
        }
    }
    for (i, dim) in layout.continuous().iter().enumerate() {
        let v = m.continuous[i];
        if !dim.range.contains(v) {
            out.push(Violation::OutOfRange {
                dim: dim.name.clone(),
                value: v,
                range: dim.range,
            });
        }
    }
    out
}

pub fn is_valid(m: &Modification, layout: &SpaceLayout) -> bool {
    validate(m, layout).is_empty()
}

/// Diversity metric: number of differing discrete dims plus the Euclidean
/// distance of the continuous parts. Two ABSENT slots compare equal.
pub fn distance(a: &Modification, b: &Modification) -> f64 {
    let mismatches = a
        .discrete
        .iter()
        .zip(&b.discrete)
        .filter(|(x, y)| x != y)
        .count() as f64;
    let sq: f64 = a
        .continuous
        .iter()
        .zip(&b.continuous)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    mismatches + sq.sqrt()
}

/// [`distance`] after checking both points are valid under a shared layout.
pub fn checked_distance(
    a: &Modification,
    layout_a: &SpaceLayout,
    b: &Modification,
    layout_b: &SpaceLayout,
) -> Result<f64, ModSpaceError> {
    if layout_a != layout_b {
        return Err(ModSpaceError::LayoutMismatch(
            "modifications come from different layouts".into(),
        ));
    }
    for (name, m) in [("first", a), ("second", b)] {
        let v = validate(m, layout_a);
        if let Some(first) = v.first() {
            return Err(ModSpaceError::LayoutMismatch(format!(
                "{name} modification is invalid under the layout: {first}"
            )));
        }
    }
    Ok(distance(a, b))
}

/// Maps a modification into `[0,1]^14`. Discrete ids map to the centre of
/// their equal-width bucket; ABSENT occupies the last bucket of slots 2-3.
pub fn normalize_to_unit(m: &Modification, layout: &SpaceLayout) -> [f64; NUM_DIMS] {
    let mut u = [0.0; NUM_DIMS];
    for (i, slot) in m.discrete.iter().enumerate() {
        let buckets = layout.buckets(i) as f64;
        let index = match slot {
            Some(id) => *id as f64,
            None => layout.cardinality(i) as f64,
        };
        u[i] = (index + 0.5) / buckets;
    }
    for (i, v) in m.continuous.iter().enumerate() {
        let r = layout.range(i);
        u[NUM_DISCRETE + i] = (v - r.min) / r.width();
    }
    u
}

/// Bucket index of unit value `u` among `buckets` equal-width buckets.
pub fn unit_to_bucket(u: f64, buckets: u32) -> u32 {
    let idx = (u * buckets as f64).floor();
    (idx.max(0.0) as u32).min(buckets - 1)
}

/// Inverse of [`normalize_to_unit`]. Values outside `[0,1]` are clamped.
pub fn denormalize_from_unit(
    u: &[f64],
    layout: &SpaceLayout,
) -> Result<Modification, ModSpaceError> {
    if u.len() != NUM_DIMS {
        return Err(ModSpaceError::UnitLength(u.len()));
    }
    let mut discrete = [None; NUM_DISCRETE];
    for (i, slot) in discrete.iter_mut().enumerate() {
        let bucket = unit_to_bucket(u[i], layout.buckets(i));
        *slot = if bucket < layout.cardinality(i) {
            Some(bucket)
        } else {
            ABSENT
        };
    }
    let mut continuous = [0.0; NUM_CONTINUOUS];
    for (i, c) in continuous.iter_mut().enumerate() {
        let r = layout.range(i);
        *c = r.clamp(r.min + u[NUM_DISCRETE + i].clamp(0.0, 1.0) * r.width());
    }
    Ok(Modification {
        discrete,
        continuous,
    })
}
