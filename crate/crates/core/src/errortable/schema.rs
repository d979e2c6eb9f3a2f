use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ErrorTableError;
use crate::generator::{implicit_feature_names, AssetLibrary, NONE_VALUE};
use crate::modspace::{Range, SpaceLayout, CONTINUOUS_NAMES, DISCRETE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureOrder {
    Ordered,
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Interval(Range),
    Categorical(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
    pub order: FeatureOrder,
    pub domain: Domain,
}

impl Column {
    pub fn ordered(name: &str, range: Range) -> Self {
        Column {
            name: name.to_string(),
            kind: FeatureKind::Explicit,
            order: FeatureOrder::Ordered,
            domain: Domain::Interval(range),
        }
    }

    pub fn categorical<I, S>(name: &str, kind: FeatureKind, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Column {
            name: name.to_string(),
            kind,
            order: FeatureOrder::Unordered,
            domain: Domain::Categorical(values.into_iter().map(Into::into).collect()),
        }
    }

    pub fn admits(&self, v: &FeatureValue) -> bool {
        match (&self.domain, v) {
            (Domain::Interval(r), FeatureValue::Real(x)) => r.contains(*x),
            (Domain::Categorical(set), FeatureValue::Cat(s)) => set.contains(s),
            _ => false,
        }
    }
}

/// One cell of an error-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Real(f64),
    Cat(String),
}

impl FeatureValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            FeatureValue::Real(x) => Some(*x),
            FeatureValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Cat(s) => Some(s),
            FeatureValue::Real(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Real(x) => write!(f, "{x}"),
            FeatureValue::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self, ErrorTableError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(ErrorTableError::Schema(format!("duplicate column '{}'", c.name)));
            }
            if c.kind == FeatureKind::Implicit && c.order == FeatureOrder::Ordered {
                return Err(ErrorTableError::Schema(format!(
                    "implicit column '{}' must be unordered",
                    c.name
                )));
            }
            let interval = matches!(c.domain, Domain::Interval(_));
            if interval != (c.order == FeatureOrder::Ordered) {
                return Err(ErrorTableError::Schema(format!(
                    "column '{}': ordered columns take real intervals, unordered ones value sets",
                    c.name
                )));
            }
        }
        Ok(FeatureSchema { columns })
    }

    /// The standard schema over a layout and library: all 14 modification dims
    /// as explicit columns followed by the metadata-derived implicit columns.
    pub fn for_library(layout: &SpaceLayout, lib: &AssetLibrary) -> Result<Self, ErrorTableError> {
        let mut columns = Vec::new();
        for (i, name) in CONTINUOUS_NAMES.iter().enumerate() {
            columns.push(Column::ordered(name, layout.range(i)));
        }
        for (i, name) in DISCRETE_NAMES.iter().enumerate() {
            let mut values: Vec<String> = (0..layout.cardinality(i)).map(|v| v.to_string()).collect();
            if SpaceLayout::allows_absent(i) {
                values.push(NONE_VALUE.to_string());
            }
            columns.push(Column::categorical(name, FeatureKind::Explicit, values));
        }
        let bg: Vec<_> = lib.backgrounds().collect();
        let cars: Vec<_> = lib.cars().collect();
        for name in implicit_feature_names() {
            let values: BTreeSet<String> = match name.as_str() {
                "environment" => bg.iter().map(|b| b.environment.clone()).collect(),
                "background_color" => bg.iter().map(|b| b.dominant_color.clone()).collect(),
                "num_cars" => ["1", "2", "3"].map(String::from).into(),
                other => {
                    let field = other.split_once('_').map(|(_, f)| f).unwrap_or_default();
                    let mut set: BTreeSet<String> = cars
                        .iter()
                        .map(|c| match field {
                            "color" => c.color.clone(),
                            "orientation" => c.orientation.clone(),
                            "design" => c.design.clone(),
                            _ => c.name.clone(),
                        })
                        .collect();
                    if !other.starts_with("car1") {
                        set.insert(NONE_VALUE.to_string());
                    }
                    set
                }
            };
            columns.push(Column::categorical(&name, FeatureKind::Implicit, values));
        }
        FeatureSchema::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn ordered_explicit(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| {
                let c = &self.columns[i];
                c.kind == FeatureKind::Explicit && c.order == FeatureOrder::Ordered
            })
            .collect()
    }

    pub fn unordered(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].order == FeatureOrder::Unordered)
            .collect()
    }
}
