//! Turns error-table analyses into sampler feedback.
//!
//! Implicit features are not sampled directly; each implicit value is
//! resolved to the explicit asset ids whose metadata carries it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::frequent::{frequent_unordered, FrequentSet};
use super::pca::{pca_ordered, Loading, PcaOptions};
use super::table::ErrorTable;
use super::ErrorTableError;
use crate::generator::{AssetLibrary, CarMeta, NONE_VALUE};
use crate::modspace::DISCRETE_NAMES;

/// A frequent combination expressed over the explicit discrete dims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCombo {
    /// Allowed ids per discrete dim name; `None` stands for ABSENT.
    pub constraints: BTreeMap<String, BTreeSet<Option<u32>>>,
    pub count: usize,
    /// The assignments this combo was resolved from.
    pub source: Vec<(String, String)>,
    /// Assignments that have no explicit counterpart.
    pub residue: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSpec {
    pub ordered_priority: Vec<Loading>,
    pub ordered_centroid: BTreeMap<String, f64>,
    pub unordered_combos: Vec<ResolvedCombo>,
}

impl FeedbackSpec {
    pub fn is_degenerate(&self) -> bool {
        self.ordered_priority.is_empty() && self.unordered_combos.is_empty()
    }
}

/// Feedback plus what could not be expressed over explicit dims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub spec: FeedbackSpec,
    pub dropped: Vec<String>,
}

fn car_field<'a>(c: &'a CarMeta, field: &str) -> Option<&'a str> {
    Some(match field {
        "color" => &c.color,
        "orientation" => &c.orientation,
        "design" => &c.design,
        "name" => &c.name,
        _ => return None,
    })
}

enum Resolution {
    Constrain(&'static str, BTreeSet<Option<u32>>),
    Many(Vec<(&'static str, BTreeSet<Option<u32>>)>),
    Residue,
}

fn resolve(column: &str, value: &str, lib: &AssetLibrary) -> Result<Resolution, ErrorTableError> {
    if let Some(i) = DISCRETE_NAMES.iter().position(|n| *n == column) {
        let id = if value == NONE_VALUE {
            None
        } else {
            let id: u32 = value.parse().map_err(|_| ErrorTableError::UnknownValue {
                column: column.to_string(),
                value: value.to_string(),
            })?;
            let card = if i == 0 { lib.num_backgrounds() } else { lib.num_cars() };
            if id >= card {
                return Err(ErrorTableError::UnknownValue {
                    column: column.to_string(),
                    value: value.to_string(),
                });
            }
            Some(id)
        };
        return Ok(Resolution::Constrain(DISCRETE_NAMES[i], [id].into()));
    }
    match column {
        "environment" | "background_color" => {
            let ids = lib
                .backgrounds()
                .filter(|b| {
                    if column == "environment" {
                        b.environment == value
                    } else {
                        b.dominant_color == value
                    }
                })
                .map(|b| Some(b.id))
                .collect();
            Ok(Resolution::Constrain("background", ids))
        }
        "num_cars" => {
            let all: BTreeSet<Option<u32>> = lib.cars().map(|c| Some(c.id)).collect();
            Ok(match value {
                "1" => Resolution::Many(vec![("car2", [None].into()), ("car3", [None].into())]),
                "3" => Resolution::Many(vec![("car2", all.clone()), ("car3", all)]),
                _ => Resolution::Residue,
            })
        }
        _ => {
            let Some((slot, field)) = column.split_once('_') else {
                return Ok(Resolution::Residue);
            };
            let Some(dim) = DISCRETE_NAMES.iter().copied().find(|n| *n == slot && *n != "background") else {
                return Ok(Resolution::Residue);
            };
            if value == NONE_VALUE {
                return Ok(Resolution::Constrain(dim, [None].into()));
            }
            let mut ids = BTreeSet::new();
            for c in lib.cars() {
                match car_field(c, field) {
                    Some(v) if v == value => {
                        ids.insert(Some(c.id));
                    }
                    Some(_) => {}
                    None => return Ok(Resolution::Residue),
                }
            }
            Ok(Resolution::Constrain(dim, ids))
        }
    }
}

/// Resolves a frequent set into explicit constraints. Returns `Ok(None)` when
/// the intersection of allowed ids is empty for some dim or nothing explicit
/// remains.
pub fn resolve_combo(set: &FrequentSet, lib: &AssetLibrary) -> Result<Option<ResolvedCombo>, ErrorTableError> {
    let mut constraints: BTreeMap<String, BTreeSet<Option<u32>>> = BTreeMap::new();
    let mut residue = Vec::new();
    let mut add = |dim: &str, ids: BTreeSet<Option<u32>>| {
        constraints
            .entry(dim.to_string())
            .and_modify(|cur| *cur = cur.intersection(&ids).copied().collect())
            .or_insert(ids);
    };
    for (col, val) in &set.items {
        match resolve(col, val, lib)? {
            Resolution::Constrain(dim, ids) => add(dim, ids),
            Resolution::Many(list) => list.into_iter().for_each(|(d, ids)| add(d, ids)),
            Resolution::Residue => residue.push((col.clone(), val.clone())),
        }
    }
    // car1 is never empty
    if let Some(c1) = constraints.get_mut("car1") {
        c1.remove(&None);
    }
    if constraints.is_empty() || constraints.values().any(|s| s.is_empty()) {
        return Ok(None);
    }
    Ok(Some(ResolvedCombo {
        constraints,
        count: set.count,
        source: set.items.clone(),
        residue,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOptions {
    pub max_k: usize,
    pub top_n: usize,
    pub pca: PcaOptions,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        FeedbackOptions {
            max_k: 3,
            top_n: 5,
            pca: PcaOptions::default(),
        }
    }
}

pub fn derive_feedback(
    table: &ErrorTable,
    lib: &AssetLibrary,
    opts: FeedbackOptions,
) -> Result<FeedbackOutcome, ErrorTableError> {
    if table.is_empty() {
        return Err(ErrorTableError::Analysis("error table is empty".into()));
    }
    let ordered_priority = pca_ordered(table, opts.pca)?;
    let mut ordered_centroid = BTreeMap::new();
    for idx in table.schema().ordered_explicit() {
        let n = table.len() as f64;
        let mean = table
            .column_values(idx)
            .filter_map(|v| v.as_real())
            .sum::<f64>()
            / n;
        ordered_centroid.insert(table.schema().columns()[idx].name.clone(), mean);
    }
    let sets = frequent_unordered(table, opts.max_k, opts.top_n)?;
    let mut combos = Vec::new();
    let mut dropped = Vec::new();
    for set in &sets {
        match resolve_combo(set, lib)? {
            Some(c) => combos.push(c),
            None => {
                log::warn!("no asset matches frequent combination {{{}}}", set.describe());
                dropped.push(set.describe());
            }
        }
    }
    if !sets.is_empty() && combos.is_empty() {
        return Err(ErrorTableError::Unresolvable(dropped.join("; ")));
    }
    Ok(FeedbackOutcome {
        spec: FeedbackSpec {
            ordered_priority,
            ordered_centroid,
            unordered_combos: combos,
        },
        dropped,
    })
}

/// Machine-readable analysis output with a one-line summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub rows: usize,
    pub pca: Vec<Loading>,
    pub top_combos: Vec<FrequentSet>,
    pub summary: String,
}

pub fn analyze(table: &ErrorTable, opts: FeedbackOptions) -> Result<AnalysisReport, ErrorTableError> {
    let pca = pca_ordered(table, opts.pca)?;
    let top_combos = frequent_unordered(table, opts.max_k, opts.top_n)?;
    let ranking = pca
        .iter()
        .take(4)
        .map(|l| format!("{} ({:.2})", l.column, l.loading.abs()))
        .collect::<Vec<_>>()
        .join(" > ");
    let summary = match top_combos.first() {
        Some(top) => format!(
            "{} counterexamples; most frequent combination {{{}}} in {} rows; most sensitive ordered features: {}",
            table.len(),
            top.describe(),
            top.count,
            ranking
        ),
        None => format!("{} counterexamples; most sensitive ordered features: {ranking}", table.len()),
    };
    Ok(AnalysisReport {
        rows: table.len(),
        pca,
        top_combos,
        summary,
    })
}
