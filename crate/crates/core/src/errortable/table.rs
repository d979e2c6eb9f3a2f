//! Error-table rows and persistence.
//!
//! CSV layout: a first line `#schema <json>`, then a header row with the
//! column names in schema order followed by `precision, recall, image_path,
//! modification`, then one row per counterexample. The JSONL variant stores
//! the schema on the first line and one row object per following line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{Domain, FeatureKind, FeatureOrder, FeatureSchema, FeatureValue};
use super::ErrorTableError;
use crate::generator::{LabeledImage, NONE_VALUE};
use crate::jsonl::{read_jsonl, JsonlWriter};
use crate::metrics::EvalResult;
use crate::modspace::{Modification, CONTINUOUS_NAMES, DISCRETE_NAMES};

const SCHEMA_PREFIX: &str = "#schema ";
const TRAILER: [&str; 4] = ["precision", "recall", "image_path", "modification"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub values: Vec<FeatureValue>,
    pub precision: f64,
    pub recall: f64,
    pub image_path: String,
    pub modification: Option<Modification>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    schema: FeatureSchema,
    rows: Vec<ErrorRow>,
}

/// Value of feature `name` for a scene: modification dims by name, anything
/// else from the implicit map.
pub fn feature_value(
    name: &str,
    m: &Modification,
    implicit: &BTreeMap<String, String>,
) -> Option<FeatureValue> {
    if let Some(i) = CONTINUOUS_NAMES.iter().position(|n| *n == name) {
        return Some(FeatureValue::Real(m.continuous[i]));
    }
    if let Some(i) = DISCRETE_NAMES.iter().position(|n| *n == name) {
        return Some(FeatureValue::Cat(
            m.discrete[i].map_or(NONE_VALUE.to_string(), |v| v.to_string()),
        ));
    }
    implicit.get(name).cloned().map(FeatureValue::Cat)
}

fn realize(name: &str, kind: FeatureKind, img: &LabeledImage) -> Option<FeatureValue> {
    if kind == FeatureKind::Implicit {
        return img.implicit.get(name).cloned().map(FeatureValue::Cat);
    }
    feature_value(name, &img.modification, &img.implicit)
}

impl ErrorTable {
    pub fn new(schema: FeatureSchema) -> Self {
        ErrorTable {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[ErrorRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Builds the row for a counterexample without storing it.
    pub fn make_row(
        &self,
        img: &LabeledImage,
        eval: &EvalResult,
        image_path: &str,
    ) -> Result<ErrorRow, ErrorTableError> {
        if !eval.misclassified {
            return Err(ErrorTableError::NotACounterexample {
                precision: eval.precision,
                recall: eval.recall,
            });
        }
        let values = self
            .schema
            .columns()
            .iter()
            .map(|c| {
                realize(&c.name, c.kind, img).ok_or_else(|| ErrorTableError::MissingFeature(c.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let row = ErrorRow {
            values,
            precision: eval.precision,
            recall: eval.recall,
            image_path: image_path.to_string(),
            modification: Some(img.modification),
        };
        self.check_row(&row)?;
        Ok(row)
    }

    /// Appends a counterexample; correct classifications are refused.
    pub fn append(&mut self, img: &LabeledImage, eval: &EvalResult, image_path: &str) -> Result<&ErrorRow, ErrorTableError> {
        let row = self.make_row(img, eval, image_path)?;
        self.rows.push(row);
        Ok(self.rows.last().expect("just pushed"))
    }

    pub fn push_row(&mut self, row: ErrorRow) -> Result<(), ErrorTableError> {
        self.check_row(&row)?;
        self.rows.push(row);
        Ok(())
    }

    fn check_row(&self, row: &ErrorRow) -> Result<(), ErrorTableError> {
        let cols = self.schema.columns();
        if row.values.len() != cols.len() {
            return Err(ErrorTableError::Schema(format!(
                "row has {} values for {} columns",
                row.values.len(),
                cols.len()
            )));
        }
        for (c, v) in cols.iter().zip(&row.values) {
            if !c.admits(v) {
                return Err(ErrorTableError::OutOfDomain {
                    column: c.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Column-major values of column `idx`.
    pub fn column_values(&self, idx: usize) -> impl Iterator<Item = &FeatureValue> {
        self.rows.iter().map(move |r| &r.values[idx])
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ErrorTableError> {
        let mut w = ErrorTableWriter::create(path, &self.schema)?;
        for r in &self.rows {
            w.write_row(r)?;
        }
        Ok(())
    }

    /// Loads a CSV table; an unterminated final line is ignored.
    pub fn load_csv(path: &Path) -> Result<Self, ErrorTableError> {
        let text = fs::read_to_string(path).map_err(|e| ErrorTableError::io(path, e))?;
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut lines = complete.splitn(2, '\n');
        let first = lines.next().unwrap_or_default();
        let json = first
            .strip_prefix(SCHEMA_PREFIX)
            .ok_or_else(|| ErrorTableError::Format("missing #schema line".into()))?;
        let schema: FeatureSchema =
            serde_json::from_str(json).map_err(|e| ErrorTableError::Format(e.to_string()))?;
        let schema = FeatureSchema::new(schema.columns().to_vec())?;
        let body = lines.next().unwrap_or_default();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = reader.headers().map_err(|e| ErrorTableError::Format(e.to_string()))?.clone();
        let expected: Vec<&str> = schema
            .columns()
            .iter()
            .map(|c| c.name.as_str())
            .chain(TRAILER)
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(ErrorTableError::Format("header does not match schema order".into()));
        }
        let mut table = ErrorTable::new(schema);
        for rec in reader.records() {
            let rec = rec.map_err(|e| ErrorTableError::Format(e.to_string()))?;
            let n = table.schema.columns().len();
            let values = table
                .schema
                .columns()
                .iter()
                .zip(rec.iter())
                .map(|(c, cell)| match (&c.domain, c.order) {
                    (Domain::Interval(_), FeatureOrder::Ordered) => cell
                        .parse::<f64>()
                        .map(FeatureValue::Real)
                        .map_err(|_| ErrorTableError::OutOfDomain {
                            column: c.name.clone(),
                            value: cell.to_string(),
                        }),
                    _ => Ok(FeatureValue::Cat(cell.to_string())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let num = |i: usize| -> Result<f64, ErrorTableError> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| ErrorTableError::Format(format!("bad {} cell", TRAILER[i - n])))
            };
            let modification = match rec.get(n + 3) {
                Some(s) if !s.is_empty() => Some(
                    serde_json::from_str(s).map_err(|e| ErrorTableError::Format(e.to_string()))?,
                ),
                _ => None,
            };
            table.push_row(ErrorRow {
                values,
                precision: num(n)?,
                recall: num(n + 1)?,
                image_path: rec.get(n + 2).unwrap_or_default().to_string(),
                modification,
            })?;
        }
        Ok(table)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), ErrorTableError> {
        let mut w = JsonlWriter::create(path).map_err(|e| ErrorTableError::Format(e.to_string()))?;
        w.write(&self.schema).map_err(|e| ErrorTableError::Format(e.to_string()))?;
        for r in &self.rows {
            w.write(r).map_err(|e| ErrorTableError::Format(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, ErrorTableError> {
        let lines: Vec<serde_json::Value> =
            read_jsonl(path).map_err(|e| ErrorTableError::Format(e.to_string()))?;
        let mut it = lines.into_iter();
        let schema: FeatureSchema = serde_json::from_value(
            it.next().ok_or_else(|| ErrorTableError::Format("empty table file".into()))?,
        )
        .map_err(|e| ErrorTableError::Format(e.to_string()))?;
        let mut table = ErrorTable::new(FeatureSchema::new(schema.columns().to_vec())?);
        for v in it {
            let row: ErrorRow = serde_json::from_value(v).map_err(|e| ErrorTableError::Format(e.to_string()))?;
            table.push_row(row)?;
        }
        Ok(table)
    }

    /// Loads by extension: `.jsonl` or CSV otherwise.
    pub fn load(path: &Path) -> Result<Self, ErrorTableError> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            Self::load_jsonl(path)
        } else {
            Self::load_csv(path)
        }
    }
}

/// Appends rows to a CSV error table, flushing after every row.
pub struct ErrorTableWriter {
    path: PathBuf,
    file: File,
    width: usize,
}

impl ErrorTableWriter {
    pub fn create(path: &Path, schema: &FeatureSchema) -> Result<Self, ErrorTableError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| ErrorTableError::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| ErrorTableError::io(path, e))?;
        let json = serde_json::to_string(schema).expect("schema serializes");
        let header: Vec<&str> = schema
            .columns()
            .iter()
            .map(|c| c.name.as_str())
            .chain(TRAILER)
            .collect();
        let mut text = format!("{SCHEMA_PREFIX}{json}\n");
        text.push_str(&csv_line(header.iter().map(|s| s.to_string())));
        file.write_all(text.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| ErrorTableError::io(path, e))?;
        Ok(ErrorTableWriter {
            path: path.to_path_buf(),
            file,
            width: schema.columns().len(),
        })
    }

    pub fn write_row(&mut self, row: &ErrorRow) -> Result<(), ErrorTableError> {
        if row.values.len() != self.width {
            return Err(ErrorTableError::Schema("row width does not match schema".into()));
        }
        let cells = row
            .values
            .iter()
            .map(|v| v.to_string())
            .chain([
                row.precision.to_string(),
                row.recall.to_string(),
                row.image_path.clone(),
                row.modification
                    .map(|m| m.canonical_json())
                    .unwrap_or_default(),
            ]);
        let line = csv_line(cells);
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| ErrorTableError::io(&self.path, e))
    }
}

fn csv_line(cells: impl Iterator<Item = String>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(cells.collect::<Vec<_>>()).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 cells")
}
