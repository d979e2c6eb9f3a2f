//! Bounded frequent-subset counting over unordered features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::table::ErrorTable;
use super::ErrorTableError;

/// A set of `column = value` assignments and the number of rows realizing
/// all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequentSet {
    /// Sorted by column name.
    pub items: Vec<(String, String)>,
    pub count: usize,
}

impl FrequentSet {
    pub fn describe(&self) -> String {
        self.items
            .iter()
            .map(|(c, v)| format!("{c}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), out);
}

/// Counts every value assignment over every subset of at most `max_k`
/// unordered columns and returns the `top_n` most frequent. Ties go to larger
/// subsets, then to lexicographically smaller column names and values.
pub fn frequent_unordered(
    table: &ErrorTable,
    max_k: usize,
    top_n: usize,
) -> Result<Vec<FrequentSet>, ErrorTableError> {
    if max_k == 0 {
        return Err(ErrorTableError::Analysis("max_k must be at least 1".into()));
    }
    let schema = table.schema();
    // column indices sorted by name so that item lists come out sorted
    let mut cols = schema.unordered();
    if cols.is_empty() {
        return Err(ErrorTableError::Analysis("no unordered columns".into()));
    }
    cols.sort_by(|&a, &b| schema.columns()[a].name.cmp(&schema.columns()[b].name));

    let mut subsets = Vec::new();
    for k in 1..=max_k.min(cols.len()) {
        combinations(cols.len(), k, &mut subsets);
    }
    let mut counts: HashMap<Vec<(usize, &str)>, usize> = HashMap::new();
    for row in table.rows() {
        for subset in &subsets {
            let key: Vec<(usize, &str)> = subset
                .iter()
                .map(|&i| {
                    let c = cols[i];
                    (c, row.values[c].as_cat().expect("unordered columns hold values"))
                })
                .collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<FrequentSet> = counts
        .into_iter()
        .map(|(key, count)| FrequentSet {
            items: key
                .into_iter()
                .map(|(c, v)| (schema.columns()[c].name.clone(), v.to_string()))
                .collect(),
            count,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(b.items.len().cmp(&a.items.len()))
            .then_with(|| a.items.cmp(&b.items))
    });
    entries.truncate(top_n);
    Ok(entries)
}
