//! CSV ingestion and schema inference.
//!
//! Columns are stored column-major: categorical and temporal columns as
//! codes into their (sorted) domain, numerical columns as `f64` with `NaN`
//! marking a missing cell.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::util::fnv1a64;

pub(crate) const MISSING_CODE: u32 = u32::MAX;

/// Share of non-missing cells that must parse as numbers for a column to be
/// treated as numerical.
pub const NUMERIC_SHARE: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Categorical,
    Temporal,
    Numerical,
}

impl FieldKind {
    /// Categorical and temporal fields can filter and break down a subspace.
    pub fn is_dimension(self) -> bool {
        !matches!(self, FieldKind::Numerical)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    /// Distinct values; chronological for temporal fields, lexicographic otherwise.
    Values { values: Vec<String> },
    /// `None` when every cell is missing.
    Range { min: Option<f64>, max: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    pub domain: Domain,
}

impl FieldSchema {
    pub fn values(&self) -> &[String] {
        match &self.domain {
            Domain::Values { values } => values,
            Domain::Range { .. } => &[],
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Column {
    Codes(Vec<u32>),
    Numbers(Vec<f64>),
}

/// A borrowed cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell<'a> {
    Missing,
    Text(&'a str),
    Number(f64),
}

/// An ingested table. Immutable after load.
#[derive(Clone, Debug)]
pub struct Dataset {
    id: String,
    schema: Vec<FieldSchema>,
    columns: Vec<Column>,
    /// Per field, occurrence count of each domain value (aligned with the domain).
    frequencies: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
    row_count: usize,
}

impl Dataset {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn schema(&self) -> &[FieldSchema] {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSchema> {
        self.field_index(name).map(|i| &self.schema[i])
    }

    pub fn fields_of(&self, kind: FieldKind) -> impl Iterator<Item = &FieldSchema> {
        self.schema.iter().filter(move |f| f.kind == kind)
    }

    pub fn dimension_fields(&self) -> impl Iterator<Item = &FieldSchema> {
        self.schema.iter().filter(|f| f.kind.is_dimension())
    }

    pub(crate) fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub(crate) fn code_of(&self, field: usize, value: &str) -> Option<u32> {
        self.schema[field]
            .values()
            .binary_search_by(|probe| self.compare_values(field, probe, value))
            .ok()
            .map(|i| i as u32)
    }

    fn compare_values(&self, field: usize, a: &str, b: &str) -> std::cmp::Ordering {
        match self.schema[field].kind {
            FieldKind::Temporal => temporal_order(a, b),
            _ => a.cmp(b),
        }
    }

    pub fn cell(&self, row: usize, field: usize) -> Cell<'_> {
        match &self.columns[field] {
            Column::Codes(codes) => match codes[row] {
                MISSING_CODE => Cell::Missing,
                c => Cell::Text(&self.schema[field].values()[c as usize]),
            },
            Column::Numbers(nums) => {
                let v = nums[row];
                if v.is_nan() {
                    Cell::Missing
                } else {
                    Cell::Number(v)
                }
            }
        }
    }

    /// Domain values of a dimension field, most frequent first (ties in domain order).
    pub fn values_by_frequency(&self, field: usize) -> Vec<&str> {
        let values = self.schema[field].values();
        let freq = &self.frequencies[field];
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
        order.into_iter().map(|i| values[i].as_str()).collect()
    }

    /// One record per row, keyed by field name; missing cells are `null`.
    pub fn records(&self) -> Vec<BTreeMap<String, serde_json::Value>> {
        (0..self.row_count)
            .map(|r| {
                self.schema
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let v = match self.cell(r, i) {
                            Cell::Missing => serde_json::Value::Null,
                            Cell::Text(s) => serde_json::Value::String(s.to_string()),
                            Cell::Number(n) => serde_json::json!(n),
                        };
                        (f.name.clone(), v)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Parse CSV bytes into a dataset whose id is a content hash.
pub fn load_dataset(bytes: &[u8]) -> Result<Dataset, DataError> {
    load_dataset_with_id(format!("{:016x}", fnv1a64(bytes)), bytes)
}

pub fn load_dataset_with_id(id: impl Into<String>, bytes: &[u8]) -> Result<Dataset, DataError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(DataError::EmptyDataset);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut seen = HashSet::new();
    for (i, name) in header.iter().enumerate() {
        if name.is_empty() {
            return Err(DataError::Format {
                line: 1,
                message: format!("column {} has an empty name", i + 1),
            });
        }
        if !seen.insert(name.as_str()) {
            return Err(DataError::Format {
                line: 1,
                message: format!("duplicate column `{name}`"),
            });
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        for (col, cell) in raw.iter_mut().zip(record.iter()) {
            col.push(cell.to_string());
        }
    }
    let row_count = raw.first().map_or(0, Vec::len);
    if row_count == 0 {
        return Err(DataError::EmptyDataset);
    }

    let mut schema = Vec::with_capacity(header.len());
    let mut columns = Vec::with_capacity(header.len());
    let mut frequencies = Vec::with_capacity(header.len());
    for (name, cells) in header.iter().zip(raw) {
        let (field, column, freq) = infer_column(name, cells);
        schema.push(field);
        columns.push(column);
        frequencies.push(freq);
    }
    let index = schema
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), i))
        .collect();
    Ok(Dataset {
        id: id.into(),
        schema,
        columns,
        frequencies,
        index,
        row_count,
    })
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    };
    DataError::Format { line, message }
}

fn is_missing(s: &str) -> bool {
    s.trim().is_empty()
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim().replace(',', "");
    let t = t.strip_suffix('%').unwrap_or(&t);
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn infer_column(name: &str, cells: Vec<String>) -> (FieldSchema, Column, Vec<usize>) {
    let present: Vec<&str> = cells.iter().map(String::as_str).filter(|s| !is_missing(s)).collect();

    let temporal_kind = present
        .first()
        .and_then(|s| parse_temporal(s))
        .map(|(k, _)| k)
        .filter(|k| present.iter().all(|s| parse_temporal(s).is_some_and(|(k2, _)| k2 == *k)));

    if temporal_kind.is_none() {
        let numeric = present.iter().filter(|s| parse_number(s).is_some()).count();
        if present.is_empty() || numeric as f64 >= NUMERIC_SHARE * present.len() as f64 {
            let nums: Vec<f64> = cells
                .iter()
                .map(|s| parse_number(s).unwrap_or(f64::NAN))
                .collect();
            let finite = nums.iter().copied().filter(|v| !v.is_nan());
            let min = finite.clone().reduce(f64::min);
            let max = finite.reduce(f64::max);
            return (
                FieldSchema {
                    name: name.to_string(),
                    kind: FieldKind::Numerical,
                    domain: Domain::Range { min, max },
                },
                Column::Numbers(nums),
                Vec::new(),
            );
        }
    }

    let kind = if temporal_kind.is_some() {
        FieldKind::Temporal
    } else {
        FieldKind::Categorical
    };
    let mut values: Vec<String> = present.iter().map(|s| s.to_string()).collect();
    values.sort_by(|a, b| match kind {
        FieldKind::Temporal => temporal_order(a, b),
        _ => a.cmp(b),
    });
    values.dedup();
    let lookup: HashMap<&str, u32> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i as u32))
        .collect();
    let mut freq = vec![0usize; values.len()];
    let codes: Vec<u32> = cells
        .iter()
        .map(|s| {
            if is_missing(s) {
                MISSING_CODE
            } else {
                let c = lookup[s.as_str()];
                freq[c as usize] += 1;
                c
            }
        })
        .collect();
    (
        FieldSchema {
            name: name.to_string(),
            kind,
            domain: Domain::Values { values },
        },
        Column::Codes(codes),
        freq,
    )
}

/// Recognized temporal value shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalKind {
    Year,
    YearMonth,
    Date,
    Month,
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Parse a temporal value into its shape and a position on a time axis
/// (fractional years; month index for bare month names).
pub fn parse_temporal(s: &str) -> Option<(TemporalKind, f64)> {
    let s = s.trim();
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());

    if s.len() == 4 && digits(s) {
        let y: f64 = s.parse().ok()?;
        return (1000.0..=2999.0).contains(&y).then_some((TemporalKind::Year, y));
    }
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() >= 2 && parts.len() <= 3 && parts[0].len() == 4 && parts.iter().all(|p| digits(p)) {
        let y: f64 = parts[0].parse().ok()?;
        let m: u32 = parts[1].parse().ok()?;
        if parts[1].len() != 2 || !(1..=12).contains(&m) {
            return None;
        }
        let month_pos = (m - 1) as f64 / 12.0;
        if parts.len() == 2 {
            return Some((TemporalKind::YearMonth, y + month_pos));
        }
        let d: u32 = parts[2].parse().ok()?;
        if parts[2].len() != 2 || !(1..=31).contains(&d) {
            return None;
        }
        return Some((TemporalKind::Date, y + month_pos + (d - 1) as f64 / 372.0));
    }
    let lower = s.to_ascii_lowercase();
    MONTHS
        .iter()
        .position(|m| *m == lower || (lower.len() == 3 && m.starts_with(&lower)))
        .map(|i| (TemporalKind::Month, (i + 1) as f64))
}

fn temporal_order(a: &str, b: &str) -> std::cmp::Ordering {
    let ka = parse_temporal(a).map(|(_, t)| t);
    let kb = parse_temporal(b).map(|(_, t)| t);
    match (ka, kb) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}
