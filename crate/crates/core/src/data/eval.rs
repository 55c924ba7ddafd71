//! Filter, group, aggregate and validate facts against a dataset.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset, FieldKind, MISSING_CODE};
use super::DataConfig;
use crate::error::DataError;
use crate::fact::{
    Aggregation, DataFact, FactType, Measure, Rule, Subspace, Violation, META_DECREASING,
    META_INCREASING, META_MAXIMUM, META_MINIMUM,
};

/// Label of the single group produced when a fact has no breakdown.
pub const ALL_GROUP: &str = "all";

/// Sorted row indices into a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowSet(Vec<u32>);

impl RowSet {
    pub fn all(dataset: &Dataset) -> Self {
        RowSet((0..dataset.row_count() as u32).collect())
    }

    pub fn from_indices(mut rows: Vec<u32>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        RowSet(rows)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Keep the rows matching every filter of `subspace`.
    pub fn refine(&self, dataset: &Dataset, subspace: &Subspace) -> Result<RowSet, DataError> {
        let mut rows = self.0.clone();
        for filter in subspace.filters() {
            let idx = dataset
                .field_index(&filter.field)
                .ok_or_else(|| DataError::Schema(format!("unknown field `{}`", filter.field)))?;
            let field = &dataset.schema()[idx];
            if !field.kind.is_dimension() {
                return Err(DataError::Schema(format!(
                    "`{}` is numerical and cannot filter",
                    filter.field
                )));
            }
            let code = dataset
                .code_of(idx, &filter.value)
                .ok_or_else(|| DataError::Domain {
                    field: filter.field.clone(),
                    value: filter.value.clone(),
                })?;
            let Column::Codes(codes) = dataset.column(idx) else {
                unreachable!("dimension fields are coded")
            };
            rows.retain(|&r| codes[r as usize] == code);
        }
        Ok(RowSet(rows))
    }
}

/// Rows matching every filter; the empty subspace matches all rows.
pub fn apply_subspace(dataset: &Dataset, subspace: &Subspace) -> Result<RowSet, DataError> {
    RowSet::all(dataset).refine(dataset, subspace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub label: String,
    pub value: f64,
}

/// Group `rows` by `breakdown` and aggregate `measure` per group.
///
/// Temporal groups come out in chronological order, categorical groups by
/// descending value with ties broken by label. Missing measure cells are
/// skipped by the folds (a group with nothing to fold is dropped) while
/// `count` counts rows. Rows with a missing breakdown value are skipped.
pub fn aggregate(
    dataset: &Dataset,
    rows: &RowSet,
    breakdown: Option<&str>,
    measure: &Measure,
) -> Result<Vec<GroupValue>, DataError> {
    let numbers = measure_column(dataset, measure)?;
    let Some(breakdown) = breakdown else {
        let mut acc = Fold::new(measure.aggregation);
        for &r in rows.indices() {
            acc.push(numbers.map(|n| n[r as usize]));
        }
        return Ok(acc
            .finish()
            .map(|value| GroupValue {
                label: ALL_GROUP.to_string(),
                value,
            })
            .into_iter()
            .collect());
    };

    let bidx = dataset
        .field_index(breakdown)
        .ok_or_else(|| DataError::Schema(format!("unknown field `{breakdown}`")))?;
    let bfield = &dataset.schema()[bidx];
    let Column::Codes(codes) = dataset.column(bidx) else {
        return Err(DataError::Type(format!(
            "`{breakdown}` is numerical and cannot break down a subspace"
        )));
    };
    let mut folds: Vec<Option<Fold>> = vec![None; bfield.values().len()];
    for &r in rows.indices() {
        let code = codes[r as usize];
        if code == MISSING_CODE {
            continue;
        }
        folds[code as usize]
            .get_or_insert_with(|| Fold::new(measure.aggregation))
            .push(numbers.map(|n| n[r as usize]));
    }
    let mut groups: Vec<GroupValue> = folds
        .into_iter()
        .enumerate()
        .filter_map(|(code, fold)| {
            fold.and_then(Fold::finish).map(|value| GroupValue {
                label: bfield.values()[code].clone(),
                value,
            })
        })
        .collect();
    if bfield.kind == FieldKind::Categorical {
        groups.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.label.cmp(&b.label)));
    }
    Ok(groups)
}

fn measure_column<'a>(dataset: &'a Dataset, measure: &Measure) -> Result<Option<&'a [f64]>, DataError> {
    if measure.aggregation == Aggregation::Count {
        if let Some(f) = &measure.field {
            if dataset.field_index(f).is_none() {
                return Err(DataError::Schema(format!("unknown field `{f}`")));
            }
        }
        return Ok(None);
    }
    let field = measure
        .field
        .as_deref()
        .ok_or_else(|| DataError::Type(format!("{} needs a measure field", measure.aggregation)))?;
    let idx = dataset
        .field_index(field)
        .ok_or_else(|| DataError::Schema(format!("unknown field `{field}`")))?;
    match dataset.column(idx) {
        Column::Numbers(n) => Ok(Some(n)),
        Column::Codes(_) => Err(DataError::Type(format!(
            "cannot take the {} of non-numerical field `{field}`",
            measure.aggregation
        ))),
    }
}

#[derive(Clone, Copy, Debug)]
struct Fold {
    agg: Aggregation,
    rows: usize,
    n: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl Fold {
    fn new(agg: Aggregation) -> Self {
        Fold {
            agg,
            rows: 0,
            n: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: Option<f64>) {
        self.rows += 1;
        if let Some(v) = v.filter(|v| !v.is_nan()) {
            self.n += 1;
            self.sum += v;
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
    }

    fn finish(self) -> Option<f64> {
        match self.agg {
            Aggregation::Count => (self.rows > 0).then_some(self.rows as f64),
            _ if self.n == 0 => None,
            Aggregation::Sum => Some(self.sum),
            Aggregation::Average => Some(self.sum / self.n as f64),
            Aggregation::Minimum => Some(self.min),
            Aggregation::Maximum => Some(self.max),
        }
    }
}

/// The data behind a fact: its groups, the highlighted subset and, for
/// association facts, the second series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FactView {
    pub groups: Vec<GroupValue>,
    pub highlighted: Vec<String>,
    pub support_row_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series2: Option<Vec<f64>>,
}

impl FactView {
    pub fn value_of(&self, label: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.label == label).map(|g| g.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.value).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        ValidityReport {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

/// Result of checking one fact: its report and, when valid, its view.
#[derive(Clone, Debug)]
pub struct Assessment {
    pub report: ValidityReport,
    pub view: Option<FactView>,
}

type GroupKey = (Subspace, Option<String>, Measure);

type Memo<K, V> = RefCell<HashMap<K, Rc<V>>>;

/// Fact evaluation over one dataset with memoized row sets, groupings and
/// verdicts. Owned by a single search or enumeration; not shared across threads.
pub struct FactEngine<'a> {
    dataset: &'a Dataset,
    config: DataConfig,
    rows: Memo<Subspace, Result<RowSet, DataError>>,
    groups: Memo<GroupKey, Result<Vec<GroupValue>, DataError>>,
    verdicts: Memo<DataFact, Assessment>,
}

impl<'a> FactEngine<'a> {
    pub fn new(dataset: &'a Dataset, config: DataConfig) -> Self {
        FactEngine {
            dataset,
            config,
            rows: RefCell::default(),
            groups: RefCell::default(),
            verdicts: RefCell::default(),
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn config(&self) -> &DataConfig {
        &self.config
    }

    pub fn rows(&self, subspace: &Subspace) -> Rc<Result<RowSet, DataError>> {
        if let Some(r) = self.rows.borrow().get(subspace) {
            return r.clone();
        }
        let r = Rc::new(apply_subspace(self.dataset, subspace));
        self.rows.borrow_mut().insert(subspace.clone(), r.clone());
        r
    }

    pub fn groups(
        &self,
        subspace: &Subspace,
        breakdown: Option<&str>,
        measure: &Measure,
    ) -> Rc<Result<Vec<GroupValue>, DataError>> {
        let key = (subspace.clone(), breakdown.map(str::to_string), measure.clone());
        if let Some(g) = self.groups.borrow().get(&key) {
            return g.clone();
        }
        let g = Rc::new(match &*self.rows(subspace) {
            Ok(rows) => aggregate(self.dataset, rows, breakdown, measure),
            Err(e) => Err(e.clone()),
        });
        self.groups.borrow_mut().insert(key, g.clone());
        g
    }

    pub fn assess(&self, fact: &DataFact) -> Rc<Assessment> {
        if let Some(a) = self.verdicts.borrow().get(fact) {
            return a.clone();
        }
        let a = Rc::new(self.assess_uncached(fact));
        self.verdicts.borrow_mut().insert(fact.clone(), a.clone());
        a
    }

    pub fn is_valid(&self, fact: &DataFact) -> bool {
        self.assess(fact).report.valid
    }

    pub fn validate(&self, fact: &DataFact) -> ValidityReport {
        self.assess(fact).report.clone()
    }

    pub fn evaluate(&self, fact: &DataFact) -> Result<FactView, DataError> {
        let a = self.assess(fact);
        match &a.view {
            Some(view) => Ok(view.clone()),
            None => Err(DataError::Invalid(a.report.clone())),
        }
    }

    fn assess_uncached(&self, fact: &DataFact) -> Assessment {
        let invalid = |violations: Vec<Violation>| Assessment {
            report: ValidityReport::from_violations(violations),
            view: None,
        };
        let mut violations = fact.structural_violations();
        violations.extend(self.field_violations(fact));
        if !violations.is_empty() {
            return invalid(violations);
        }

        let rows = self.rows(&fact.subspace);
        let rows = match &*rows {
            Ok(rows) if !rows.is_empty() => rows,
            Ok(_) => {
                return invalid(vec![Violation::new(
                    Rule::EmptySubspace,
                    "no rows match the subspace",
                )])
            }
            Err(e) => return invalid(vec![Violation::new(Rule::FilterDomain, e.to_string())]),
        };

        if fact.fact_type == FactType::Association {
            return self.assess_association(fact, rows);
        }

        let groups = self.groups(&fact.subspace, fact.breakdown.as_deref(), &fact.measure);
        let groups = match &*groups {
            Ok(g) => g,
            Err(e) => return invalid(vec![Violation::new(Rule::MeasureKind, e.to_string())]),
        };
        let violations = self.group_violations(fact, groups);
        if !violations.is_empty() {
            return invalid(violations);
        }
        Assessment {
            report: ValidityReport::from_violations(Vec::new()),
            view: Some(FactView {
                groups: groups.clone(),
                highlighted: fact.focus.clone(),
                support_row_count: rows.len(),
                series2: None,
            }),
        }
    }

    fn field_violations(&self, fact: &DataFact) -> Vec<Violation> {
        let ds = self.dataset;
        let mut out = Vec::new();
        let kind_of = |name: &str, out: &mut Vec<Violation>| -> Option<FieldKind> {
            let k = ds.field(name).map(|f| f.kind);
            if k.is_none() {
                out.push(Violation::new(Rule::UnknownField, format!("no field named `{name}`")));
            }
            k
        };

        for filter in fact.subspace.filters() {
            match kind_of(&filter.field, &mut out) {
                Some(FieldKind::Numerical) => out.push(Violation::new(
                    Rule::FilterKind,
                    format!("`{}` is numerical and cannot filter", filter.field),
                )),
                Some(_) => {
                    let idx = ds.field_index(&filter.field).expect("checked");
                    if ds.code_of(idx, &filter.value).is_none() {
                        out.push(Violation::new(
                            Rule::FilterDomain,
                            format!("`{}` is not a value of `{}`", filter.value, filter.field),
                        ));
                    }
                }
                None => {}
            }
        }
        if let Some(b) = &fact.breakdown {
            match kind_of(b, &mut out) {
                Some(FieldKind::Numerical) => out.push(Violation::new(
                    Rule::BreakdownKind,
                    format!("`{b}` is numerical and cannot break down"),
                )),
                Some(FieldKind::Categorical) if fact.fact_type == FactType::Trend => {
                    out.push(Violation::new(
                        Rule::TrendTemporal,
                        format!("trend needs a temporal breakdown, `{b}` is categorical"),
                    ))
                }
                _ => {}
            }
        }
        if let Some(m) = &fact.measure.field {
            let kind = kind_of(m, &mut out);
            if fact.measure.aggregation != Aggregation::Count
                && kind.is_some_and(|k| k != FieldKind::Numerical)
            {
                out.push(Violation::new(
                    Rule::MeasureKind,
                    format!("`{m}` is not numerical"),
                ));
            }
        }
        if let Some(s) = &fact.meta.second_field {
            if kind_of(s, &mut out).is_some_and(|k| k != FieldKind::Numerical) {
                out.push(Violation::new(
                    Rule::MeasureKind,
                    format!("`{s}` is not numerical"),
                ));
            }
        }
        out
    }

    fn assess_association(&self, fact: &DataFact, rows: &RowSet) -> Assessment {
        let ds = self.dataset;
        let col = |name: &str| match ds.column(ds.field_index(name).expect("checked")) {
            Column::Numbers(n) => n,
            Column::Codes(_) => unreachable!("checked numerical"),
        };
        let xs = col(fact.measure.field.as_deref().expect("checked"));
        let ys = col(fact.meta.second_field.as_deref().expect("checked"));
        let mut groups = Vec::new();
        let mut series2 = Vec::new();
        for &r in rows.indices() {
            let (x, y) = (xs[r as usize], ys[r as usize]);
            if !x.is_nan() && !y.is_nan() {
                groups.push(GroupValue {
                    label: (r + 1).to_string(),
                    value: x,
                });
                series2.push(y);
            }
        }
        let min = self.config.min_association_points;
        if groups.len() < min {
            return Assessment {
                report: ValidityReport::from_violations(vec![Violation::new(
                    Rule::AssociationPoints,
                    format!("association needs {min} complete rows, got {}", groups.len()),
                )]),
                view: None,
            };
        }
        Assessment {
            report: ValidityReport::from_violations(Vec::new()),
            view: Some(FactView {
                groups,
                highlighted: Vec::new(),
                support_row_count: rows.len(),
                series2: Some(series2),
            }),
        }
    }

    fn group_violations(&self, fact: &DataFact, groups: &[GroupValue]) -> Vec<Violation> {
        let mut out = Vec::new();
        let min = self.config.min_groups(fact.fact_type);
        if groups.len() < min {
            out.push(Violation::new(
                Rule::MinGroups,
                format!("{} needs at least {min} groups, got {}", fact.fact_type, groups.len()),
            ));
            return out;
        }
        let position = |label: &str| groups.iter().position(|g| g.label == label);
        for label in &fact.focus {
            if position(label).is_none() {
                out.push(Violation::new(
                    Rule::FocusNotInGroups,
                    format!("focus `{label}` is not among the groups"),
                ));
            }
        }
        if !out.is_empty() {
            return out;
        }
        let values: Vec<f64> = groups.iter().map(|g| g.value).collect();
        match fact.fact_type {
            FactType::Trend => match trend_direction(&values, self.config.trend_epsilon) {
                Some(dir) if dir == fact.meta.extra => {}
                Some(dir) => out.push(Violation::new(
                    Rule::TrendDirection,
                    format!("series is {dir}, fact claims {}", fact.meta.extra),
                )),
                None => out.push(Violation::new(
                    Rule::TrendDirection,
                    "series has no direction",
                )),
            },
            FactType::Extreme => {
                let v = values[position(&fact.focus[0]).expect("checked")];
                let target = if fact.meta.extra == META_MAXIMUM {
                    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    values.iter().copied().fold(f64::INFINITY, f64::min)
                };
                if v != target {
                    out.push(Violation::new(
                        Rule::ExtremeDirection,
                        format!("`{}` is not the {}", fact.focus[0], fact.meta.extra),
                    ));
                }
            }
            FactType::Outlier => {
                let z = z_scores(&values)
                    .map(|z| z[position(&fact.focus[0]).expect("checked")].abs())
                    .unwrap_or(0.0);
                if z < self.config.outlier_z {
                    out.push(Violation::new(
                        Rule::OutlierTest,
                        format!("|z| = {z:.3} is below {}", self.config.outlier_z),
                    ));
                }
            }
            _ => {}
        }
        out
    }
}

/// Least-squares slope of `values` against their index.
pub fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

/// `increasing`/`decreasing` by the sign of the fitted slope; `None` when flat.
pub fn trend_direction(values: &[f64], epsilon: f64) -> Option<&'static str> {
    let s = slope(values);
    if s.abs() < epsilon || !s.is_finite() {
        None
    } else if s > 0.0 {
        Some(META_INCREASING)
    } else {
        Some(META_DECREASING)
    }
}

/// Population z-scores; `None` when the values have zero spread.
pub fn z_scores(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len() as f64;
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Index of the extreme group for `meta` (`minimum`/`maximum`), first on ties.
pub fn extreme_index(values: &[f64], meta: &str) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) if meta == META_MINIMUM => *v < values[b],
            Some(b) => *v > values[b],
        };
        if better {
            best = Some(i);
        }
    }
    best
}

pub fn validate_fact(dataset: &Dataset, fact: &DataFact) -> ValidityReport {
    FactEngine::new(dataset, DataConfig::default()).validate(fact)
}

pub fn evaluate_fact(dataset: &Dataset, fact: &DataFact) -> Result<FactView, DataError> {
    FactEngine::new(dataset, DataConfig::default()).evaluate(fact)
}
