//! Exhaustive enumeration of the valid fact space under caps.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FieldKind};
use super::eval::FactEngine;
use super::DataConfig;
use crate::error::DataError;
use crate::fact::{
    Aggregation, DataFact, FactType, Filter, Measure, Meta, Subspace, META_DECREASING,
    META_INCREASING, META_MAXIMUM, META_MINIMUM,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct EnumerationCaps {
    /// Filters added on top of `base_subspace`.
    pub max_filters: usize,
    /// Most frequent values considered per filter field.
    pub max_filter_values: usize,
    /// Most frequent breakdown values considered as focus labels.
    pub max_focus_values: usize,
    pub types: Vec<FactType>,
    /// Refuse to enumerate when the candidate estimate exceeds this.
    pub hard_limit: u64,
    /// Every enumerated fact's subspace contains these filters.
    pub base_subspace: Subspace,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps {
            max_filters: 2,
            max_filter_values: 20,
            max_focus_values: 20,
            types: FactType::ALL.to_vec(),
            hard_limit: 2_000_000,
            base_subspace: Subspace::empty(),
        }
    }
}

/// Streams valid facts one subspace at a time, in a deterministic order:
/// subspace, then type, breakdown, measure, meta and focus.
pub struct FactStream<'a> {
    engine: FactEngine<'a>,
    caps: EnumerationCaps,
    subspaces: Vec<Subspace>,
    next_subspace: usize,
    buffer: VecDeque<DataFact>,
}

impl Iterator for FactStream<'_> {
    type Item = DataFact;

    fn next(&mut self) -> Option<DataFact> {
        loop {
            if let Some(f) = self.buffer.pop_front() {
                return Some(f);
            }
            let subspace = self.subspaces.get(self.next_subspace)?.clone();
            self.next_subspace += 1;
            self.fill(&subspace);
        }
    }
}

impl<'a> FactStream<'a> {
    /// The engine used for validation; its caches hold every yielded fact's view.
    pub fn engine(&self) -> &FactEngine<'a> {
        &self.engine
    }

    fn fill(&mut self, subspace: &Subspace) {
        match &*self.engine.rows(subspace) {
            Ok(rows) if !rows.is_empty() => {}
            _ => return,
        }
        let ds = self.engine.dataset();
        for &t in &self.caps.types {
            for breakdown in breakdown_options(ds, t) {
                let focus = focus_options(ds, t, breakdown, self.caps.max_focus_values);
                for measure in measure_options(ds, t) {
                    for meta in meta_options(ds, t, &measure) {
                        for f in &focus {
                            let fact = DataFact {
                                fact_type: t,
                                subspace: subspace.clone(),
                                breakdown: breakdown.map(str::to_string),
                                measure: measure.clone(),
                                focus: f.clone(),
                                meta: meta.clone(),
                            };
                            if self.engine.is_valid(&fact) {
                                self.buffer.push_back(fact);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Every valid fact within `caps`, each exactly once.
pub fn enumerate_facts<'a>(
    dataset: &'a Dataset,
    config: &DataConfig,
    caps: &EnumerationCaps,
) -> Result<FactStream<'a>, DataError> {
    let estimate = estimate_candidates(dataset, caps);
    if estimate > caps.hard_limit {
        return Err(DataError::Capacity {
            estimate,
            limit: caps.hard_limit,
        });
    }
    Ok(FactStream {
        engine: FactEngine::new(dataset, config.clone()),
        caps: caps.clone(),
        subspaces: subspaces(dataset, caps),
        next_subspace: 0,
        buffer: VecDeque::new(),
    })
}

/// Number of candidates the enumeration would check before validation.
pub fn estimate_candidates(dataset: &Dataset, caps: &EnumerationCaps) -> u64 {
    let per_subspace: u64 = caps
        .types
        .iter()
        .map(|&t| {
            let measures = measure_options(dataset, t);
            let metas: u64 = measures
                .iter()
                .map(|m| meta_options(dataset, t, m).len() as u64)
                .sum();
            breakdown_options(dataset, t)
                .into_iter()
                .map(|b| focus_options(dataset, t, b, caps.max_focus_values).len() as u64 * metas)
                .sum::<u64>()
        })
        .sum();
    subspace_count(dataset, caps).saturating_mul(per_subspace)
}

fn filter_fields<'d>(dataset: &'d Dataset, caps: &EnumerationCaps) -> Vec<(&'d str, Vec<&'d str>)> {
    dataset
        .schema()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind.is_dimension() && !caps.base_subspace.contains_field(&f.name))
        .map(|(i, f)| {
            let mut values = dataset.values_by_frequency(i);
            values.truncate(caps.max_filter_values);
            (f.name.as_str(), values)
        })
        .collect()
}

fn subspace_count(dataset: &Dataset, caps: &EnumerationCaps) -> u64 {
    let sizes: Vec<u64> = filter_fields(dataset, caps)
        .iter()
        .map(|(_, v)| v.len() as u64)
        .collect();
    // elementary symmetric sums e_0..e_k
    let mut e = vec![0u64; caps.max_filters + 1];
    e[0] = 1;
    for s in sizes {
        for k in (1..e.len()).rev() {
            e[k] = e[k].saturating_add(e[k - 1].saturating_mul(s));
        }
    }
    e.into_iter().fold(0u64, u64::saturating_add)
}

fn subspaces(dataset: &Dataset, caps: &EnumerationCaps) -> Vec<Subspace> {
    let fields = filter_fields(dataset, caps);
    let mut out = Vec::new();
    let mut current: Vec<Filter> = Vec::new();
    fn walk(
        fields: &[(&str, Vec<&str>)],
        start: usize,
        remaining: usize,
        current: &mut Vec<Filter>,
        base: &Subspace,
        out: &mut Vec<Subspace>,
    ) {
        out.push(base.union(&Subspace::new(current.clone())).expect("disjoint by construction"));
        if remaining == 0 {
            return;
        }
        for i in start..fields.len() {
            let (name, values) = &fields[i];
            for v in values {
                current.push(Filter::new(*name, *v));
                walk(fields, i + 1, remaining - 1, current, base, out);
                current.pop();
            }
        }
    }
    walk(
        &fields,
        0,
        caps.max_filters,
        &mut current,
        &caps.base_subspace,
        &mut out,
    );
    out
}

fn breakdown_options(dataset: &Dataset, t: FactType) -> Vec<Option<&str>> {
    if !t.has_breakdown() {
        return vec![None];
    }
    dataset
        .schema()
        .iter()
        .filter(|f| match t {
            FactType::Trend => f.kind == FieldKind::Temporal,
            _ => f.kind.is_dimension(),
        })
        .map(|f| Some(f.name.as_str()))
        .collect()
}

/// Count (field-less) followed by every numerical field under each fold.
pub(crate) fn all_measures(dataset: &Dataset) -> Vec<Measure> {
    let mut out = vec![Measure::count()];
    for f in dataset.fields_of(FieldKind::Numerical) {
        for agg in [
            Aggregation::Sum,
            Aggregation::Average,
            Aggregation::Minimum,
            Aggregation::Maximum,
        ] {
            out.push(Measure::of(&f.name, agg));
        }
    }
    out
}

fn measure_options(dataset: &Dataset, t: FactType) -> Vec<Measure> {
    all_measures(dataset)
        .into_iter()
        .filter(|m| match t {
            FactType::Categorization => m.aggregation == Aggregation::Count,
            FactType::Proportion => matches!(m.aggregation, Aggregation::Count | Aggregation::Sum),
            FactType::Association => m.aggregation != Aggregation::Count,
            _ => true,
        })
        .collect()
}

fn meta_options(dataset: &Dataset, t: FactType, measure: &Measure) -> Vec<Meta> {
    match t {
        FactType::Trend => vec![Meta::extra(META_INCREASING), Meta::extra(META_DECREASING)],
        FactType::Extreme => vec![Meta::extra(META_MINIMUM), Meta::extra(META_MAXIMUM)],
        FactType::Association => dataset
            .fields_of(FieldKind::Numerical)
            .filter(|f| Some(&f.name) != measure.field.as_ref())
            .map(|f| Meta::second_field(&f.name))
            .collect(),
        _ => vec![Meta::default()],
    }
}

fn focus_options(
    dataset: &Dataset,
    t: FactType,
    breakdown: Option<&str>,
    max_values: usize,
) -> Vec<Vec<String>> {
    let arity = t.focus_arity();
    let labels: Vec<String> = breakdown
        .and_then(|b| dataset.field_index(b))
        .map(|i| {
            let mut v: Vec<String> = dataset
                .values_by_frequency(i)
                .into_iter()
                .map(str::to_string)
                .collect();
            v.truncate(max_values);
            v
        })
        .unwrap_or_default();
    let mut out = Vec::new();
    if arity.contains(&0) {
        out.push(Vec::new());
    }
    if arity.contains(&1) {
        out.extend(labels.iter().map(|l| vec![l.clone()]));
    }
    if arity.contains(&2) {
        for a in &labels {
            for b in &labels {
                if a != b {
                    out.push(vec![a.clone(), b.clone()]);
                }
            }
        }
    }
    out
}
