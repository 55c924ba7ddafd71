//! Independent oracles shared by the integration tests and the acceptance
//! driver. Nothing here calls into the code under test except to build
//! facts, so agreement with the library means something.
#![allow(dead_code)]

use std::collections::BTreeMap;

use storyweave::interp::ActionKind;
use storyweave::{Aggregation, DataFact, FactType, Filter, Measure, Subspace};

/// Walk the expected point along the unit direction by each step length and
/// average the misses.
pub fn reward_oracle(path: &[Vec<f64>], vs: &[f64], vt: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let dir = diff(vt, vs);
    let len = norm(&dir);
    let u: Vec<f64> = dir.iter().map(|x| x / len).collect();
    let mut star = vs.to_vec();
    let mut total = 0.0;
    for v in path {
        let step = norm(&diff(v, &star));
        let expected: Vec<f64> = star.iter().zip(&u).map(|(s, u)| s + u * step).collect();
        total += norm(&diff(v, &expected));
        star = expected;
    }
    -total / path.len() as f64
}

/// Conditions written out again from the action table, add/remove corrected.
pub fn condition_oracle(kind: ActionKind, s: &DataFact, t: &DataFact) -> bool {
    match kind {
        ActionKind::ModifyBreakdown => s.breakdown != t.breakdown,
        ActionKind::ModifyMeasure => s.measure != t.measure,
        ActionKind::ModifySubspace => s.subspace != t.subspace && s.subspace.len() == t.subspace.len(),
        ActionKind::ModifyFocus => {
            let mut focus: Vec<&str> = s.focus.iter().map(String::as_str).collect();
            let mut values: Vec<&str> = t.subspace.filters().iter().map(|f| f.value.as_str()).collect();
            focus.sort_unstable();
            values.sort_unstable();
            let focus_is_subspace = !focus.is_empty() && focus == values;
            s.focus != t.focus && !focus_is_subspace
        }
        ActionKind::ModifyType => true,
        ActionKind::AddSubspace => s.subspace.len() < t.subspace.len(),
        ActionKind::RemoveSubspace => s.subspace.len() > t.subspace.len(),
    }
}

/// Fold `(group, value)` rows by hand. Missing values count for `count`
/// only; a group with no present value has no other aggregate.
pub fn brute_fold<'a>(
    rows: impl IntoIterator<Item = (&'a str, Option<f64>)>,
    agg: Aggregation,
) -> BTreeMap<&'a str, f64> {
    let mut groups: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for (c, x) in rows {
        groups.entry(c).or_default().push(x);
    }
    groups
        .into_iter()
        .filter_map(|(k, xs)| {
            let present: Vec<f64> = xs.iter().flatten().copied().collect();
            let v = match agg {
                Aggregation::Count => xs.len() as f64,
                _ if present.is_empty() => return None,
                Aggregation::Sum => present.iter().sum(),
                Aggregation::Average => present.iter().sum::<f64>() / present.len() as f64,
                Aggregation::Minimum => present.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregation::Maximum => present.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            Some((k, v))
        })
        .collect()
}

pub fn year_fact(year: u32) -> DataFact {
    DataFact::new(FactType::Distribution, Measure::of("Sales", Aggregation::Sum))
        .with_subspace(Subspace::new(vec![Filter::new("Year", year.to_string())]))
        .with_breakdown("Region")
}

pub fn focus_year_fact(year: u32, measure: &str) -> DataFact {
    DataFact::new(FactType::Rank, Measure::of(measure, Aggregation::Average))
        .with_breakdown("Year")
        .with_focus([year.to_string()])
}

/// `n` fact triples mixing subspace, focus and measure edits.
pub fn trigram_facts(n: usize) -> Vec<[DataFact; 3]> {
    let measures = ["Sales", "Profit", "Units"];
    (0..n)
        .map(|i| {
            let y = 2000 + (i % 10) as u32;
            let m = measures[i % 3];
            match i % 3 {
                0 => [year_fact(y), year_fact(y + 1), focus_year_fact(y, m)],
                1 => [focus_year_fact(y, m), focus_year_fact(y + 1, m), focus_year_fact(y + 3, m)],
                _ => [year_fact(y), year_fact(y).with_focus(["North"]), focus_year_fact(y + 1, m)],
            }
        })
        .collect()
}
