//! One-sentence captions from per-type templates.
//!
//! Building blocks:
//!
//! * measure: `the number of records` for count, otherwise
//!   `the <aggregation> of <field>` (aggregation spelled `sum`, `average`,
//!   `minimum`, `maximum`)
//! * scope: empty for an empty subspace, otherwise
//!   ` for <f1> = <v1> and <f2> = <v2> ...`
//!
//! | type           | template |
//! |----------------|----------|
//! | value          | `<Measure><scope> is <v>.` |
//! | difference     | `The difference in <measure><scope> between <a> and <b> is <va - vb>.` |
//! | proportion     | `<a> accounts for <p>% of <measure><scope> across <breakdown>.` |
//! | trend          | `<Measure><scope> shows an <increasing/decreasing> trend over <breakdown>.` |
//! | categorization | `The records<scope> fall into <n> categories of <breakdown>.` |
//! | distribution   | `The distribution of <measure><scope> across <breakdown>[, with <x> highlighted].` |
//! | rank           | `Ranking <breakdown> by <measure><scope>, <top> comes first[, with <x> highlighted].` |
//! | association    | `<Measure> and <second> are <positively/negatively> correlated<scope> (r = <r>).` |
//! | extreme        | `<x> has the <minimum/maximum> value of <measure><scope> among <breakdown> (<v>).` |
//! | outlier        | `<x> is an outlier in <measure><scope> across <breakdown> (<v>).` |
//!
//! When the view lacks what a template needs the caption falls back to
//! `A <type> fact about <measure><scope>.`

use crate::data::FactView;
use crate::fact::{Aggregation, DataFact, FactType, META_INCREASING};
use crate::util::format_number;

pub fn measure_phrase(fact: &DataFact) -> String {
    match (&fact.measure.field, fact.measure.aggregation) {
        (None, _) | (Some(_), Aggregation::Count) => "the number of records".to_string(),
        (Some(field), agg) => format!("the {} of {}", agg.as_str(), field),
    }
}

pub fn scope_phrase(fact: &DataFact) -> String {
    if fact.subspace.is_empty() {
        return String::new();
    }
    let parts: Vec<String> = fact
        .subspace
        .filters()
        .iter()
        .map(|f| format!("{} = {}", f.field, f.value))
        .collect();
    format!(" for {}", parts.join(" and "))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let r = sxy / (sxx * syy).sqrt();
    r.is_finite().then_some(r)
}

/// Caption for a fact and its evaluated view.
pub fn generate_caption(fact: &DataFact, view: &FactView) -> String {
    specific_caption(fact, view).unwrap_or_else(|| {
        format!(
            "A {} fact about {}{}.",
            fact.fact_type,
            measure_phrase(fact),
            scope_phrase(fact)
        )
    })
}

fn specific_caption(fact: &DataFact, view: &FactView) -> Option<String> {
    let measure = measure_phrase(fact);
    let scope = scope_phrase(fact);
    let breakdown = fact.breakdown.as_deref().unwrap_or_default();
    let focus_suffix = fact
        .focus
        .first()
        .map(|x| format!(", with {x} highlighted"))
        .unwrap_or_default();
    let focus_value = || fact.focus.first().and_then(|x| view.value_of(x));

    Some(match fact.fact_type {
        FactType::Value => {
            let v = view.groups.first()?.value;
            format!("{}{scope} is {}.", capitalize(&measure), format_number(v))
        }
        FactType::Difference => {
            let (a, b) = (fact.focus.first()?, fact.focus.get(1)?);
            let d = view.value_of(a)? - view.value_of(b)?;
            format!(
                "The difference in {measure}{scope} between {a} and {b} is {}.",
                format_number(d)
            )
        }
        FactType::Proportion => {
            let total: f64 = view.values().iter().sum();
            if total <= 0.0 {
                return None;
            }
            let share = 100.0 * focus_value()? / total;
            format!(
                "{} accounts for {}% of {measure}{scope} across {breakdown}.",
                fact.focus[0],
                format_number((share * 100.0).round() / 100.0)
            )
        }
        FactType::Trend => format!(
            "{}{scope} shows an {} trend over {breakdown}.",
            capitalize(&measure),
            if fact.meta.extra == META_INCREASING {
                "increasing"
            } else {
                "decreasing"
            }
        ),
        FactType::Categorization => format!(
            "The records{scope} fall into {} categories of {breakdown}.",
            view.groups.len()
        ),
        FactType::Distribution => {
            format!("The distribution of {measure}{scope} across {breakdown}{focus_suffix}.")
        }
        FactType::Rank => {
            let top = &view.groups.first()?.label;
            format!("Ranking {breakdown} by {measure}{scope}, {top} comes first{focus_suffix}.")
        }
        FactType::Association => {
            let second = fact.meta.second_field.as_deref()?;
            let r = pearson(&view.values(), view.series2.as_deref()?)?;
            format!(
                "{} and {second} are {} correlated{scope} (r = {:.2}).",
                capitalize(&measure),
                if r >= 0.0 { "positively" } else { "negatively" },
                r
            )
        }
        FactType::Extreme => format!(
            "{} has the {} value of {measure}{scope} among {breakdown} ({}).",
            fact.focus.first()?,
            fact.meta.extra,
            format_number(focus_value()?)
        ),
        FactType::Outlier => format!(
            "{} is an outlier in {measure}{scope} across {breakdown} ({}).",
            fact.focus.first()?,
            format_number(focus_value()?)
        ),
    })
}
