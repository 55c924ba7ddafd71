//! Significance scoring for the cold-start recommendation list.
//!
//! | type       | significance                                   |
//! |------------|------------------------------------------------|
//! | trend      | \|Kendall tau\| of values against group order  |
//! | outlier    | min(1, \|z(focus)\| / 6)                       |
//! | extreme    | 1 - second/max (maximum), 1 - min/second (minimum), clamped |
//! | proportion | focus share of the total                       |
//! | others     | 0.3 * support rows / dataset rows              |

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::enumerate::{enumerate_facts, EnumerationCaps};
use super::eval::{z_scores, FactView};
use super::DataConfig;
use crate::fact::{DataFact, FactType, Subspace, META_MAXIMUM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredFact {
    pub fact: DataFact,
    pub significance: f64,
}

const BASE_SIGNIFICANCE: f64 = 0.3;

/// Significance in `[0, 1]` of a valid fact given its view.
pub fn significance(fact: &DataFact, view: &FactView, dataset_rows: usize) -> f64 {
    let values = view.values();
    let s = match fact.fact_type {
        FactType::Trend => kendall_tau(&values).abs(),
        FactType::Outlier => {
            let pos = view.groups.iter().position(|g| g.label == fact.focus[0]);
            match (z_scores(&values), pos) {
                (Some(z), Some(p)) => (z[p].abs() / 6.0).min(1.0),
                _ => 0.0,
            }
        }
        FactType::Extreme => {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.len() < 2 {
                0.0
            } else if fact.meta.extra == META_MAXIMUM {
                let (max, second) = (sorted[sorted.len() - 1], sorted[sorted.len() - 2]);
                if max == 0.0 {
                    0.0
                } else {
                    1.0 - second / max
                }
            } else {
                let (min, second) = (sorted[0], sorted[1]);
                if second == 0.0 {
                    0.0
                } else {
                    1.0 - min / second
                }
            }
        }
        FactType::Proportion => {
            let total: f64 = values.iter().sum();
            match view.value_of(&fact.focus[0]) {
                Some(v) if total > 0.0 => v / total,
                _ => 0.0,
            }
        }
        _ => BASE_SIGNIFICANCE * view.support_row_count as f64 / dataset_rows.max(1) as f64,
    };
    if s.is_finite() {
        s.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Kendall's tau-a between the values and their position.
fn kendall_tau(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// Top-`k` valid facts by significance, most significant first. Facts with
/// zero significance are never recommended. `filters` restricts the scope to
/// facts whose subspace contains them.
pub fn recommend_facts(
    dataset: &Dataset,
    k: usize,
    filters: Option<&Subspace>,
    config: &DataConfig,
) -> Vec<ScoredFact> {
    let base = EnumerationCaps {
        max_filters: config.caps.max_filters.min(1),
        max_filter_values: config.caps.max_filter_values.min(10),
        base_subspace: filters.cloned().unwrap_or_default(),
        ..config.caps.clone()
    };
    let attempts = [
        base.clone(),
        EnumerationCaps {
            max_filters: 0,
            ..base.clone()
        },
        EnumerationCaps {
            max_filters: 0,
            max_focus_values: base.max_focus_values.min(5),
            ..base
        },
    ];
    let Some(mut stream) = attempts
        .iter()
        .find_map(|caps| enumerate_facts(dataset, config, caps).ok())
    else {
        return Vec::new();
    };

    let mut scored = Vec::new();
    while let Some(fact) = stream.next() {
        let Ok(view) = stream.engine().evaluate(&fact) else {
            continue;
        };
        let significance = significance(&fact, &view, dataset.row_count());
        if significance > 0.0 {
            scored.push((fact.canonical(), ScoredFact { fact, significance }));
        }
    }
    scored.sort_by(|a, b| {
        b.1.significance
            .total_cmp(&a.1.significance)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.dedup_by(|a, b| a.0 == b.0);
    scored.into_iter().take(k).map(|(_, s)| s).collect()
}
