//! The tabular side of the engine: ingest CSV, evaluate facts against it,
//! decide which facts are meaningful, enumerate the fact space and score
//! facts for the cold-start recommendation list.
//!
//! What counts as a meaningful fact is operational here: the structural rules
//! of [`crate::fact`], plus data checks (fields exist with the right kinds,
//! the subspace is non-empty, focus labels are real groups, minimum group
//! counts, trend direction matches the least-squares slope, extreme focus is
//! the argmin/argmax, outlier focus has `|z| >= outlier_z`).

mod dataset;
mod enumerate;
mod eval;
mod recommend;

use serde::{Deserialize, Serialize};

pub use dataset::{
    load_dataset, load_dataset_with_id, parse_temporal, Cell, Dataset, Domain, FieldKind,
    FieldSchema, TemporalKind, NUMERIC_SHARE,
};
pub use enumerate::{enumerate_facts, estimate_candidates, EnumerationCaps, FactStream};
pub use eval::{
    aggregate, apply_subspace, evaluate_fact, extreme_index, slope, trend_direction,
    validate_fact, z_scores, Assessment, FactEngine, FactView, GroupValue, RowSet,
    ValidityReport, ALL_GROUP,
};
pub use recommend::{recommend_facts, significance, ScoredFact};
pub(crate) use enumerate::all_measures;

use crate::fact::FactType;

/// Thresholds of the data checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct DataConfig {
    /// An outlier's group must reach this absolute z-score.
    pub outlier_z: f64,
    /// Slopes with smaller magnitude count as flat.
    pub trend_epsilon: f64,
    pub min_trend_groups: usize,
    pub min_breakdown_groups: usize,
    pub min_association_points: usize,
    pub caps: EnumerationCaps,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            outlier_z: 3.0,
            trend_epsilon: 1e-12,
            min_trend_groups: 3,
            min_breakdown_groups: 2,
            min_association_points: 3,
            caps: EnumerationCaps::default(),
        }
    }
}

impl DataConfig {
    pub fn min_groups(&self, t: FactType) -> usize {
        match t {
            FactType::Trend => self.min_trend_groups,
            FactType::Value | FactType::Association => 1,
            _ => self.min_breakdown_groups,
        }
    }
}
