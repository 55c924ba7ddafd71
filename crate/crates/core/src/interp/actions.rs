//! The seven constrained edit actions.
//!
//! | action          | applies when (current `s`, target `t`)                          | edits |
//! |-----------------|------------------------------------------------------------------|-------|
//! | modifyBreakdown | breakdown(s) != breakdown(t)                                     | breakdown |
//! | modifyMeasure   | measure(s) != measure(t)                                         | measure |
//! | modifySubspace  | subspace(s) != subspace(t), same number of filters               | subspace |
//! | modifyFocus     | focus(s) != focus(t), focus(s) not the values of subspace(t)     | focus |
//! | modifyType      | always, in three branches (below)                                | type |
//! | addSubspace     | \|subspace(s)\| < \|subspace(t)\|                                | subspace |
//! | removeSubspace  | \|subspace(s)\| > \|subspace(t)\|                                | subspace |
//!
//! modifyType branches, first match wins:
//! 1. `t` has a focus and both subspaces are empty: the child filters on
//!    `breakdown(t) = focus(t)`.
//! 2. `t` has a subspace and neither fact has a focus: the child breaks down
//!    by a filter field of `t` and focuses on its value.
//! 3. otherwise: change the type.
//!
//! add/removeSubspace grow or shrink the filter list toward the target's
//! length, so each step approaches the target's scope.
//!
//! Focus and meta depend on the rest of the tuple (a focus label must be a
//! group of the breakdown, an extreme's meta must match its focus) so every
//! action may also repair them. Retyping may also have to change the
//! breakdown and measure to something the new type accepts.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{all_measures, extreme_index, trend_direction, z_scores, FactEngine, FieldKind};
use crate::fact::{
    Aggregation, DataFact, FactType, Filter, Measure, Meta, Slot, Subspace, META_INCREASING,
    META_MAXIMUM, META_MINIMUM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionKind {
    ModifyBreakdown,
    ModifyMeasure,
    ModifySubspace,
    ModifyFocus,
    ModifyType,
    AddSubspace,
    RemoveSubspace,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::ModifyBreakdown,
        ActionKind::ModifyMeasure,
        ActionKind::ModifySubspace,
        ActionKind::ModifyFocus,
        ActionKind::ModifyType,
        ActionKind::AddSubspace,
        ActionKind::RemoveSubspace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::ModifyBreakdown => "modifyBreakdown",
            ActionKind::ModifyMeasure => "modifyMeasure",
            ActionKind::ModifySubspace => "modifySubspace",
            ActionKind::ModifyFocus => "modifyFocus",
            ActionKind::ModifyType => "modifyType",
            ActionKind::AddSubspace => "addSubspace",
            ActionKind::RemoveSubspace => "removeSubspace",
        }
    }
}

impl std::fmt::Display for ActionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeBranch {
    FocusToSubspace,
    SubspaceToFocus,
    General,
}

pub fn type_branch(current: &DataFact, target: &DataFact) -> TypeBranch {
    if !target.focus.is_empty()
        && target.breakdown.is_some()
        && current.subspace.is_empty()
        && target.subspace.is_empty()
    {
        TypeBranch::FocusToSubspace
    } else if !target.subspace.is_empty() && current.focus.is_empty() && target.focus.is_empty() {
        TypeBranch::SubspaceToFocus
    } else {
        TypeBranch::General
    }
}

/// A non-empty focus listing exactly the target's filter values.
fn focus_is_target_subspace(current: &DataFact, target: &DataFact) -> bool {
    if current.focus.is_empty() {
        return false;
    }
    let mut a: Vec<&str> = current.focus.iter().map(String::as_str).collect();
    let mut b: Vec<&str> = target.subspace.values().collect();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

pub fn condition_holds(kind: ActionKind, current: &DataFact, target: &DataFact) -> bool {
    match kind {
        ActionKind::ModifyBreakdown => current.breakdown != target.breakdown,
        ActionKind::ModifyMeasure => current.measure != target.measure,
        ActionKind::ModifySubspace => {
            current.subspace != target.subspace && current.subspace.len() == target.subspace.len()
        }
        ActionKind::ModifyFocus => {
            current.focus != target.focus && !focus_is_target_subspace(current, target)
        }
        ActionKind::ModifyType => true,
        ActionKind::AddSubspace => current.subspace.len() < target.subspace.len(),
        ActionKind::RemoveSubspace => current.subspace.len() > target.subspace.len(),
    }
}

/// Actions whose condition holds, in declaration order.
pub fn applicable_actions(current: &DataFact, target: &DataFact) -> Vec<ActionKind> {
    ActionKind::ALL
        .into_iter()
        .filter(|k| condition_holds(*k, current, target))
        .collect()
}

/// Slots a child produced by `kind` may differ from its parent in.
pub fn allowed_slots(kind: ActionKind, branch: TypeBranch) -> &'static [Slot] {
    use Slot::*;
    match kind {
        ActionKind::ModifyBreakdown => &[Breakdown, Focus, Meta],
        ActionKind::ModifyMeasure => &[Measure, Focus, Meta],
        ActionKind::ModifySubspace | ActionKind::AddSubspace | ActionKind::RemoveSubspace => {
            &[Subspace, Focus, Meta]
        }
        ActionKind::ModifyFocus => &[Focus, Meta],
        ActionKind::ModifyType => match branch {
            TypeBranch::FocusToSubspace => &[Type, Subspace, Breakdown, Measure, Focus, Meta],
            TypeBranch::SubspaceToFocus | TypeBranch::General => {
                &[Type, Breakdown, Measure, Focus, Meta]
            }
        },
    }
}

/// Raw children before repair; `primary` ones move toward the target.
struct Candidates {
    primary: Vec<DataFact>,
    others: Vec<DataFact>,
    lock_focus: bool,
}

const VALUES_PER_FIELD: usize = 10;
const FOCUS_LABELS: usize = 8;

fn candidates(
    engine: &FactEngine<'_>,
    fact: &DataFact,
    kind: ActionKind,
    target: &DataFact,
) -> Candidates {
    let ds = engine.dataset();
    let mut c = Candidates {
        primary: Vec::new(),
        others: Vec::new(),
        lock_focus: false,
    };
    let free_dims = |sub: &Subspace, exclude: Option<&str>| -> Vec<String> {
        ds.dimension_fields()
            .filter(|f| !sub.contains_field(&f.name) && Some(f.name.as_str()) != exclude)
            .map(|f| f.name.clone())
            .collect()
    };
    let top_values = |field: &str| -> Vec<String> {
        ds.field_index(field)
            .map(|i| {
                ds.values_by_frequency(i)
                    .into_iter()
                    .take(VALUES_PER_FIELD)
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    };

    match kind {
        ActionKind::ModifyBreakdown => {
            if !fact.fact_type.has_breakdown() {
                return c;
            }
            for field in free_dims(&fact.subspace, fact.breakdown.as_deref()) {
                let kind_ok = fact.fact_type != FactType::Trend
                    || ds.field(&field).is_some_and(|f| f.kind == FieldKind::Temporal);
                if !kind_ok {
                    continue;
                }
                let child = fact.clone().with_breakdown(field.clone());
                if target.breakdown.as_deref() == Some(field.as_str()) {
                    c.primary.push(child);
                } else {
                    c.others.push(child);
                }
            }
        }
        ActionKind::ModifyMeasure => {
            for m in all_measures(ds) {
                if m == fact.measure {
                    continue;
                }
                let mut child = fact.clone();
                child.measure = m.clone();
                if m == target.measure {
                    c.primary.push(child);
                } else {
                    c.others.push(child);
                }
            }
        }
        ActionKind::ModifySubspace => {
            if target.subspace.len() == fact.subspace.len() && target.subspace != fact.subspace {
                c.primary.push(fact.clone().with_subspace(target.subspace.clone()));
            }
            for filter in fact.subspace.filters() {
                let rest = fact.subspace.without_field(&filter.field);
                // one filter at a time toward the target
                for t in target.subspace.filters() {
                    if t != filter && !rest.contains_field(&t.field) {
                        c.primary.push(fact.clone().with_subspace(rest.with(t.clone())));
                    }
                }
                for v in top_values(&filter.field) {
                    if v != filter.value {
                        let f = Filter::new(filter.field.clone(), v);
                        c.others.push(fact.clone().with_subspace(rest.with(f)));
                    }
                }
                for field in free_dims(&fact.subspace, fact.breakdown.as_deref()) {
                    for v in top_values(&field) {
                        let f = Filter::new(field.clone(), v);
                        c.others.push(fact.clone().with_subspace(rest.with(f)));
                    }
                }
            }
        }
        ActionKind::ModifyFocus => {
            let arity = fact.fact_type.focus_arity();
            if target.focus != fact.focus && arity.contains(&target.focus.len()) {
                c.primary.push(fact.clone().with_focus(target.focus.clone()));
            }
            let labels: Vec<String> = match &*engine.groups(
                &fact.subspace,
                fact.breakdown.as_deref(),
                &fact.measure,
            ) {
                Ok(g) if fact.breakdown.is_some() => {
                    g.iter().take(FOCUS_LABELS).map(|g| g.label.clone()).collect()
                }
                _ => Vec::new(),
            };
            if arity.contains(&0) && !fact.focus.is_empty() {
                c.others.push(fact.clone().with_focus(Vec::<String>::new()));
            }
            if arity.contains(&1) {
                for l in &labels {
                    c.others.push(fact.clone().with_focus([l.clone()]));
                }
            }
            if arity.contains(&2) {
                for a in &labels {
                    for b in &labels {
                        if a != b {
                            c.others.push(fact.clone().with_focus([a.clone(), b.clone()]));
                        }
                    }
                }
            }
        }
        ActionKind::ModifyType => match type_branch(fact, target) {
            TypeBranch::FocusToSubspace => {
                let field = target.breakdown.as_deref().expect("branch requires a breakdown");
                let scoped = fact
                    .clone()
                    .with_subspace(Subspace::new(vec![Filter::new(field, target.focus[0].clone())]));
                for t in type_order(fact.fact_type, target.fact_type, true) {
                    if let Some(child) = retype(engine, &scoped, t, target) {
                        c.primary.push(child);
                    }
                }
            }
            TypeBranch::SubspaceToFocus => {
                c.lock_focus = true;
                for filter in target.subspace.filters() {
                    for t in type_order(fact.fact_type, target.fact_type, true) {
                        if !t.focus_arity().contains(&1) {
                            continue;
                        }
                        let Some(mut child) = retype(engine, fact, t, target) else {
                            continue;
                        };
                        child.breakdown = Some(filter.field.clone());
                        child.focus = vec![filter.value.clone()];
                        c.primary.push(child);
                    }
                }
            }
            TypeBranch::General => {
                for t in type_order(fact.fact_type, target.fact_type, false) {
                    if let Some(child) = retype(engine, fact, t, target) {
                        if t == target.fact_type {
                            c.primary.push(child);
                        } else {
                            c.others.push(child);
                        }
                    }
                }
            }
        },
        ActionKind::AddSubspace => {
            for t in target.subspace.filters() {
                if !fact.subspace.contains_field(&t.field) {
                    c.primary.push(fact.clone().with_subspace(fact.subspace.with(t.clone())));
                }
            }
            for field in free_dims(&fact.subspace, fact.breakdown.as_deref()) {
                for v in top_values(&field) {
                    let f = Filter::new(field.clone(), v);
                    if !target.subspace.filters().contains(&f) {
                        c.others.push(fact.clone().with_subspace(fact.subspace.with(f)));
                    }
                }
            }
        }
        ActionKind::RemoveSubspace => {
            for f in fact.subspace.filters() {
                let child = fact.clone().with_subspace(fact.subspace.without_field(&f.field));
                if target.subspace.filters().contains(f) {
                    c.others.push(child);
                } else {
                    c.primary.push(child);
                }
            }
        }
    }
    c
}

/// Types to try: the target's first, then the rest in declaration order.
fn type_order(current: FactType, target: FactType, include_current: bool) -> Vec<FactType> {
    let mut out = vec![target];
    out.extend(FactType::ALL.into_iter().filter(|t| *t != target));
    out.retain(|t| include_current || *t != current);
    out
}

/// `fact` as type `t`, with breakdown, measure and meta made acceptable to it.
fn retype(engine: &FactEngine<'_>, fact: &DataFact, t: FactType, target: &DataFact) -> Option<DataFact> {
    let ds = engine.dataset();
    let mut child = fact.clone();
    child.fact_type = t;

    let usable = |name: &str, temporal: bool| {
        !child.subspace.contains_field(name)
            && ds.field(name).is_some_and(|f| {
                if temporal {
                    f.kind == FieldKind::Temporal
                } else {
                    f.kind.is_dimension()
                }
            })
    };
    child.breakdown = if !t.has_breakdown() {
        None
    } else {
        let temporal = t == FactType::Trend;
        let mut options: Vec<String> = Vec::new();
        options.extend(fact.breakdown.clone());
        options.extend(target.breakdown.clone());
        options.extend(ds.dimension_fields().map(|f| f.name.clone()));
        Some(options.into_iter().find(|b| usable(b, temporal))?)
    };

    let numeric: Vec<&str> = ds
        .fields_of(FieldKind::Numerical)
        .map(|f| f.name.as_str())
        .collect();
    child.measure = match t {
        FactType::Categorization => Measure::count(),
        FactType::Proportion => match fact.measure.aggregation {
            Aggregation::Count | Aggregation::Sum => fact.measure.clone(),
            _ => Measure::of(fact.measure.field.clone()?, Aggregation::Sum),
        },
        FactType::Association if fact.measure.aggregation == Aggregation::Count => {
            if target.measure.aggregation != Aggregation::Count {
                target.measure.clone()
            } else {
                Measure::of(*numeric.first()?, Aggregation::Sum)
            }
        }
        _ => fact.measure.clone(),
    };

    child.meta = match t {
        FactType::Trend => Meta::extra(META_INCREASING),
        FactType::Extreme => Meta::extra(META_MAXIMUM),
        FactType::Association => {
            let own = child.measure.field.as_deref();
            let second = target
                .meta
                .second_field
                .as_deref()
                .filter(|s| Some(*s) != own)
                .or_else(|| numeric.iter().copied().find(|n| Some(*n) != own))?;
            Meta::second_field(second)
        }
        _ => Meta::default(),
    };
    if !t.focus_arity().contains(&child.focus.len()) || child.breakdown != fact.breakdown {
        child.focus = Vec::new();
    }
    Some(child)
}

/// Make `raw` valid by choosing focus and meta from its data; `None` if no
/// choice works. With `lock_focus` only the meta may change.
fn settle(
    engine: &FactEngine<'_>,
    raw: DataFact,
    target: &DataFact,
    lock_focus: bool,
) -> Option<DataFact> {
    if engine.is_valid(&raw) {
        return Some(raw);
    }
    if !raw.is_structurally_valid() && raw.structural_violations().iter().any(|v| {
        !matches!(
            v.rule,
            crate::fact::Rule::FocusArity | crate::fact::Rule::TrendMeta | crate::fact::Rule::ExtremeMeta
        )
    }) {
        return None;
    }
    let t = raw.fact_type;
    let arity = t.focus_arity();
    let groups = engine.groups(&raw.subspace, raw.breakdown.as_deref(), &raw.measure);
    let groups = match &*groups {
        Ok(g) if !g.is_empty() => g.clone(),
        _ => return None,
    };
    let labels: Vec<String> = groups.iter().map(|g| g.label.clone()).collect();
    let values: Vec<f64> = groups.iter().map(|g| g.value).collect();

    let mut focus_options: Vec<Vec<String>> = vec![raw.focus.clone()];
    if !lock_focus {
        if target.breakdown == raw.breakdown && arity.contains(&target.focus.len()) {
            focus_options.push(target.focus.clone());
        }
        if arity.contains(&0) {
            focus_options.push(Vec::new());
        }
        match t {
            FactType::Extreme => {
                for m in [META_MAXIMUM, META_MINIMUM] {
                    if let Some(i) = extreme_index(&values, m) {
                        focus_options.push(vec![labels[i].clone()]);
                    }
                }
            }
            FactType::Outlier => {
                if let Some(z) = z_scores(&values) {
                    let i = (0..z.len())
                        .max_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()))
                        .expect("non-empty");
                    focus_options.push(vec![labels[i].clone()]);
                }
            }
            _ => {}
        }
        if arity.contains(&1) {
            focus_options.push(vec![labels[0].clone()]);
        }
        if arity.contains(&2) && labels.len() >= 2 {
            focus_options.push(vec![labels[0].clone(), labels[1].clone()]);
        }
    }

    let mut meta_options = vec![raw.meta.clone()];
    match t {
        FactType::Trend => {
            if let Some(dir) = trend_direction(&values, engine.config().trend_epsilon) {
                meta_options.push(Meta::extra(dir));
            }
        }
        FactType::Extreme => {
            meta_options.push(Meta::extra(META_MAXIMUM));
            meta_options.push(Meta::extra(META_MINIMUM));
        }
        _ => {}
    }

    let mut tried = HashSet::new();
    for focus in &focus_options {
        for meta in &meta_options {
            let mut cand = raw.clone();
            cand.focus = focus.clone();
            cand.meta = meta.clone();
            if tried.insert(cand.canonical()) && engine.is_valid(&cand) {
                return Some(cand);
            }
        }
    }
    None
}

const ATTEMPTS_PER_CHILD: usize = 6;

/// Valid children of `fact` under `kind`, at most `branch_cap`, canonically
/// distinct from `fact` and each other. Children that move toward `target`
/// come first; the rest are sampled with `rng`.
pub fn expand_action(
    engine: &FactEngine<'_>,
    fact: &DataFact,
    kind: ActionKind,
    target: &DataFact,
    branch_cap: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DataFact> {
    let Candidates {
        primary,
        mut others,
        lock_focus,
    } = candidates(engine, fact, kind, target);
    others.shuffle(rng);
    let budget = primary.len().saturating_add(branch_cap.saturating_mul(ATTEMPTS_PER_CHILD));
    let mut seen = HashSet::from([fact.canonical()]);
    let mut out = Vec::new();
    for raw in primary.into_iter().chain(others).take(budget) {
        if out.len() >= branch_cap {
            break;
        }
        if let Some(child) = settle(engine, raw, target, lock_focus) {
            if seen.insert(child.canonical()) {
                out.push(child);
            }
        }
    }
    out
}

/// One uniformly sampled valid child, for rollouts.
pub fn random_child(
    engine: &FactEngine<'_>,
    fact: &DataFact,
    kind: ActionKind,
    target: &DataFact,
    rng: &mut ChaCha8Rng,
) -> Option<DataFact> {
    let Candidates {
        primary,
        others,
        lock_focus,
    } = candidates(engine, fact, kind, target);
    let mut all: Vec<DataFact> = primary.into_iter().chain(others).collect();
    all.shuffle(rng);
    let own = fact.canonical();
    all.into_iter()
        .take(ATTEMPTS_PER_CHILD)
        .filter_map(|raw| settle(engine, raw, target, lock_focus))
        .find(|c| c.canonical() != own)
}
