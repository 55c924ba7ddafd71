//! Data facts.
//!
//! A fact is the five-slot tuple `{type, subspace, breakdown, measure, focus}`
//! plus a small `meta` slot. This module owns the vocabulary, the canonical
//! token string, the fact-spec JSON document and the structural rules a fact
//! must satisfy before it is evaluated against any data.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FactError, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactType {
    Value,
    Difference,
    Proportion,
    Trend,
    Categorization,
    Distribution,
    Rank,
    Association,
    Extreme,
    Outlier,
}

impl FactType {
    pub const ALL: [FactType; 10] = [
        FactType::Value,
        FactType::Difference,
        FactType::Proportion,
        FactType::Trend,
        FactType::Categorization,
        FactType::Distribution,
        FactType::Rank,
        FactType::Association,
        FactType::Extreme,
        FactType::Outlier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactType::Value => "value",
            FactType::Difference => "difference",
            FactType::Proportion => "proportion",
            FactType::Trend => "trend",
            FactType::Categorization => "categorization",
            FactType::Distribution => "distribution",
            FactType::Rank => "rank",
            FactType::Association => "association",
            FactType::Extreme => "extreme",
            FactType::Outlier => "outlier",
        }
    }

    /// Allowed number of focus labels.
    pub fn focus_arity(self) -> RangeInclusive<usize> {
        match self {
            FactType::Difference => 2..=2,
            FactType::Proportion | FactType::Extreme | FactType::Outlier => 1..=1,
            FactType::Value | FactType::Association => 0..=0,
            _ => 0..=1,
        }
    }

    /// Whether the type partitions its subspace into groups.
    pub fn has_breakdown(self) -> bool {
        !matches!(self, FactType::Value | FactType::Association)
    }
}

impl fmt::Display for FactType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FactType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FactType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown fact type `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Count,
    Sum,
    Average,
    Minimum,
    Maximum,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] = [
        Aggregation::Count,
        Aggregation::Sum,
        Aggregation::Average,
        Aggregation::Minimum,
        Aggregation::Maximum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Count => "count",
            Aggregation::Sum => "sum",
            Aggregation::Average => "average",
            Aggregation::Minimum => "minimum",
            Aggregation::Maximum => "maximum",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter {
    pub field: String,
    pub value: String,
}

impl Filter {
    pub fn new(field: impl Into<String>, value: impl Into<String>) -> Self {
        Filter {
            field: field.into(),
            value: value.into(),
        }
    }
}

/// Conjunction of `field = value` filters, kept sorted by field name so that
/// filter order never affects equality or tokenization.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Filter>", into = "Vec<Filter>")]
pub struct Subspace {
    filters: Vec<Filter>,
}

impl Subspace {
    pub fn new(mut filters: Vec<Filter>) -> Self {
        filters.sort();
        Subspace { filters }
    }

    pub fn empty() -> Self {
        Subspace::default()
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.filters
            .iter()
            .find(|f| f.field == field)
            .map(|f| f.value.as_str())
    }

    pub fn contains_field(&self, field: &str) -> bool {
        self.filters.iter().any(|f| f.field == field)
    }

    pub fn with(&self, filter: Filter) -> Subspace {
        let mut filters = self.filters.clone();
        filters.push(filter);
        Subspace::new(filters)
    }

    pub fn without_field(&self, field: &str) -> Subspace {
        Subspace {
            filters: self
                .filters
                .iter()
                .filter(|f| f.field != field)
                .cloned()
                .collect(),
        }
    }

    /// Filter values in field order.
    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.filters.iter().map(|f| f.value.as_str())
    }

    /// Union of two subspaces; `None` when both constrain the same field.
    pub fn union(&self, other: &Subspace) -> Option<Subspace> {
        if other
            .filters
            .iter()
            .any(|f| self.contains_field(&f.field))
        {
            return None;
        }
        let mut filters = self.filters.clone();
        filters.extend(other.filters.iter().cloned());
        Some(Subspace::new(filters))
    }
}

impl From<Vec<Filter>> for Subspace {
    fn from(filters: Vec<Filter>) -> Self {
        Subspace::new(filters)
    }
}

impl From<Subspace> for Vec<Filter> {
    fn from(s: Subspace) -> Self {
        s.filters
    }
}

impl FromIterator<Filter> for Subspace {
    fn from_iter<I: IntoIterator<Item = Filter>>(iter: I) -> Self {
        Subspace::new(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measure {
    #[serde(default)]
    pub field: Option<String>,
    pub aggregation: Aggregation,
}

impl Measure {
    pub fn count() -> Self {
        Measure {
            field: None,
            aggregation: Aggregation::Count,
        }
    }

    pub fn of(field: impl Into<String>, aggregation: Aggregation) -> Self {
        Measure {
            field: Some(field.into()),
            aggregation,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Meta {
    #[serde(default)]
    pub extra: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_field: Option<String>,
}

impl Meta {
    pub fn extra(extra: impl Into<String>) -> Self {
        Meta {
            extra: extra.into(),
            second_field: None,
        }
    }

    pub fn second_field(field: impl Into<String>) -> Self {
        Meta {
            extra: String::new(),
            second_field: Some(field.into()),
        }
    }
}

pub const META_INCREASING: &str = "increasing";
pub const META_DECREASING: &str = "decreasing";
pub const META_MINIMUM: &str = "minimum";
pub const META_MAXIMUM: &str = "maximum";

/// A single data fact. Equality is canonical: subspaces are kept sorted, so
/// two facts compare equal exactly when their token strings do.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFact {
    #[serde(rename = "type")]
    pub fact_type: FactType,
    #[serde(default)]
    pub subspace: Subspace,
    #[serde(default)]
    pub breakdown: Option<String>,
    pub measure: Measure,
    #[serde(default)]
    pub focus: Vec<String>,
    #[serde(default)]
    pub meta: Meta,
}

/// The six slots of a fact, in token order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Type,
    Subspace,
    Measure,
    Breakdown,
    Focus,
    Meta,
}

impl Slot {
    pub const ALL: [Slot; 6] = [
        Slot::Type,
        Slot::Subspace,
        Slot::Measure,
        Slot::Breakdown,
        Slot::Focus,
        Slot::Meta,
    ];
}

impl DataFact {
    pub fn new(fact_type: FactType, measure: Measure) -> Self {
        DataFact {
            fact_type,
            subspace: Subspace::empty(),
            breakdown: None,
            measure,
            focus: Vec::new(),
            meta: Meta::default(),
        }
    }

    pub fn with_subspace(mut self, subspace: Subspace) -> Self {
        self.subspace = subspace;
        self
    }

    pub fn with_breakdown(mut self, field: impl Into<String>) -> Self {
        self.breakdown = Some(field.into());
        self
    }

    pub fn with_focus<I, S>(mut self, focus: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.focus = focus.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_meta(mut self, meta: Meta) -> Self {
        self.meta = meta;
        self
    }

    /// Canonical token string. Does not check structure; see [`tokenize_fact`].
    pub fn canonical(&self) -> String {
        let mut out = String::with_capacity(96);
        out.push_str("[type]");
        out.push_str(self.fact_type.as_str());

        out.push_str(" [subspace]");
        for (i, f) in self.subspace.filters().iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            escape_into(&mut out, &f.field);
            out.push(',');
            escape_into(&mut out, &f.value);
        }

        out.push_str(" [measure]");
        if let Some(field) = &self.measure.field {
            escape_into(&mut out, field);
        }
        out.push(',');
        out.push_str(self.measure.aggregation.as_str());

        out.push_str(" [breakdown]");
        if let Some(b) = &self.breakdown {
            escape_into(&mut out, b);
        }

        out.push_str(" [focus]");
        for (i, v) in self.focus.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            escape_into(&mut out, v);
        }

        out.push_str(" [meta]");
        escape_into(&mut out, &self.meta.extra);
        if let Some(second) = &self.meta.second_field {
            if !self.meta.extra.is_empty() {
                out.push(';');
            }
            escape_into(&mut out, second);
        }
        out
    }

    /// Structural rule violations, empty when the fact is well formed.
    pub fn structural_violations(&self) -> Vec<Violation> {
        check_structure(self)
    }

    pub fn is_structurally_valid(&self) -> bool {
        self.structural_violations().is_empty()
    }

    /// Slots in which `self` and `other` differ.
    pub fn differing_slots(&self, other: &DataFact) -> Vec<Slot> {
        let mut out = Vec::new();
        if self.fact_type != other.fact_type {
            out.push(Slot::Type);
        }
        if self.subspace != other.subspace {
            out.push(Slot::Subspace);
        }
        if self.measure != other.measure {
            out.push(Slot::Measure);
        }
        if self.breakdown != other.breakdown {
            out.push(Slot::Breakdown);
        }
        if self.focus != other.focus {
            out.push(Slot::Focus);
        }
        if self.meta != other.meta {
            out.push(Slot::Meta);
        }
        out
    }

    /// Fields referenced anywhere in the fact.
    pub fn referenced_fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .subspace
            .filters()
            .iter()
            .map(|f| f.field.as_str())
            .collect();
        out.extend(self.breakdown.as_deref());
        out.extend(self.measure.field.as_deref());
        out.extend(self.meta.second_field.as_deref());
        out
    }
}

impl fmt::Display for DataFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        if matches!(c, '\\' | ',' | ';' | '[') {
            out.push('\\');
        }
        out.push(c);
    }
}

/// Canonical token string of a structurally valid fact.
pub fn tokenize_fact(fact: &DataFact) -> Result<String, FactError> {
    let violations = fact.structural_violations();
    if !violations.is_empty() {
        return Err(FactError::Invalid(violations));
    }
    Ok(fact.canonical())
}

/// Parse a fact-spec JSON document.
pub fn parse_fact_spec(text: &str) -> Result<DataFact, ParseError> {
    serde_json::from_str(text).map_err(ParseError::from_json)
}

/// Serialize a fact as a fact-spec JSON document.
pub fn to_fact_spec(fact: &DataFact) -> String {
    serde_json::to_string(fact).expect("fact serialization is infallible")
}

/// Named validity rules. Structural rules are checked here; data rules are
/// checked by the data engine against a concrete dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    // structural
    EmptyName,
    DuplicateFilter,
    BreakdownRequired,
    BreakdownForbidden,
    FocusArity,
    FocusDuplicate,
    MeasureFieldRequired,
    ProportionAggregation,
    CategorizationAggregation,
    AssociationMeasure,
    TrendMeta,
    ExtremeMeta,
    AssociationSecondField,
    AssociationDistinctFields,
    MetaNotAllowed,
    // data
    UnknownField,
    FilterKind,
    FilterDomain,
    BreakdownKind,
    TrendTemporal,
    MeasureKind,
    EmptySubspace,
    MinGroups,
    FocusNotInGroups,
    TrendDirection,
    ExtremeDirection,
    OutlierTest,
    AssociationPoints,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::EmptyName => "empty-name",
            Rule::DuplicateFilter => "duplicate-filter",
            Rule::BreakdownRequired => "breakdown-required",
            Rule::BreakdownForbidden => "breakdown-forbidden",
            Rule::FocusArity => "focus-arity",
            Rule::FocusDuplicate => "focus-duplicate",
            Rule::MeasureFieldRequired => "measure-field-required",
            Rule::ProportionAggregation => "proportion-aggregation",
            Rule::CategorizationAggregation => "categorization-aggregation",
            Rule::AssociationMeasure => "association-measure",
            Rule::TrendMeta => "trend-meta",
            Rule::ExtremeMeta => "extreme-meta",
            Rule::AssociationSecondField => "association-second-field",
            Rule::AssociationDistinctFields => "association-distinct-fields",
            Rule::MetaNotAllowed => "meta-not-allowed",
            Rule::UnknownField => "unknown-field",
            Rule::FilterKind => "filter-kind",
            Rule::FilterDomain => "filter-domain",
            Rule::BreakdownKind => "breakdown-kind",
            Rule::TrendTemporal => "trend-temporal",
            Rule::MeasureKind => "measure-kind",
            Rule::EmptySubspace => "empty-subspace",
            Rule::MinGroups => "min-groups",
            Rule::FocusNotInGroups => "focus-not-in-groups",
            Rule::TrendDirection => "trend-direction",
            Rule::ExtremeDirection => "extreme-direction",
            Rule::OutlierTest => "outlier-test",
            Rule::AssociationPoints => "association-points",
        }
    }

    pub fn is_structural(self) -> bool {
        self <= Rule::MetaNotAllowed
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    pub fn new(rule: Rule, detail: impl Into<String>) -> Self {
        Violation {
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

fn check_structure(fact: &DataFact) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = fact.fact_type;

    let names = fact
        .subspace
        .filters()
        .iter()
        .map(|f| f.field.as_str())
        .chain(fact.breakdown.as_deref())
        .chain(fact.measure.field.as_deref())
        .chain(fact.meta.second_field.as_deref());
    for name in names {
        if name.trim().is_empty() {
            out.push(Violation::new(Rule::EmptyName, "field names must be non-empty"));
            break;
        }
    }

    let filters = fact.subspace.filters();
    if filters.windows(2).any(|w| w[0].field == w[1].field) {
        out.push(Violation::new(
            Rule::DuplicateFilter,
            "two filters constrain the same field",
        ));
    }

    match (t.has_breakdown(), &fact.breakdown) {
        (true, None) => out.push(Violation::new(
            Rule::BreakdownRequired,
            format!("{t} facts need a breakdown field"),
        )),
        (false, Some(b)) => out.push(Violation::new(
            Rule::BreakdownForbidden,
            format!("{t} facts take no breakdown (got `{b}`)"),
        )),
        _ => {}
    }

    let arity = t.focus_arity();
    if !arity.contains(&fact.focus.len()) {
        out.push(Violation::new(
            Rule::FocusArity,
            format!(
                "{t} facts take {}..={} focus labels, got {}",
                arity.start(),
                arity.end(),
                fact.focus.len()
            ),
        ));
    }
    if fact.focus.len() == 2 && fact.focus[0] == fact.focus[1] {
        out.push(Violation::new(
            Rule::FocusDuplicate,
            "focus labels must be distinct",
        ));
    }

    let agg = fact.measure.aggregation;
    if agg != Aggregation::Count && fact.measure.field.is_none() {
        out.push(Violation::new(
            Rule::MeasureFieldRequired,
            format!("{agg} needs a measure field"),
        ));
    }
    match t {
        FactType::Proportion if !matches!(agg, Aggregation::Sum | Aggregation::Count) => {
            out.push(Violation::new(
                Rule::ProportionAggregation,
                "proportion facts aggregate with sum or count",
            ))
        }
        FactType::Categorization if agg != Aggregation::Count => out.push(Violation::new(
            Rule::CategorizationAggregation,
            "categorization facts aggregate with count",
        )),
        FactType::Association if agg == Aggregation::Count => out.push(Violation::new(
            Rule::AssociationMeasure,
            "association facts need a numerical measure",
        )),
        _ => {}
    }

    let meta = &fact.meta;
    match t {
        FactType::Trend => {
            if meta.extra != META_INCREASING && meta.extra != META_DECREASING {
                out.push(Violation::new(
                    Rule::TrendMeta,
                    "trend meta must be `increasing` or `decreasing`",
                ));
            }
            if meta.second_field.is_some() {
                out.push(Violation::new(Rule::MetaNotAllowed, "trend takes no second field"));
            }
        }
        FactType::Extreme => {
            if meta.extra != META_MINIMUM && meta.extra != META_MAXIMUM {
                out.push(Violation::new(
                    Rule::ExtremeMeta,
                    "extreme meta must be `minimum` or `maximum`",
                ));
            }
            if meta.second_field.is_some() {
                out.push(Violation::new(Rule::MetaNotAllowed, "extreme takes no second field"));
            }
        }
        FactType::Association => {
            match &meta.second_field {
                None => out.push(Violation::new(
                    Rule::AssociationSecondField,
                    "association needs meta.secondField",
                )),
                Some(second) if Some(second) == fact.measure.field.as_ref() => {
                    out.push(Violation::new(
                        Rule::AssociationDistinctFields,
                        "association compares two different fields",
                    ))
                }
                Some(_) => {}
            }
            if !meta.extra.is_empty() {
                out.push(Violation::new(Rule::MetaNotAllowed, "association takes no meta label"));
            }
        }
        _ => {
            if !meta.extra.is_empty() || meta.second_field.is_some() {
                out.push(Violation::new(
                    Rule::MetaNotAllowed,
                    format!("{t} facts carry no meta"),
                ));
            }
        }
    }
    out
}
