use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use storyweave::data::{
    aggregate, apply_subspace, enumerate_facts, evaluate_fact, load_dataset, recommend_facts,
    validate_fact, DataConfig, Dataset, EnumerationCaps, FieldKind, RowSet,
};
use storyweave::{
    Aggregation, DataError, DataFact, FactType, Filter, Measure, Meta, Subspace,
};
use storyweave::fact::{Rule, META_DECREASING, META_INCREASING, META_MAXIMUM, META_MINIMUM};

mod common;

const OLYMPICS: &str = include_str!("fixtures/winter_olympics.csv");

fn load(csv: &str) -> Dataset {
    load_dataset(csv.as_bytes()).expect("fixture loads")
}

fn sub(filters: &[(&str, &str)]) -> Subspace {
    Subspace::new(filters.iter().map(|(f, v)| Filter::new(*f, *v)).collect())
}

#[test]
fn olympics_shape() {
    let ds = load(OLYMPICS);
    assert_eq!(ds.row_count(), 118);
    assert_eq!(ds.schema().len(), 6);
    let rows = apply_subspace(&ds, &Subspace::empty()).unwrap();
    assert_eq!(rows.len(), 118);
}

#[test]
fn subspace_picks_matching_rows() {
    let ds = load("Name,Sex\nA,Female\nB,Male\nC,Female\nD,Male\n");
    let rows = apply_subspace(&ds, &sub(&[("Sex", "Female")])).unwrap();
    assert_eq!(rows.indices(), &[0, 2]);
}

#[test]
fn subspace_errors() {
    let ds = load("Name,Sex\nA,Female\nB,Male\n");
    assert!(matches!(
        apply_subspace(&ds, &sub(&[("Sex", "Unknown")])),
        Err(DataError::Domain { .. })
    ));
    assert!(matches!(
        apply_subspace(&ds, &sub(&[("Age", "3")])),
        Err(DataError::Schema(_))
    ));
}

#[test]
fn aggregate_orders_categorical_by_value() {
    let ds = load("cat,x\nA,1\nA,2\nB,5\n");
    let groups = aggregate(&ds, &RowSet::all(&ds), Some("cat"), &Measure::of("x", Aggregation::Sum))
        .unwrap();
    let got: Vec<(&str, f64)> = groups.iter().map(|g| (g.label.as_str(), g.value)).collect();
    assert_eq!(got, vec![("B", 5.0), ("A", 3.0)]);
}

#[test]
fn aggregate_edge_cases() {
    let ds = load("cat,x\nA,1\nA,2\nB,3\n");
    let none = RowSet::from_indices(vec![]);
    assert!(aggregate(&ds, &none, Some("cat"), &Measure::count()).unwrap().is_empty());
    let avg = aggregate(&ds, &RowSet::all(&ds), None, &Measure::of("x", Aggregation::Average))
        .unwrap();
    assert_eq!(avg.len(), 1);
    assert_eq!((avg[0].label.as_str(), avg[0].value), ("all", 2.0));
    assert!(matches!(
        aggregate(&ds, &RowSet::all(&ds), None, &Measure::of("cat", Aggregation::Sum)),
        Err(DataError::Type(_))
    ));
}

#[test]
fn temporal_groups_are_chronological() {
    let ds = load("Year,x\n2003,1\n2001,9\n2002,4\n");
    assert_eq!(ds.field("Year").unwrap().kind, FieldKind::Temporal);
    let groups = aggregate(&ds, &RowSet::all(&ds), Some("Year"), &Measure::of("x", Aggregation::Sum))
        .unwrap();
    let labels: Vec<&str> = groups.iter().map(|g| g.label.as_str()).collect();
    assert_eq!(labels, ["2001", "2002", "2003"]);
}

fn olympics_fact() -> DataFact {
    DataFact::new(FactType::Distribution, Measure::of("Gold Medal", Aggregation::Sum))
        .with_subspace(sub(&[("Sex", "Female")]))
        .with_breakdown("Country")
        .with_focus(["China"])
}

#[test]
fn olympics_fact_is_valid() {
    let ds = load(OLYMPICS);
    let report = validate_fact(&ds, &olympics_fact());
    assert!(report.valid, "{report:?}");
    let view = evaluate_fact(&ds, &olympics_fact()).unwrap();
    assert_eq!(view.highlighted, vec!["China".to_string()]);
    assert!(view.value_of("China").is_some());
}

#[test]
fn trend_direction_is_checked() {
    let ds = load("Year,x\n2001,9\n2002,5\n2003,1\n");
    let fact = DataFact::new(FactType::Trend, Measure::of("x", Aggregation::Sum))
        .with_breakdown("Year")
        .with_meta(Meta::extra(META_INCREASING));
    let report = validate_fact(&ds, &fact);
    assert!(!report.valid);
    assert!(report.has(Rule::TrendDirection));
    assert!(validate_fact(&ds, &fact.clone().with_meta(Meta::extra(META_DECREASING))).valid);
}

#[test]
fn empty_subspace_rule() {
    let ds = load("Country,Sex,x\nChina,Female,1\nNorway,Male,2\n");
    let fact = DataFact::new(FactType::Value, Measure::count())
        .with_subspace(sub(&[("Country", "China"), ("Sex", "Male")]));
    let report = validate_fact(&ds, &fact);
    assert!(report.has(Rule::EmptySubspace), "{report:?}");
}

#[test]
fn proportion_share_matches_brute_force() {
    let ds = load(OLYMPICS);
    let fact = DataFact::new(FactType::Proportion, Measure::of("Gold Medal", Aggregation::Sum))
        .with_breakdown("Country")
        .with_focus(["China"]);
    let view = evaluate_fact(&ds, &fact).unwrap();
    assert_eq!(view.highlighted, vec!["China".to_string()]);

    let mut rdr = csv::Reader::from_reader(OLYMPICS.as_bytes());
    let (mut china, mut total) = (0.0, 0.0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let gold: f64 = rec[3].parse().unwrap();
        total += gold;
        if &rec[0] == "China" {
            china += gold;
        }
    }
    let share = view.value_of("China").unwrap() / view.values().iter().sum::<f64>();
    assert!((share - china / total).abs() < 1e-12);
}

#[test]
fn value_fact_has_single_group() {
    let ds = load(OLYMPICS);
    let view = evaluate_fact(&ds, &DataFact::new(FactType::Value, Measure::count())).unwrap();
    assert_eq!(view.groups.len(), 1);
    assert_eq!(view.groups[0].label, "all");
    assert_eq!(view.groups[0].value, 118.0);
}

#[test]
fn association_series_matches_rows() {
    let csv = "k,x,y\na,1,10\nb,2,\nc,3,30\nd,4,41\n";
    let ds = load(csv);
    let fact = DataFact::new(FactType::Association, Measure::of("x", Aggregation::Sum))
        .with_meta(Meta::second_field("y"));
    let view = evaluate_fact(&ds, &fact).unwrap();
    // rows with both cells present, in row order
    assert_eq!(view.values(), vec![1.0, 3.0, 4.0]);
    assert_eq!(view.series2, Some(vec![10.0, 30.0, 41.0]));
}

#[test]
fn evaluation_is_repeatable() {
    let ds = load(OLYMPICS);
    let a = evaluate_fact(&ds, &olympics_fact()).unwrap();
    let b = evaluate_fact(&ds, &olympics_fact()).unwrap();
    assert_eq!(a, b);
}

/// Hand enumeration of `c,x` with rows (a,1), (b,5), (a,2).
///
/// Groups by c: count a=2 b=1; sum a=3 b=5; avg a=1.5 b=5; min a=1 b=5;
/// max a=2 b=5. Filtered subspaces hold one group, so only value facts
/// survive there. Two groups can never reach |z| >= 3, so no outliers.
fn toy_oracle() -> BTreeSet<String> {
    let measures = [
        Measure::count(),
        Measure::of("x", Aggregation::Sum),
        Measure::of("x", Aggregation::Average),
        Measure::of("x", Aggregation::Minimum),
        Measure::of("x", Aggregation::Maximum),
    ];
    let mut out = Vec::new();
    for s in [sub(&[]), sub(&[("c", "a")]), sub(&[("c", "b")])] {
        for m in &measures {
            out.push(DataFact::new(FactType::Value, m.clone()).with_subspace(s.clone()));
        }
    }
    let base = |t: FactType, m: &Measure| DataFact::new(t, m.clone()).with_breakdown("c");
    for m in &measures {
        out.push(base(FactType::Difference, m).with_focus(["a", "b"]));
        out.push(base(FactType::Difference, m).with_focus(["b", "a"]));
        for t in [FactType::Distribution, FactType::Rank] {
            out.push(base(t, m));
            out.push(base(t, m).with_focus(["a"]));
            out.push(base(t, m).with_focus(["b"]));
        }
    }
    for m in &measures[..2] {
        out.push(base(FactType::Proportion, m).with_focus(["a"]));
        out.push(base(FactType::Proportion, m).with_focus(["b"]));
    }
    out.push(base(FactType::Categorization, &measures[0]));
    out.push(base(FactType::Categorization, &measures[0]).with_focus(["a"]));
    out.push(base(FactType::Categorization, &measures[0]).with_focus(["b"]));
    // count: a is the max, b the min; every other measure the reverse
    let extreme = |m: &Measure, max: &str, min: &str| {
        [
            base(FactType::Extreme, m).with_focus([max]).with_meta(Meta::extra(META_MAXIMUM)),
            base(FactType::Extreme, m).with_focus([min]).with_meta(Meta::extra(META_MINIMUM)),
        ]
    };
    out.extend(extreme(&measures[0], "a", "b"));
    for m in &measures[1..] {
        out.extend(extreme(m, "b", "a"));
    }
    assert_eq!(out.len(), 72);
    out.iter().map(DataFact::canonical).collect()
}

#[test]
fn toy_enumeration_matches_hand_oracle() {
    let ds = load("c,x\na,1\nb,5\na,2\n");
    let facts: Vec<DataFact> = enumerate_facts(&ds, &DataConfig::default(), &EnumerationCaps::default())
        .unwrap()
        .collect();
    let got: Vec<String> = facts.iter().map(DataFact::canonical).collect();
    let set: BTreeSet<String> = got.iter().cloned().collect();
    assert_eq!(set.len(), got.len(), "duplicates in enumeration");
    assert_eq!(set, toy_oracle());
    for f in &facts {
        assert!(validate_fact(&ds, f).valid);
    }
    // deterministic order
    let again: Vec<String> = enumerate_facts(&ds, &DataConfig::default(), &EnumerationCaps::default())
        .unwrap()
        .map(|f| f.canonical())
        .collect();
    assert_eq!(got, again);
}

#[test]
fn value_only_enumeration_counts_measures() {
    let ds = load(OLYMPICS);
    let caps = EnumerationCaps {
        max_filters: 0,
        types: vec![FactType::Value],
        ..Default::default()
    };
    let n = enumerate_facts(&ds, &DataConfig::default(), &caps).unwrap().count();
    // three numerical fields times four folds, plus the field-less count
    assert_eq!(n, 3 * 4 + 1);
}

#[test]
fn no_dimensions_means_no_breakdown_types() {
    let ds = load("x,y\n1,2\n2,5\n3,5\n4,9\n");
    let caps = EnumerationCaps {
        max_filters: 0,
        ..Default::default()
    };
    let types: BTreeSet<FactType> = enumerate_facts(&ds, &DataConfig::default(), &caps)
        .unwrap()
        .map(|f| f.fact_type)
        .collect();
    assert!(!types.is_empty());
    assert!(types.iter().all(|t| !t.has_breakdown()), "{types:?}");
}

#[test]
fn capacity_limit_is_enforced() {
    let ds = load(OLYMPICS);
    let caps = EnumerationCaps {
        hard_limit: 10,
        ..Default::default()
    };
    match enumerate_facts(&ds, &DataConfig::default(), &caps) {
        Err(DataError::Capacity { estimate, limit }) => {
            assert_eq!(limit, 10);
            assert!(estimate > 10);
        }
        other => panic!("expected capacity error, got {:?}", other.err()),
    }
}

fn z_outlier_csv() -> String {
    // 16 groups at 10 and one at 50: mean 12.35.., population sd 9.41.., z = 4
    let mut csv = String::from("g,x\n");
    for i in 0..16 {
        csv.push_str(&format!("g{i:02},10\n"));
    }
    csv.push_str("spike,50\n");
    csv
}

#[test]
fn recommends_a_four_sigma_outlier() {
    let ds = load(&z_outlier_csv());
    let values: Vec<f64> = std::iter::repeat_n(10.0, 16).chain([50.0]).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    assert!(((50.0 - mean) / sd - 4.0).abs() < 1e-9);

    let recs = recommend_facts(&ds, 10, None, &DataConfig::default());
    assert!(recs.iter().any(|r| r.fact.fact_type == FactType::Outlier
        && r.fact.focus == ["spike".to_string()]));
    assert!(recs.windows(2).all(|w| w[0].significance >= w[1].significance));
    let keys: BTreeSet<String> = recs.iter().map(|r| r.fact.canonical()).collect();
    assert_eq!(keys.len(), recs.len());
    for r in &recs {
        assert!(validate_fact(&ds, &r.fact).valid);
        assert!((0.0..=1.0).contains(&r.significance));
    }
    assert!(recommend_facts(&ds, 1, None, &DataConfig::default()).len() <= 1);
}

#[test]
fn constant_column_yields_no_trend_or_outlier() {
    let ds = load("Year,g,x\n2001,a,7\n2002,b,7\n2003,c,7\n2004,d,7\n2005,e,7\n");
    let recs = recommend_facts(&ds, 50, None, &DataConfig::default());
    assert!(!recs.is_empty());
    for r in &recs {
        let on_x = r.fact.measure.field.as_deref() == Some("x");
        assert!(!(on_x && matches!(r.fact.fact_type, FactType::Trend | FactType::Outlier)));
    }
}

#[test]
fn recommendation_respects_filters() {
    let ds = load(OLYMPICS);
    let scope = sub(&[("Sex", "Female")]);
    let recs = recommend_facts(&ds, 5, Some(&scope), &DataConfig::default());
    assert!(!recs.is_empty());
    for r in &recs {
        assert_eq!(r.fact.subspace.get("Sex"), Some("Female"));
    }
}

// Randomized datasets and brute-force folds

#[derive(Debug, Clone)]
struct Table {
    cats: Vec<&'static str>,
    nums: Vec<Option<i32>>,
}

fn table() -> impl Strategy<Value = Table> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::sample::select(vec!["p", "q", "r", "s"]), n),
            prop::collection::vec(prop::option::weighted(0.9, -50i32..50), n),
        )
            .prop_map(|(cats, nums)| Table { cats, nums })
    })
}

impl Table {
    fn csv(&self) -> String {
        let mut s = String::from("cat,cat2,x\n");
        for (i, (c, x)) in self.cats.iter().zip(&self.nums).enumerate() {
            let x = x.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{c},{},{x}\n", if i % 3 == 0 { "u" } else { "w" }));
        }
        s
    }
}

fn brute_fold(t: &Table, agg: Aggregation) -> BTreeMap<&'static str, f64> {
    common::brute_fold(t.cats.iter().copied().zip(t.nums.iter().map(|x| x.map(f64::from))), agg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregate_matches_brute_force(t in table()) {
        let ds = load(&t.csv());
        for agg in Aggregation::ALL {
            let measure = if agg == Aggregation::Count { Measure::count() } else { Measure::of("x", agg) };
            let groups = aggregate(&ds, &RowSet::all(&ds), Some("cat"), &measure).unwrap();
            let expected = brute_fold(&t, agg);
            prop_assert_eq!(groups.len(), expected.len());
            for g in &groups {
                let e = expected[g.label.as_str()];
                if agg == Aggregation::Average {
                    prop_assert!((g.value - e).abs() <= 1e-9 * e.abs().max(1.0));
                } else {
                    prop_assert_eq!(g.value, e);
                }
            }
            prop_assert!(groups.windows(2).all(|w| w[0].value > w[1].value
                || (w[0].value == w[1].value && w[0].label < w[1].label)));
        }
    }

    #[test]
    fn filter_composition(t in table(), a in prop::sample::select(vec!["p", "q", "r", "s"]),
                          b in prop::sample::select(vec!["u", "w"])) {
        let ds = load(&t.csv());
        let s1 = sub(&[("cat", a)]);
        let s2 = sub(&[("cat2", b)]);
        let both = s1.union(&s2).unwrap();
        match (apply_subspace(&ds, &both), apply_subspace(&ds, &s1)) {
            (Ok(joint), Ok(first)) => {
                let stepwise = first.refine(&ds, &s2).unwrap();
                prop_assert_eq!(joint, stepwise);
            }
            (Err(_), _) | (_, Err(_)) => {
                // a value absent from the generated table is a domain error either way
                prop_assert!(apply_subspace(&ds, &both).is_err());
            }
        }
    }
}
