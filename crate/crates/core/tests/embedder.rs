use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use storyweave::embed::{
    cosine_similarity, distance, embed, export_embedding_table, import_embedding_table,
    train_refinement, trigram_loss, trigram_loss_gradient, vector_trigram_loss, EmbedderConfig,
    Embedder, FactVector, LookupEmbedder, MissPolicy, ReferenceEmbedder, TrainConfig, Trigram,
    VectorSource,
};
use storyweave::fact::{META_DECREASING, META_INCREASING};
use storyweave::{Aggregation, DataFact, EmbedError, FactType, Filter, Measure, Meta, Subspace};

mod common;

use common::{focus_year_fact, trigram_facts, year_fact};

fn v(xs: &[f64]) -> FactVector {
    FactVector::new(xs.to_vec())
}

#[test]
fn embedding_is_deterministic_and_sized() {
    let f = year_fact(2004);
    let a = embed(&f, &EmbedderConfig::default()).unwrap();
    let b = embed(&f, &EmbedderConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), 128);
    assert!(a.norm() <= 1.0 + 1e-12);
    assert_eq!(embed(&f, &EmbedderConfig::with_dimension(32)).unwrap().dim(), 32);
}

#[test]
fn invalid_fact_is_rejected() {
    let bad = DataFact::new(FactType::Trend, Measure::count());
    assert!(matches!(
        embed(&bad, &EmbedderConfig::default()),
        Err(EmbedError::Fact(_))
    ));
}

#[test]
fn focus_edit_is_closer_than_focus_and_breakdown_edit() {
    let base = DataFact::new(FactType::Distribution, Measure::of("Gold Medal", Aggregation::Sum))
        .with_breakdown("Country")
        .with_focus(["China"]);
    let focus_only = base.clone().with_focus(["Norway"]);
    let both = base.clone().with_breakdown("Sport").with_focus(["Biathlon"]);
    let c = EmbedderConfig::default();
    let (e0, e1, e2) = (
        embed(&base, &c).unwrap(),
        embed(&focus_only, &c).unwrap(),
        embed(&both, &c).unwrap(),
    );
    assert!(distance(&e0, &e1).unwrap() < distance(&e0, &e2).unwrap());
}

// Random structurally valid facts and single-slot edits

const DIMS: [&str; 4] = ["Country", "Sex", "Sport", "Year"];
const NUMS: [&str; 3] = ["Gold", "Silver", "Bronze"];
const VALUES: [&str; 6] = ["China", "Norway", "Female", "Biathlon", "2002", "2010"];

fn random_fact(rng: &mut ChaCha8Rng) -> DataFact {
    let t = *[FactType::Distribution, FactType::Rank, FactType::Extreme, FactType::Trend]
        .choose(rng)
        .unwrap();
    let agg = *[Aggregation::Sum, Aggregation::Average, Aggregation::Maximum]
        .choose(rng)
        .unwrap();
    let mut f = DataFact::new(t, Measure::of(*NUMS.choose(rng).unwrap(), agg))
        .with_breakdown(*DIMS.choose(rng).unwrap());
    if rng.gen_bool(0.5) {
        let field = *DIMS.iter().filter(|d| Some(**d) != f.breakdown.as_deref()).collect::<Vec<_>>().choose(rng).unwrap();
        f = f.with_subspace(Subspace::new(vec![Filter::new(*field, *VALUES.choose(rng).unwrap())]));
    }
    match t {
        FactType::Extreme => f.with_focus([*VALUES.choose(rng).unwrap()]).with_meta(Meta::extra("maximum")),
        FactType::Trend => f.with_meta(Meta::extra(META_INCREASING)),
        _ if rng.gen_bool(0.5) => f.with_focus([*VALUES.choose(rng).unwrap()]),
        _ => f,
    }
}

/// Change exactly one slot of `f`; `None` when the slot has no alternative.
fn edit(f: &DataFact, slot: usize, rng: &mut ChaCha8Rng) -> Option<DataFact> {
    let mut g = f.clone();
    match slot {
        0 => {
            g.fact_type = match f.fact_type {
                FactType::Distribution => FactType::Rank,
                FactType::Rank => FactType::Distribution,
                _ => return None,
            }
        }
        1 => {
            let field = *DIMS.iter().filter(|d| Some(**d) != f.breakdown.as_deref()).collect::<Vec<_>>().choose(rng).unwrap();
            let value = *VALUES.iter().filter(|v| f.subspace.get(field) != Some(**v)).collect::<Vec<_>>().choose(rng).unwrap();
            g.subspace = Subspace::new(vec![Filter::new(*field, *value)]);
        }
        2 => {
            let field = *NUMS.iter().filter(|n| Some(**n) != f.measure.field.as_deref()).collect::<Vec<_>>().choose(rng).unwrap();
            g.measure = Measure::of(*field, f.measure.aggregation);
        }
        3 => {
            let field = *DIMS.iter().filter(|d| Some(**d) != f.breakdown.as_deref() && !f.subspace.contains_field(d)).collect::<Vec<_>>().choose(rng)?;
            g.breakdown = Some(field.to_string());
        }
        4 => {
            let cur = f.focus.first().map(String::as_str);
            let value = *VALUES.iter().filter(|v| Some(**v) != cur).collect::<Vec<_>>().choose(rng).unwrap();
            g.focus = vec![value.to_string()];
        }
        _ => {
            g.meta = match f.meta.extra.as_str() {
                META_INCREASING => Meta::extra(META_DECREASING),
                "maximum" => Meta::extra("minimum"),
                _ => return None,
            }
        }
    }
    (g.is_structurally_valid() && g.canonical() != f.canonical()).then_some(g)
}

#[test]
fn single_slot_edits_are_local() {
    let e = ReferenceEmbedder::new(EmbedderConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut checked, mut held) = (0, 0);
    while checked < 1000 {
        let base = random_fact(&mut rng);
        let (s1, s2) = (rng.gen_range(0..6), rng.gen_range(0..6));
        if s1 == s2 {
            continue;
        }
        let Some(one) = edit(&base, s1, &mut rng) else { continue };
        let Some(two) = edit(&one, s2, &mut rng) else { continue };
        if two.differing_slots(&base).len() != 2 {
            continue;
        }
        let vb = e.embed(&base).unwrap();
        let d1 = distance(&vb, &e.embed(&one).unwrap()).unwrap();
        let d2 = distance(&vb, &e.embed(&two).unwrap()).unwrap();
        checked += 1;
        if d1 < d2 {
            held += 1;
        }
    }
    assert!(held as f64 / checked as f64 >= 0.99, "{held}/{checked}");
}

#[test]
fn trigram_loss_hand_examples() {
    // collinear, equally spaced
    let l = vector_trigram_loss(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]), &v(&[2.0, 4.0]), 0.0);
    assert_eq!(l, 0.0);
    // symmetric endpoints: loss is |e|^2
    let l = vector_trigram_loss(&v(&[1.0, 1.0]), &v(&[1.5, 3.0]), &v(&[1.0, 1.0]), 0.0);
    assert!((l - (0.25 + 4.0)).abs() < 1e-12);
    // (0,0),(1,1),(2,0), alpha 1: midpoint term 1, adjacent pairs 2 + 2
    let l = vector_trigram_loss(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), &v(&[2.0, 0.0]), 1.0);
    assert!((l - 5.0).abs() < 1e-12);
}

#[test]
fn collinear_corpus_has_zero_loss_and_stays_put() {
    let trigrams: Vec<Trigram> = (0..12)
        .map(|i| {
            Trigram::new(year_fact(1995 + i), year_fact(1996 + i), year_fact(1997 + i)).unwrap()
        })
        .collect();
    let c = EmbedderConfig::default();
    let l0 = trigram_loss(&trigrams, 0.0, &c).unwrap();
    assert!(l0 < 1e-20, "{l0}");
    let report = train_refinement(
        &trigrams,
        &TrainConfig {
            alpha: 0.0,
            epochs: 20,
            ..Default::default()
        },
        &c,
    )
    .unwrap();
    let l1 = trigram_loss(&trigrams, 0.0, &report.config).unwrap();
    assert!((l1 - l0).abs() < 1e-9);
}

fn corpus(n: usize) -> Vec<Trigram> {
    trigram_facts(n)
        .into_iter()
        .map(|[a, b, c]| Trigram::new(a, b, c).unwrap())
        .collect()
}

#[test]
fn gradient_matches_finite_differences() {
    let trigrams = corpus(3);
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r: Vec<f64> = (0..d * d)
        .map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3))
        .collect();
    let config = EmbedderConfig {
        refinement: Some(r.clone()),
        ..EmbedderConfig::with_dimension(d)
    };
    let alpha = 0.5;
    let g = trigram_loss_gradient(&trigrams, alpha, &config).unwrap();
    let h = 1e-5;
    for k in 0..d * d {
        let at = |delta: f64| {
            let mut rr = r.clone();
            rr[k] += delta;
            trigram_loss(
                &trigrams,
                alpha,
                &EmbedderConfig {
                    refinement: Some(rr),
                    ..config.clone()
                },
            )
            .unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let scale = g[k].abs().max(fd.abs()).max(1e-6);
        assert!((g[k] - fd).abs() / scale < 1e-4, "entry {k}: {} vs {fd}", g[k]);
    }
}

#[test]
fn training_is_monotone() {
    let trigrams = corpus(30);
    let report = train_refinement(&trigrams, &TrainConfig::default(), &EmbedderConfig::default())
        .unwrap();
    assert!(report.losses.len() > 1);
    for w in report.losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    assert!(report.losses.last().unwrap() < &report.losses[0]);
    let direct = trigram_loss(&trigrams, 0.1, &report.config).unwrap();
    assert!((direct - report.losses.last().unwrap()).abs() < 1e-9);
}

#[test]
fn training_needs_ten_trigrams() {
    assert!(matches!(
        train_refinement(&corpus(9), &TrainConfig::default(), &EmbedderConfig::default()),
        Err(EmbedError::NotEnoughTrigrams { needed: 10, got: 9 })
    ));
}

#[test]
fn oversized_steps_diverge() {
    let train = TrainConfig {
        learning_rate: 1e4,
        line_search: false,
        ..Default::default()
    };
    assert!(matches!(
        train_refinement(&corpus(12), &train, &EmbedderConfig::with_dimension(16)),
        Err(EmbedError::TrainingDiverged { .. })
    ));
}

#[test]
fn trigram_facts_must_differ() {
    assert!(matches!(
        Trigram::new(year_fact(2001), year_fact(2001), year_fact(2002)),
        Err(EmbedError::DuplicateTrigramFacts)
    ));
}

#[test]
fn table_round_trip() {
    let facts: Vec<DataFact> = (2000..2010).map(year_fact).chain([focus_year_fact(2001, "Sales")]).collect();
    let e = ReferenceEmbedder::new(EmbedderConfig::default()).unwrap();
    let text = export_embedding_table(&facts, &e).unwrap();
    assert!(text.starts_with("dim=128\n"));
    let table = import_embedding_table(&text).unwrap();
    assert_eq!(table.len(), facts.len());
    let lookup = LookupEmbedder::new(table, e.clone(), MissPolicy::Error).unwrap();
    for f in &facts {
        let l = lookup.lookup(f).unwrap();
        assert_eq!(l.source, VectorSource::Table);
        assert_eq!(l.vector, e.embed(f).unwrap());
    }
    assert!(matches!(lookup.embed(&year_fact(1990)), Err(EmbedError::Miss(_))));
}

#[test]
fn table_dimension_mismatch_and_fallback() {
    let e16 = ReferenceEmbedder::new(EmbedderConfig::with_dimension(16)).unwrap();
    let text = export_embedding_table(&[year_fact(2000)], &e16).unwrap();
    let table = import_embedding_table(&text).unwrap();
    let e128 = ReferenceEmbedder::new(EmbedderConfig::default()).unwrap();
    assert!(matches!(
        LookupEmbedder::new(table.clone(), e128, MissPolicy::Fallback),
        Err(EmbedError::Dimension { expected: 128, got: 16 })
    ));
    let lookup = LookupEmbedder::new(table, e16.clone(), MissPolicy::Fallback).unwrap();
    let miss = lookup.lookup(&year_fact(2001)).unwrap();
    assert_eq!(miss.source, VectorSource::Fallback);
    assert_eq!(miss.vector, e16.embed(&year_fact(2001)).unwrap());
}

#[test]
fn malformed_tables() {
    for (text, line) in [
        ("", 1),
        ("dims=3\n", 1),
        ("dim=2\nkey-without-tab\n", 2),
        ("dim=2\nk\t!!!\n", 2),
        ("dim=2\nk\tAAAAAAAAAAA=\n", 2),
    ] {
        match import_embedding_table(text) {
            Err(EmbedError::Format { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

fn vec_pair(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0f64..10.0, d),
        prop::collection::vec(-10.0f64..10.0, d),
    )
}

proptest! {
    #[test]
    fn metric_properties((a, b) in vec_pair(5), c in prop::collection::vec(-10.0f64..10.0, 5)) {
        let (a, b, c) = (v(&a), v(&b), v(&c));
        let ab = distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, distance(&b, &a).unwrap());
        prop_assert!(ab <= distance(&a, &c).unwrap() + distance(&c, &b).unwrap() + 1e-9);
        if a.norm() > 0.0 && b.norm() > 0.0 {
            let cos = cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&cos));
        }
    }

    #[test]
    fn loss_is_non_negative((a, b) in vec_pair(4), c in prop::collection::vec(-10.0f64..10.0, 4), alpha in 0.0f64..3.0) {
        prop_assert!(vector_trigram_loss(&v(&a), &v(&b), &v(&c), alpha) >= 0.0);
    }
}
