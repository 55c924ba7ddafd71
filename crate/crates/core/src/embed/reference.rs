//! The reference feature map.
//!
//! The vector is split into one block per tuple slot (type, subspace,
//! measure, breakdown, focus, meta). Each slot is turned into tokens; every
//! token hashes to a dense pseudo-random unit vector in its slot's block and
//! the block is the normalized token sum. Temporal values (years, dates,
//! months) in filters and focus do not hash: they move the block along a
//! per-field direction in proportion to their position in time, so a run of
//! consecutive years embeds as equally spaced points on a line.
//!
//! Blocks are weighted, concatenated, scaled by `1 / (2 * sqrt(sum w^2))`
//! (about half the unit ball for plain facts), clamped to norm 1 and finally
//! multiplied by the refinement matrix when one is configured.

use serde::{Deserialize, Serialize};

use super::{Embedder, FactVector};
use crate::data::{parse_temporal, TemporalKind};
use crate::error::EmbedError;
use crate::fact::{tokenize_fact, Aggregation, DataFact, Slot};
use crate::util::{fnv1a64, mix64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotWeights {
    #[serde(rename = "type")]
    pub fact_type: f64,
    pub subspace: f64,
    pub measure: f64,
    pub breakdown: f64,
    pub focus: f64,
    pub meta: f64,
}

impl Default for SlotWeights {
    fn default() -> Self {
        SlotWeights {
            fact_type: 1.5,
            subspace: 1.0,
            measure: 1.2,
            breakdown: 1.2,
            focus: 0.8,
            meta: 0.6,
        }
    }
}

impl SlotWeights {
    pub fn get(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Type => self.fact_type,
            Slot::Subspace => self.subspace,
            Slot::Measure => self.measure,
            Slot::Breakdown => self.breakdown,
            Slot::Focus => self.focus,
            Slot::Meta => self.meta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub weights: SlotWeights,
    /// Mixed into every token hash; changing it yields an unrelated map.
    pub salt: u64,
    /// Row-major `dimension x dimension` matrix applied last.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement: Option<Vec<f64>>,
}

pub const DEFAULT_SALT: u64 = 0x5eed_fac7_0000_0001;

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dimension: 128,
            weights: SlotWeights::default(),
            salt: DEFAULT_SALT,
            refinement: None,
        }
    }
}

impl EmbedderConfig {
    pub fn with_dimension(dimension: usize) -> Self {
        EmbedderConfig {
            dimension,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension < Slot::ALL.len() {
            return Err(EmbedError::Config(format!(
                "dimension must be at least {}, got {}",
                Slot::ALL.len(),
                self.dimension
            )));
        }
        for slot in Slot::ALL {
            let w = self.weights.get(slot);
            if !(w.is_finite() && w > 0.0) {
                return Err(EmbedError::Config(format!(
                    "weight of {slot:?} must be positive, got {w}"
                )));
            }
        }
        if let Some(r) = &self.refinement {
            if r.len() != self.dimension * self.dimension {
                return Err(EmbedError::Config(format!(
                    "refinement has {} entries, expected {}",
                    r.len(),
                    self.dimension * self.dimension
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::Config("refinement has non-finite entries".into()));
            }
        }
        Ok(())
    }
}

/// Sizes of the per-slot blocks, in `Slot::ALL` order.
pub fn block_sizes(d: usize) -> [usize; 6] {
    let n = Slot::ALL.len();
    let mut out = [d / n; 6];
    for s in out.iter_mut().take(d % n) {
        *s += 1;
    }
    out
}

#[derive(Clone, Debug)]
pub struct ReferenceEmbedder {
    config: EmbedderConfig,
}

impl ReferenceEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        Ok(ReferenceEmbedder { config })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    /// The feature vector before the refinement matrix.
    pub fn features(&self, fact: &DataFact) -> Result<Vec<f64>, EmbedError> {
        tokenize_fact(fact)?;
        let c = &self.config;
        let sizes = block_sizes(c.dimension);
        let mut x = Vec::with_capacity(c.dimension);
        let mut sum_w2 = 0.0;
        for (slot, size) in Slot::ALL.into_iter().zip(sizes) {
            let w = c.weights.get(slot);
            sum_w2 += w * w;
            let features = slot_features(fact, slot);
            x.extend(block(c.salt, slot, &features, size).into_iter().map(|v| v * w));
        }
        let scale = 1.0 / (2.0 * sum_w2.sqrt());
        let mut norm = 0.0;
        for v in &mut x {
            *v *= scale;
            norm += *v * *v;
        }
        let norm = norm.sqrt();
        if norm > 1.0 {
            for v in &mut x {
                *v /= norm;
            }
        }
        Ok(x)
    }
}

impl Embedder for ReferenceEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, fact: &DataFact) -> Result<FactVector, EmbedError> {
        let x = self.features(fact)?;
        Ok(FactVector::new(match &self.config.refinement {
            None => x,
            Some(r) => apply_matrix(r, &x),
        }))
    }
}

pub(crate) fn apply_matrix(r: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d)
        .map(|i| r[i * d..(i + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Default)]
struct SlotFeatures {
    tokens: Vec<String>,
    /// (direction key, position) pairs added linearly.
    ordinals: Vec<(String, f64)>,
}

fn ordinal(value: &str) -> Option<f64> {
    parse_temporal(value).map(|(kind, t)| match kind {
        TemporalKind::Month => (t - 6.5) / 5.5,
        _ => (t - 2000.0) / 25.0,
    })
}

fn slot_features(fact: &DataFact, slot: Slot) -> SlotFeatures {
    let mut f = SlotFeatures::default();
    match slot {
        Slot::Type => f.tokens.push(format!("type:{}", fact.fact_type)),
        Slot::Subspace => {
            for filter in fact.subspace.filters() {
                f.tokens.push(format!("field:{}", filter.field));
                match ordinal(&filter.value) {
                    Some(t) => f.ordinals.push((format!("sub:{}", filter.field), t)),
                    None => f.tokens.push(format!("filter:{}={}", filter.field, filter.value)),
                }
            }
        }
        Slot::Measure => {
            match (&fact.measure.field, fact.measure.aggregation) {
                (Some(field), agg) if agg != Aggregation::Count => {
                    f.tokens.push(format!("mfield:{field}"))
                }
                _ => f.tokens.push("<count>".into()),
            }
            f.tokens.push(format!("agg:{}", fact.measure.aggregation));
        }
        Slot::Breakdown => {
            if let Some(b) = &fact.breakdown {
                f.tokens.push(format!("bfield:{b}"));
            }
        }
        Slot::Focus => {
            let by = fact.breakdown.as_deref().unwrap_or_default();
            for (i, label) in fact.focus.iter().enumerate() {
                let pos = if i == 0 { "focus" } else { "focus2" };
                match ordinal(label) {
                    Some(t) => {
                        f.tokens.push(format!("{pos}:<ordinal>"));
                        f.ordinals.push((format!("{pos}:{by}"), t));
                    }
                    None => f.tokens.push(format!("{pos}:{label}")),
                }
            }
        }
        Slot::Meta => {
            if !fact.meta.extra.is_empty() {
                f.tokens.push(format!("meta:{}", fact.meta.extra));
            }
            if let Some(s) = &fact.meta.second_field {
                f.tokens.push(format!("second:{s}"));
            }
        }
    }
    if f.tokens.is_empty() {
        f.tokens.push("<none>".into());
    }
    f
}

fn block(salt: u64, slot: Slot, features: &SlotFeatures, size: usize) -> Vec<f64> {
    let mut acc = vec![0.0; size];
    for t in &features.tokens {
        for (a, v) in acc.iter_mut().zip(token_vector(salt, slot, t, size)) {
            *a += v;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    for (key, t) in &features.ordinals {
        for (a, v) in acc.iter_mut().zip(token_vector(salt, slot, key, size)) {
            *a += t * v;
        }
    }
    acc
}

/// Dense unit vector for a token, uniform components before normalizing.
fn token_vector(salt: u64, slot: Slot, token: &str, size: usize) -> Vec<f64> {
    let key = format!("{slot:?}\u{1f}{token}");
    let seed = fnv1a64(key.as_bytes()) ^ salt;
    let mut v: Vec<f64> = (0..size as u64)
        .map(|i| {
            let bits = mix64(seed.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            // top 53 bits to [0, 1), then to [-1, 1)
            (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}
