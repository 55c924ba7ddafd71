//! Fact embeddings: a deterministic hashed feature map with an optional
//! linear refinement, Euclidean/cosine geometry, the trigram loss used to fit
//! the refinement, and embedding tables for plugging in vectors computed
//! elsewhere.

mod reference;
mod table;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::EmbedError;
use crate::fact::DataFact;

pub use reference::{block_sizes, EmbedderConfig, ReferenceEmbedder, SlotWeights};
pub use table::{
    export_embedding_table, import_embedding_table, EmbeddingTable, Lookup, LookupEmbedder,
    MissPolicy, VectorSource,
};
pub use train::{
    train_refinement, trigram_loss, trigram_loss_gradient, vector_trigram_loss, TrainConfig,
    TrainReport, Trigram, MIN_TRAINING_TRIGRAMS,
};

/// A fixed-length real vector representing one fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactVector(Vec<f64>);

impl FactVector {
    pub fn new(components: Vec<f64>) -> Self {
        FactVector(components)
    }

    pub fn zeros(d: usize) -> Self {
        FactVector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &FactVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self + t * (other - self)`.
    pub fn lerp(&self, other: &FactVector, t: f64) -> FactVector {
        FactVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }

    pub fn sub(&self, other: &FactVector) -> FactVector {
        FactVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add_scaled(&self, other: &FactVector, s: f64) -> FactVector {
        FactVector(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub fn scale(&self, s: f64) -> FactVector {
        FactVector(self.0.iter().map(|a| a * s).collect())
    }
}

impl From<Vec<f64>> for FactVector {
    fn from(v: Vec<f64>) -> Self {
        FactVector(v)
    }
}

/// Anything that maps facts to vectors of one fixed dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, fact: &DataFact) -> Result<FactVector, EmbedError>;
}

/// Embed with the reference map under `config`.
pub fn embed(fact: &DataFact, config: &EmbedderConfig) -> Result<FactVector, EmbedError> {
    ReferenceEmbedder::new(config.clone())?.embed(fact)
}

fn check_dims(u: &FactVector, v: &FactVector) -> Result<(), EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::Dimension {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance.
pub fn distance(u: &FactVector, v: &FactVector) -> Result<f64, EmbedError> {
    check_dims(u, v)?;
    Ok(u.0
        .iter()
        .zip(&v.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &FactVector, v: &FactVector) -> Result<f64, EmbedError> {
    check_dims(u, v)?;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::DegenerateVector);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> FactVector {
        FactVector::new(xs.to_vec())
    }

    #[test]
    fn pythagorean_distance() {
        assert_eq!(distance(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(distance(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            distance(&v(&[0.0]), &v(&[0.0, 1.0])),
            Err(EmbedError::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn cosine_cases() {
        let u = v(&[1.0, 2.0, -3.0]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&u, &u.scale(2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&u, &FactVector::zeros(3)),
            Err(EmbedError::DegenerateVector)
        ));
    }
}
