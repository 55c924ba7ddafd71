//! Trigram loss and gradient descent on the refinement matrix.
//!
//! For a trigram (a, b, c) with features x_a, x_b, x_c and refinement R the
//! loss is
//!
//! ```text
//! |R (x_b - (x_a + x_c) / 2)|^2 + alpha * (|R (x_a - x_b)|^2 + |R (x_b - x_c)|^2)
//! ```
//!
//! summed over trigrams. Every term has the form `w |R y|^2`, so the loss is
//! a quadratic in R with gradient `2 * sum w (R y) y^T`.

use serde::{Deserialize, Serialize};

use super::reference::{EmbedderConfig, ReferenceEmbedder};
use super::FactVector;
use crate::error::EmbedError;
use crate::fact::DataFact;

/// Three facts in narrative order, pairwise distinct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trigram {
    pub a: DataFact,
    pub b: DataFact,
    pub c: DataFact,
}

impl Trigram {
    pub fn new(a: DataFact, b: DataFact, c: DataFact) -> Result<Self, EmbedError> {
        let (ka, kb, kc) = (a.canonical(), b.canonical(), c.canonical());
        if ka == kb || kb == kc || ka == kc {
            return Err(EmbedError::DuplicateTrigramFacts);
        }
        Ok(Trigram { a, b, c })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Halve the step until the loss does not increase. Without it a step
    /// is always taken and five increases in a row abort training.
    pub line_search: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            learning_rate: 0.01,
            epochs: 100,
            line_search: true,
        }
    }
}

pub const MIN_TRAINING_TRIGRAMS: usize = 10;
const MAX_HALVINGS: usize = 40;
const DIVERGENCE_RUN: usize = 5;

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub config: EmbedderConfig,
    /// Loss before training followed by the loss after each epoch.
    pub losses: Vec<f64>,
}

/// Weighted residuals `(w, y)` in feature space.
fn residuals(
    trigrams: &[Trigram],
    alpha: f64,
    config: &EmbedderConfig,
) -> Result<Vec<(f64, Vec<f64>)>, EmbedError> {
    let base = ReferenceEmbedder::new(EmbedderConfig {
        refinement: None,
        ..config.clone()
    })?;
    let mut out = Vec::with_capacity(trigrams.len() * 3);
    for t in trigrams {
        let (xa, xb, xc) = (base.features(&t.a)?, base.features(&t.b)?, base.features(&t.c)?);
        let mid: Vec<f64> = (0..xa.len()).map(|i| xb[i] - 0.5 * (xa[i] + xc[i])).collect();
        out.push((1.0, mid));
        if alpha > 0.0 {
            out.push((alpha, (0..xa.len()).map(|i| xa[i] - xb[i]).collect()));
            out.push((alpha, (0..xa.len()).map(|i| xb[i] - xc[i]).collect()));
        }
    }
    Ok(out)
}

fn identity(d: usize) -> Vec<f64> {
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        r[i * d + i] = 1.0;
    }
    r
}

fn mul(r: &[f64], y: &[f64]) -> Vec<f64> {
    super::reference::apply_matrix(r, y)
}

fn loss_at(r: &[f64], res: &[(f64, Vec<f64>)]) -> f64 {
    res.iter()
        .map(|(w, y)| w * mul(r, y).iter().map(|v| v * v).sum::<f64>())
        .sum()
}

fn gradient_at(r: &[f64], res: &[(f64, Vec<f64>)], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for (w, y) in res {
        let ry = mul(r, y);
        for i in 0..d {
            let s = 2.0 * w * ry[i];
            if s == 0.0 {
                continue;
            }
            let row = &mut g[i * d..(i + 1) * d];
            for (gij, yj) in row.iter_mut().zip(y) {
                *gij += s * yj;
            }
        }
    }
    g
}

fn check_alpha(alpha: f64) -> Result<(), EmbedError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(EmbedError::Config(format!("alpha must be non-negative, got {alpha}")))
    }
}

/// Loss of one trigram given its vectors directly.
pub fn vector_trigram_loss(a: &FactVector, b: &FactVector, c: &FactVector, alpha: f64) -> f64 {
    let sq = |x: &FactVector, y: &FactVector| {
        x.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    };
    sq(b, &a.lerp(c, 0.5)) + alpha * (sq(a, b) + sq(b, c))
}

/// Sum of the per-trigram loss under `config` (refinement included).
pub fn trigram_loss(
    trigrams: &[Trigram],
    alpha: f64,
    config: &EmbedderConfig,
) -> Result<f64, EmbedError> {
    if trigrams.is_empty() {
        return Err(EmbedError::NotEnoughTrigrams { needed: 1, got: 0 });
    }
    check_alpha(alpha)?;
    let res = residuals(trigrams, alpha, config)?;
    let r = config
        .refinement
        .clone()
        .unwrap_or_else(|| identity(config.dimension));
    Ok(loss_at(&r, &res))
}

/// Gradient of [`trigram_loss`] with respect to the refinement entries,
/// row-major. An absent refinement is treated as the identity.
pub fn trigram_loss_gradient(
    trigrams: &[Trigram],
    alpha: f64,
    config: &EmbedderConfig,
) -> Result<Vec<f64>, EmbedError> {
    if trigrams.is_empty() {
        return Err(EmbedError::NotEnoughTrigrams { needed: 1, got: 0 });
    }
    check_alpha(alpha)?;
    let res = residuals(trigrams, alpha, config)?;
    let r = config
        .refinement
        .clone()
        .unwrap_or_else(|| identity(config.dimension));
    Ok(gradient_at(&r, &res, config.dimension))
}

/// Fit the refinement matrix by gradient descent; returns the updated config
/// and the loss history.
///
/// The loss is minimized by shrinking R along the residual directions, so
/// long runs pull related facts together and eventually flatten those
/// directions entirely. Keep `epochs` modest.
pub fn train_refinement(
    trigrams: &[Trigram],
    train: &TrainConfig,
    config: &EmbedderConfig,
) -> Result<TrainReport, EmbedError> {
    if trigrams.len() < MIN_TRAINING_TRIGRAMS {
        return Err(EmbedError::NotEnoughTrigrams {
            needed: MIN_TRAINING_TRIGRAMS,
            got: trigrams.len(),
        });
    }
    check_alpha(train.alpha)?;
    if !(train.learning_rate.is_finite() && train.learning_rate > 0.0) || train.epochs == 0 {
        return Err(EmbedError::Config(
            "learning rate and epochs must be positive".into(),
        ));
    }
    config.validate()?;
    let d = config.dimension;
    let res = residuals(trigrams, train.alpha, config)?;
    let mut r = config.refinement.clone().unwrap_or_else(|| identity(d));
    let mut loss = loss_at(&r, &res);
    let mut losses = vec![loss];
    let mut increases = 0;

    for epoch in 1..=train.epochs {
        let g = gradient_at(&r, &res, d);
        let step = |s: f64| -> Vec<f64> { r.iter().zip(&g).map(|(a, b)| a - s * b).collect() };

        if train.line_search {
            let mut s = train.learning_rate;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = step(s);
                let l = loss_at(&cand, &res);
                if l.is_finite() && l <= loss {
                    accepted = Some((cand, l));
                    break;
                }
                s *= 0.5;
            }
            match accepted {
                Some((cand, l)) => {
                    r = cand;
                    loss = l;
                    losses.push(loss);
                }
                // no descent direction left at any step size
                None => break,
            }
        } else {
            let cand = step(train.learning_rate);
            let l = loss_at(&cand, &res);
            if !l.is_finite() {
                return Err(EmbedError::TrainingDiverged { epoch });
            }
            increases = if l > loss { increases + 1 } else { 0 };
            if increases >= DIVERGENCE_RUN {
                return Err(EmbedError::TrainingDiverged { epoch });
            }
            r = cand;
            loss = l;
            losses.push(loss);
        }
    }

    Ok(TrainReport {
        config: EmbedderConfig {
            refinement: Some(r),
            ..config.clone()
        },
        losses,
    })
}
