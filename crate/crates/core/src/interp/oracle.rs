//! Exhaustive reference answer for small datasets.
//!
//! Every valid fact is enumerated and embedded; each midpoint is assigned a
//! distinct fact (never a keyframe) so that the summed midpoint distance is
//! minimal, and the resulting sequence is scored like a search result.

use serde::{Deserialize, Serialize};

use super::{compute_midpoints, path_reward};
use crate::data::{enumerate_facts, DataConfig, Dataset, EnumerationCaps};
use crate::embed::{distance, Embedder, FactVector};
use crate::error::InterpolationError;
use crate::fact::DataFact;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleResult {
    pub facts: Vec<DataFact>,
    /// Summed distance of the facts to their midpoints.
    pub cost: f64,
    pub reward: f64,
    pub candidates: usize,
}

pub fn exhaustive_oracle(
    dataset: &Dataset,
    fs: &DataFact,
    ft: &DataFact,
    n: usize,
    embedder: &dyn Embedder,
    data: &DataConfig,
    caps: &EnumerationCaps,
) -> Result<OracleResult, InterpolationError> {
    if n == 0 {
        return Err(InterpolationError::Config("N must be positive".into()));
    }
    let (ks, kt) = (fs.canonical(), ft.canonical());
    if ks == kt {
        return Err(InterpolationError::DegenerateKeyframes);
    }
    let vs = embedder.embed(fs)?;
    let vt = embedder.embed(ft)?;
    let midpoints = compute_midpoints(&vs, &vt, n)?;

    let mut pool: Vec<(DataFact, FactVector)> = Vec::new();
    for fact in enumerate_facts(dataset, data, caps)? {
        let k = fact.canonical();
        if k != ks && k != kt {
            let v = embedder.embed(&fact)?;
            pool.push((fact, v));
        }
    }
    let candidates = pool.len();

    // Only the n nearest facts of each midpoint can appear in an optimal
    // distinct assignment, so the brute force runs over those.
    let mut shortlist: Vec<Vec<(usize, f64)>> = Vec::new();
    for m in &midpoints {
        let mut d: Vec<(usize, f64)> = pool
            .iter()
            .enumerate()
            .map(|(i, (_, v))| (i, distance(v, m).expect("same dimension")))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(n);
        shortlist.push(d);
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut chosen = Vec::with_capacity(n);
    assign(&shortlist, 0, 0.0, &mut chosen, &mut best);
    let Some((cost, picks)) = best else {
        return Ok(OracleResult {
            facts: Vec::new(),
            cost: f64::INFINITY,
            reward: f64::NEG_INFINITY,
            candidates,
        });
    };
    let vectors: Vec<FactVector> = picks.iter().map(|&i| pool[i].1.clone()).collect();
    Ok(OracleResult {
        facts: picks.iter().map(|&i| pool[i].0.clone()).collect(),
        cost,
        reward: path_reward(&vectors, &vs, &vt)?,
        candidates,
    })
}

fn assign(
    shortlist: &[Vec<(usize, f64)>],
    k: usize,
    cost: f64,
    chosen: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if best.as_ref().is_some_and(|b| cost >= b.0) {
        return;
    }
    if k == shortlist.len() {
        *best = Some((cost, chosen.clone()));
        return;
    }
    for &(i, d) in &shortlist[k] {
        if !chosen.contains(&i) {
            chosen.push(i);
            assign(shortlist, k + 1, cost + d, chosen, best);
            chosen.pop();
        }
    }
}
