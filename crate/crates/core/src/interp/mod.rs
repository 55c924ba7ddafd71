//! Interpolation between two keyframe facts.
//!
//! The keyframes are embedded, the segment between them is cut into `N + 1`
//! equal steps, and a Monte-Carlo tree search walks the fact space from the
//! first keyframe toward the second through seven constrained edit actions
//! (see [`ActionKind`]). Paths are scored by how closely they follow the
//! segment; the facts of the best path closest to the cut points become the
//! intermediate facts.

mod actions;
mod oracle;
mod search;

use serde::{Deserialize, Serialize};

use crate::embed::{distance, FactVector};
use crate::error::InterpolationError;

pub use actions::{
    allowed_slots, applicable_actions, condition_holds, expand_action, random_child, type_branch,
    ActionKind, TypeBranch,
};
pub use oracle::{exhaustive_oracle, OracleResult};
pub use search::{
    interpolate, interpolate_with, recommend_alternatives, recommend_alternatives_with,
    InterpolationResult, Termination,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct InterpolationConfig {
    /// Number of intermediate facts.
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    /// Stop once a node is this close to the target, as a fraction of the
    /// keyframe distance.
    pub lambda_rel: f64,
    pub max_iterations: usize,
    pub rollout_depth: usize,
    pub exploration_c: f64,
    /// Children kept per expanded action.
    pub branch_cap: usize,
    pub rng_seed: u64,
    pub time_budget_ms: u64,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig {
            n: 3,
            lambda_rel: 0.15,
            max_iterations: 2000,
            rollout_depth: 3,
            exploration_c: 0.5,
            branch_cap: 8,
            rng_seed: 7,
            time_budget_ms: 10_000,
        }
    }
}

impl InterpolationConfig {
    pub fn validate(&self) -> Result<(), InterpolationError> {
        let bad = |m: &str| Err(InterpolationError::Config(m.to_string()));
        if self.n == 0 {
            return bad("N must be positive");
        }
        if !(self.lambda_rel > 0.0 && self.lambda_rel <= 1.0) {
            return bad("lambdaRel must lie in (0, 1]");
        }
        if self.max_iterations == 0 || self.rollout_depth == 0 || self.branch_cap == 0 {
            return bad("maxIterations, rolloutDepth and branchCap must be positive");
        }
        if !(self.exploration_c.is_finite() && self.exploration_c >= 0.0) {
            return bad("explorationC must be non-negative");
        }
        if self.time_budget_ms == 0 {
            return bad("timeBudgetMs must be positive");
        }
        Ok(())
    }
}

/// `n` equally spaced points strictly between `vs` and `vt`.
pub fn compute_midpoints(
    vs: &FactVector,
    vt: &FactVector,
    n: usize,
) -> Result<Vec<FactVector>, InterpolationError> {
    if vs.dim() != vt.dim() {
        return Err(InterpolationError::Dimension {
            expected: vs.dim(),
            got: vt.dim(),
        });
    }
    Ok((1..=n)
        .map(|k| vs.lerp(vt, k as f64 / (n + 1) as f64))
        .collect())
}

/// Running state of the path score, so tree nodes extend their parent's.
#[derive(Clone, Debug)]
pub(crate) struct RewardState {
    expected: FactVector,
    deviation: f64,
    steps: usize,
}

impl RewardState {
    pub(crate) fn start(vs: &FactVector) -> Self {
        RewardState {
            expected: vs.clone(),
            deviation: 0.0,
            steps: 0,
        }
    }

    /// Advance by one path point; `u` is the unit direction of the segment.
    pub(crate) fn step(&self, v: &FactVector, u: &FactVector) -> RewardState {
        let len = distance(v, &self.expected).expect("same dimension");
        let expected = self.expected.add_scaled(u, len);
        let dev = distance(v, &expected).expect("same dimension");
        RewardState {
            expected,
            deviation: self.deviation + dev,
            steps: self.steps + 1,
        }
    }

    pub(crate) fn reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            -self.deviation / self.steps as f64
        }
    }
}

pub(crate) fn unit_direction(
    vs: &FactVector,
    vt: &FactVector,
) -> Result<(FactVector, f64), InterpolationError> {
    let span = distance(vs, vt).map_err(|_| InterpolationError::Dimension {
        expected: vs.dim(),
        got: vt.dim(),
    })?;
    if span <= f64::EPSILON {
        return Err(InterpolationError::DegenerateDirection);
    }
    Ok((vt.sub(vs).scale(1.0 / span), span))
}

/// Negated mean deviation of a path from where steps of the same lengths
/// along the keyframe segment would have led. Zero means the path lies on
/// the segment.
pub fn path_reward(
    path: &[FactVector],
    vs: &FactVector,
    vt: &FactVector,
) -> Result<f64, InterpolationError> {
    let (u, _) = unit_direction(vs, vt)?;
    if path.is_empty() {
        return Err(InterpolationError::Config("path is empty".into()));
    }
    let mut state = RewardState::start(vs);
    for v in path {
        if v.dim() != vs.dim() {
            return Err(InterpolationError::Dimension {
                expected: vs.dim(),
                got: v.dim(),
            });
        }
        state = state.step(v, &u);
    }
    Ok(state.reward())
}

/// Order-preserving assignment of `midpoints` to distinct `nodes` minimizing
/// the summed distance. Returns node indices, strictly increasing. When there
/// are fewer nodes than midpoints every node is used.
pub fn monotone_match(nodes: &[FactVector], midpoints: &[FactVector]) -> Vec<usize> {
    let (l, n) = (nodes.len(), midpoints.len());
    if l <= n {
        return (0..l).collect();
    }
    let cost = |k: usize, j: usize| distance(&midpoints[k], &nodes[j]).unwrap_or(f64::INFINITY);
    // best[k][j]: cheapest placement of midpoints 0..=k with midpoint k on node j
    let mut best = vec![vec![f64::INFINITY; l]; n];
    let mut from = vec![vec![usize::MAX; l]; n];
    for (j, b) in best[0].iter_mut().enumerate() {
        *b = cost(0, j);
    }
    for k in 1..n {
        let (mut run, mut arg) = (f64::INFINITY, usize::MAX);
        for j in k..l {
            if best[k - 1][j - 1] < run {
                run = best[k - 1][j - 1];
                arg = j - 1;
            }
            best[k][j] = run + cost(k, j);
            from[k][j] = arg;
        }
    }
    let mut j = (n - 1..l)
        .min_by(|&a, &b| best[n - 1][a].total_cmp(&best[n - 1][b]))
        .expect("l > n");
    let mut out = vec![0; n];
    for k in (0..n).rev() {
        out[k] = j;
        j = from[k][j];
    }
    out
}
