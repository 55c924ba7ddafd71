//! Monte-Carlo tree search over facts.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actions::{applicable_actions, expand_action, random_child, ActionKind};
use super::{
    compute_midpoints, monotone_match, path_reward, unit_direction, InterpolationConfig,
    RewardState,
};
use crate::data::{DataConfig, Dataset, FactEngine, ScoredFact};
use crate::embed::{cosine_similarity, distance, Embedder, FactVector};
use crate::error::InterpolationError;
use crate::fact::DataFact;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedLambda,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InterpolationResult {
    pub facts: Vec<DataFact>,
    /// Score of the path through the first `k + 1` facts, per fact.
    pub rewards: Vec<f64>,
    /// Score of the whole search path the facts were drawn from.
    pub best_path_reward: Option<f64>,
    pub iterations: usize,
    pub terminated: Termination,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl InterpolationResult {
    /// Score of the whole returned path; `None` when no fact was found.
    pub fn path_reward(&self) -> Option<f64> {
        self.rewards.last().copied()
    }
}

struct Node {
    fact: DataFact,
    key: String,
    vector: FactVector,
    parent: Option<usize>,
    #[allow(dead_code)]
    action: Option<ActionKind>,
    children: Vec<usize>,
    expanded: bool,
    /// Expanded with nothing left to explore below.
    exhausted: bool,
    visits: u32,
    total_reward: f64,
    state: RewardState,
}

struct Search<'e, 'a> {
    engine: &'e FactEngine<'a>,
    embedder: &'e dyn Embedder,
    config: &'e InterpolationConfig,
    target: DataFact,
    target_key: String,
    source_key: String,
    vt: FactVector,
    u: FactVector,
    span: f64,
    nodes: Vec<Node>,
    vectors: HashMap<String, FactVector>,
    rng: ChaCha8Rng,
}

impl Search<'_, '_> {
    fn vector(&mut self, fact: &DataFact, key: &str) -> Result<FactVector, InterpolationError> {
        if let Some(v) = self.vectors.get(key) {
            return Ok(v.clone());
        }
        let v = self.embedder.embed(fact)?;
        if v.dim() != self.vt.dim() {
            return Err(InterpolationError::Dimension {
                expected: self.vt.dim(),
                got: v.dim(),
            });
        }
        self.vectors.insert(key.to_string(), v.clone());
        Ok(v)
    }

    fn on_path(&self, mut node: usize, key: &str) -> bool {
        loop {
            if self.nodes[node].key == key {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Path from the root's first child down to `node`.
    fn path(&self, mut node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(p) = self.nodes[node].parent {
            out.push(node);
            node = p;
        }
        out.reverse();
        out
    }

    fn intermediates(&self, node: usize) -> Vec<usize> {
        self.path(node)
            .into_iter()
            .filter(|&i| self.nodes[i].key != self.target_key && self.nodes[i].key != self.source_key)
            .collect()
    }

    fn close_to_target(&self, v: &FactVector) -> bool {
        distance(v, &self.vt).expect("same dimension") < self.config.lambda_rel * self.span
    }

    fn expand(&mut self, node: usize) -> Result<(), InterpolationError> {
        self.nodes[node].expanded = true;
        let fact = self.nodes[node].fact.clone();
        // the target ends a path
        if self.nodes[node].key == self.target_key {
            return Ok(());
        }
        for kind in applicable_actions(&fact, &self.target) {
            let children = expand_action(
                self.engine,
                &fact,
                kind,
                &self.target,
                self.config.branch_cap,
                &mut self.rng,
            );
            for child in children {
                let key = child.canonical();
                if self.on_path(node, &key)
                    || self.nodes[node]
                        .children
                        .iter()
                        .any(|&c| self.nodes[c].key == key)
                {
                    continue;
                }
                let vector = self.vector(&child, &key)?;
                let state = self.nodes[node].state.step(&vector, &self.u);
                let id = self.nodes.len();
                self.nodes.push(Node {
                    fact: child,
                    key,
                    vector,
                    parent: Some(node),
                    action: Some(kind),
                    children: Vec::new(),
                    expanded: false,
                    exhausted: false,
                    visits: 0,
                    total_reward: 0.0,
                    state,
                });
                self.nodes[node].children.push(id);
            }
        }
        Ok(())
    }

    /// Mark `node` exhausted when it has nothing left below, and carry that
    /// up to ancestors whose children are all exhausted.
    fn settle_exhaustion(&mut self, mut node: usize) {
        loop {
            let n = &self.nodes[node];
            if !n.expanded || !n.children.iter().all(|&c| self.nodes[c].exhausted) {
                return;
            }
            self.nodes[node].exhausted = true;
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return,
            }
        }
    }

    fn open_children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[node]
            .children
            .iter()
            .copied()
            .filter(|&c| !self.nodes[c].exhausted)
    }

    fn select_child(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let unvisited = self
            .open_children(node)
            .filter(|&c| self.nodes[c].visits == 0)
            .min_by(|&a, &b| self.nodes[a].key.cmp(&self.nodes[b].key));
        if let Some(c) = unvisited {
            return c;
        }
        let ln_parent = f64::from(n.visits.max(1)).ln();
        let score = |c: usize| {
            let ch = &self.nodes[c];
            let visits = f64::from(ch.visits);
            ch.total_reward / visits + self.config.exploration_c * (ln_parent / visits).sqrt()
        };
        self.open_children(node)
            .max_by(|&a, &b| {
                score(a)
                    .total_cmp(&score(b))
                    .then_with(|| self.nodes[b].key.cmp(&self.nodes[a].key))
            })
            .expect("children present")
    }

    /// Best normalized reward seen along a random walk from `node`.
    fn simulate(&mut self, node: usize) -> Result<f64, InterpolationError> {
        let mut fact = self.nodes[node].fact.clone();
        let mut state = self.nodes[node].state.clone();
        let mut best = state.reward();
        let mut seen: HashSet<String> = self.path(node).iter().map(|&i| self.nodes[i].key.clone()).collect();
        for _ in 0..self.config.rollout_depth {
            if fact.canonical() == self.target_key {
                break;
            }
            let mut actions = applicable_actions(&fact, &self.target);
            actions.shuffle(&mut self.rng);
            let mut next = None;
            for kind in actions {
                if let Some(c) = random_child(self.engine, &fact, kind, &self.target, &mut self.rng) {
                    if !seen.contains(&c.canonical()) {
                        next = Some(c);
                        break;
                    }
                }
            }
            let Some(child) = next else { break };
            let key = child.canonical();
            let v = self.vector(&child, &key)?;
            state = state.step(&v, &self.u);
            best = best.max(state.reward());
            seen.insert(key);
            fact = child;
            if self.close_to_target(&v) {
                break;
            }
        }
        Ok(best / self.span)
    }

    fn backpropagate(&mut self, mut node: usize, reward: f64) {
        loop {
            let n = &mut self.nodes[node];
            n.visits += 1;
            n.total_reward += reward;
            match n.parent {
                Some(p) => node = p,
                None => break,
            }
        }
    }
}

/// Interpolate with a fresh engine and default data thresholds.
pub fn interpolate(
    dataset: &Dataset,
    fs: &DataFact,
    ft: &DataFact,
    config: &InterpolationConfig,
    embedder: &dyn Embedder,
) -> Result<InterpolationResult, InterpolationError> {
    let engine = FactEngine::new(dataset, DataConfig::default());
    interpolate_with(&engine, fs, ft, config, embedder)
}

pub fn interpolate_with(
    engine: &FactEngine<'_>,
    fs: &DataFact,
    ft: &DataFact,
    config: &InterpolationConfig,
    embedder: &dyn Embedder,
) -> Result<InterpolationResult, InterpolationError> {
    let (search, best, iterations, terminated, mut warnings) = run(engine, fs, ft, config, embedder)?;

    let vs = search.nodes[0].vector.clone();
    let midpoints = compute_midpoints(&vs, &search.vt, config.n)?;
    let (facts, vectors): (Vec<DataFact>, Vec<FactVector>) = match best {
        Some(best) => {
            let (ids, vectors) = matched(&search, best, &midpoints);
            (ids.iter().map(|&i| search.nodes[i].fact.clone()).collect(), vectors)
        }
        None => (Vec::new(), Vec::new()),
    };
    if facts.len() < config.n {
        warnings.push(format!(
            "short-path: found {} of {} intermediate facts",
            facts.len(),
            config.n
        ));
    }
    let best_path_reward = best.map(|b| search.nodes[b].state.reward());
    let rewards = (1..=vectors.len())
        .map(|k| path_reward(&vectors[..k], &vs, &search.vt))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(InterpolationResult {
        facts,
        rewards,
        best_path_reward,
        iterations,
        terminated,
        warnings,
    })
}

type RunOutput<'e, 'a> = (Search<'e, 'a>, Option<usize>, usize, Termination, Vec<String>);

fn run<'e, 'a>(
    engine: &'e FactEngine<'a>,
    fs: &DataFact,
    ft: &DataFact,
    config: &'e InterpolationConfig,
    embedder: &'e dyn Embedder,
) -> Result<RunOutput<'e, 'a>, InterpolationError> {
    config.validate()?;
    let (source_key, target_key) = (fs.canonical(), ft.canonical());
    if source_key == target_key {
        return Err(InterpolationError::DegenerateKeyframes);
    }
    for f in [fs, ft] {
        let report = engine.validate(f);
        if !report.valid {
            return Err(InterpolationError::InvalidKeyframe(report));
        }
    }
    let vs = embedder.embed(fs)?;
    let vt = embedder.embed(ft)?;
    if vs.dim() != vt.dim() {
        return Err(InterpolationError::Dimension {
            expected: vs.dim(),
            got: vt.dim(),
        });
    }
    let (u, span) = match unit_direction(&vs, &vt) {
        Ok(x) => x,
        Err(InterpolationError::DegenerateDirection) => {
            return Err(InterpolationError::DegenerateKeyframes)
        }
        Err(e) => return Err(e),
    };

    let mut search = Search {
        engine,
        embedder,
        config,
        target: ft.clone(),
        target_key,
        source_key: source_key.clone(),
        vt,
        u,
        span,
        nodes: vec![Node {
            fact: fs.clone(),
            key: source_key,
            vector: vs.clone(),
            parent: None,
            action: None,
            children: Vec::new(),
            expanded: false,
            exhausted: false,
            visits: 0,
            total_reward: 0.0,
            state: RewardState::start(&vs),
        }],
        vectors: HashMap::new(),
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
    };

    let started = Instant::now();
    let budget = Duration::from_millis(config.time_budget_ms);
    let mut iterations = 0;
    let mut terminated = Termination::BudgetExhausted;
    let mut warnings = Vec::new();

    while iterations < config.max_iterations {
        if started.elapsed() >= budget {
            warnings.push(format!("time budget exhausted after {iterations} iterations"));
            break;
        }
        iterations += 1;

        if search.nodes[0].exhausted {
            if search.nodes[0].children.is_empty() {
                warnings.push("no valid action leads away from the first keyframe".into());
            }
            break;
        }
        let mut node = 0;
        while search.nodes[node].expanded && !search.nodes[node].exhausted {
            node = search.select_child(node);
        }
        if !search.nodes[node].expanded {
            search.expand(node)?;
            if search.open_children(node).next().is_some() {
                node = search.select_child(node);
            }
        }
        search.settle_exhaustion(node);
        if node == 0 {
            continue;
        }
        let reached = search.close_to_target(&search.nodes[node].vector)
            && search.intermediates(node).len() >= config.n;
        let reward = search.simulate(node)?;
        search.backpropagate(node, reward);
        if reached {
            terminated = Termination::ReachedLambda;
            break;
        }
    }

    let best = best_path(&search, config.n);
    Ok((search, best, iterations, terminated, warnings))
}

/// Facts of the path ending at `node` assigned to `midpoints`, with their
/// vectors.
fn matched(search: &Search<'_, '_>, node: usize, midpoints: &[FactVector]) -> (Vec<usize>, Vec<FactVector>) {
    let nodes = search.intermediates(node);
    let vectors: Vec<FactVector> = nodes.iter().map(|&i| search.nodes[i].vector.clone()).collect();
    let picks = monotone_match(&vectors, midpoints);
    (
        picks.iter().map(|&k| nodes[k]).collect(),
        picks.iter().map(|&k| vectors[k].clone()).collect(),
    )
}

/// The node ending the highest-reward path among paths long enough to
/// supply `n` facts (the longest paths when none is). Ties go to the
/// canonically smallest end fact.
fn best_path(search: &Search<'_, '_>, n: usize) -> Option<usize> {
    let lengths: Vec<(usize, usize)> = (1..search.nodes.len())
        .map(|i| (i, search.intermediates(i).len()))
        .collect();
    let longest = lengths.iter().map(|c| c.1).max()?;
    if longest == 0 {
        return None;
    }
    let need = n.min(longest);
    lengths
        .into_iter()
        .filter(|c| c.1 >= need)
        .map(|(i, _)| (i, search.nodes[i].state.reward()))
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| search.nodes[b.0].key.cmp(&search.nodes[a.0].key))
        })
        .map(|c| c.0)
}

/// Candidates to replace the fact between `prev` and `next`: every distinct
/// fact on the best search path, by cosine to the midpoint, best first.
/// `significance` is the cosine mapped to `[0, 1]`.
pub fn recommend_alternatives(
    dataset: &Dataset,
    prev: &DataFact,
    next: &DataFact,
    config: &InterpolationConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredFact>, InterpolationError> {
    let engine = FactEngine::new(dataset, DataConfig::default());
    recommend_alternatives_with(&engine, prev, next, config, embedder)
}

pub fn recommend_alternatives_with(
    engine: &FactEngine<'_>,
    prev: &DataFact,
    next: &DataFact,
    config: &InterpolationConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredFact>, InterpolationError> {
    let single = InterpolationConfig {
        n: 1,
        ..config.clone()
    };
    let (search, best, ..) = run(engine, prev, next, &single, embedder)?;
    let mid = search.nodes[0].vector.lerp(&search.vt, 0.5);
    let mut out: Vec<(f64, String, DataFact)> = Vec::new();
    if let Some(best) = best {
        for i in search.intermediates(best) {
            let node = &search.nodes[i];
            let cos = cosine_similarity(&node.vector, &mid).unwrap_or(-1.0);
            out.push((cos, node.key.clone(), node.fact.clone()));
        }
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    out.dedup_by(|a, b| a.1 == b.1);
    Ok(out
        .into_iter()
        .map(|(cos, _, fact)| ScoredFact {
            fact,
            significance: ((1.0 + cos) / 2.0).clamp(0.0, 1.0),
        })
        .collect())
}
