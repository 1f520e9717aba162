//! Seeded tabular Q-learning against a weighted sum of reward components.
//!
//! Each unit owns an action-value table keyed by a quantized local
//! observation; all units learn from the same scalar step reward.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{CompiledExpr, EvalError, RewardComponent};
use crate::env::{compute_metrics, Action, Cell, EnvConfig, EnvError, EnvState, Metrics, StepRecord, FEATURE_SCHEMA};
use crate::seed::derive_seed;
use crate::weights::WeightVector;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("component '{component}' failed to evaluate: {source}")]
    ComponentEvalFault { component: String, source: EvalError },
    #[error("weights do not match components: {0}")]
    WeightMismatch(String),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: u32,
    pub eval_episodes: u32,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 600,
            eval_episodes: 20,
            learning_rate: 0.2,
            discount: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return fail("discount must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return fail("epsilon must be in [0, 1]");
        }
        if self.eval_episodes < 1 {
            return fail("eval_episodes must be >= 1");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` at the first episode to
    /// `epsilon_end` at the last.
    pub fn epsilon(&self, episode: u32) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let t = f64::from(episode) / f64::from(self.episodes - 1);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// Distance bucket edges (inclusive upper bounds) for the nearest request.
const NEAR: i32 = 3;
const MID: i32 = 8;
/// Another unit within this Manhattan distance is visible to the observer.
const NEIGHBOR_RANGE: i32 = 2;

/// Number of request codes: 9 sign pairs x 3 buckets, plus "no request".
const REQUEST_CODES: usize = 9 * 3 + 1;
/// Co-located, four dominant-axis directions, or nobody nearby.
const NEIGHBOR_CODES: usize = 6;

fn sign_code(d: i32) -> usize {
    (d.signum() + 1) as usize
}

/// Quantized local observation of one unit.
pub fn observe(state: &EnvState, unit: usize) -> usize {
    let me = state.units()[unit];
    let request = match state.nearest_request(me) {
        None => REQUEST_CODES - 1,
        Some(target) => {
            let dist = me.manhattan(target);
            let bucket = if dist <= NEAR {
                0
            } else if dist <= MID {
                1
            } else {
                2
            };
            (sign_code(target.x - me.x) * 3 + sign_code(target.y - me.y)) * 3 + bucket
        }
    };
    let neighbor = nearest_other(state.units(), unit)
        .filter(|other| me.manhattan(*other) <= NEIGHBOR_RANGE)
        .map_or(NEIGHBOR_CODES - 1, |other| {
            let (dx, dy) = (other.x - me.x, other.y - me.y);
            if dx == 0 && dy == 0 {
                0
            } else if dx.abs() >= dy.abs() {
                1 + sign_code(dx) / 2
            } else {
                3 + sign_code(dy) / 2
            }
        });
    request * NEIGHBOR_CODES + neighbor
}

fn nearest_other(units: &[Cell], me: usize) -> Option<Cell> {
    units
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != me)
        .map(|(_, c)| *c)
        .min_by_key(|c| (units[me].manhattan(*c), c.y, c.x))
}

pub const OBSERVATION_COUNT: usize = REQUEST_CODES * NEIGHBOR_CODES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// `tables[unit][observation][action]`.
    pub tables: Vec<Vec<[f64; 5]>>,
}

impl Policy {
    pub fn zeros(num_units: usize) -> Self {
        Policy {
            tables: vec![vec![[0.0; 5]; OBSERVATION_COUNT]; num_units],
        }
    }

    /// Greedy action; ties go to the lowest action index.
    pub fn greedy(&self, unit: usize, obs: usize) -> Action {
        let row = &self.tables[unit][obs];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        Action::from_index(best)
    }

    fn greedy_actions(&self, state: &EnvState, out: &mut [Action]) {
        for (unit, slot) in out.iter_mut().enumerate() {
            *slot = self.greedy(unit, observe(state, unit));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub raw: BTreeMap<String, f64>,
    pub weighted: BTreeMap<String, f64>,
    pub total_return: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub components: Vec<String>,
    pub weights: WeightVector,
    pub episodes: Vec<EpisodeLog>,
    pub eval: Metrics,
    pub train_seed: u64,
    pub env_seed: u64,
}

/// Components compiled against the feature schema, paired with weights.
pub struct RewardModel {
    names: Vec<String>,
    programs: Vec<CompiledExpr>,
    weights: Vec<f64>,
}

impl RewardModel {
    /// Weights must be finite and non-negative and cover exactly the
    /// component names.
    pub fn new(components: &[RewardComponent], weights: &WeightVector) -> Result<Self, TrainError> {
        let mut names = Vec::new();
        let mut programs = Vec::new();
        let mut ws = Vec::new();
        for c in components {
            let w = weights
                .get(&c.name)
                .ok_or_else(|| TrainError::WeightMismatch(format!("no weight for component '{}'", c.name)))?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(TrainError::WeightMismatch(format!("weight for '{}' is {w}", c.name)));
            }
            let program = CompiledExpr::for_schema(&c.expr, &FEATURE_SCHEMA).map_err(|source| {
                TrainError::ComponentEvalFault {
                    component: c.name.clone(),
                    source,
                }
            })?;
            names.push(c.name.clone());
            programs.push(program);
            ws.push(w);
        }
        if let Some(extra) = weights.names().find(|n| !names.iter().any(|c| c == n)) {
            return Err(TrainError::WeightMismatch(format!("weight '{extra}' has no component")));
        }
        Ok(RewardModel {
            names,
            programs,
            weights: ws,
        })
    }

    /// Raw component values for one step, in component order.
    pub fn component_values(&self, record: &StepRecord, out: &mut [f64]) -> Result<(), TrainError> {
        let slots = record.features.slots();
        for ((program, name), slot) in self.programs.iter().zip(&self.names).zip(out.iter_mut()) {
            *slot = program.eval(&slots).map_err(|source| TrainError::ComponentEvalFault {
                component: name.clone(),
                source,
            })?;
        }
        Ok(())
    }

    /// `sum_i w_i * value_i`, accumulated in component order.
    pub fn reward(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Trains one policy and returns it with the per-episode log.
pub fn train(
    env: &EnvConfig,
    components: &[RewardComponent],
    weights: &WeightVector,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainingLog), TrainError> {
    cfg.validate()?;
    env.validate()?;
    let model = RewardModel::new(components, weights)?;
    let units = env.num_units as usize;
    let mut policy = Policy::zeros(units);
    let mut explore = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "explore"));
    let mut values = vec![0.0; components.len()];
    let mut obs = vec![0usize; units];
    let mut next_obs = vec![0usize; units];
    let mut actions = vec![Action::Stay; units];
    let mut episodes = Vec::with_capacity(cfg.episodes as usize);

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        let episode_env = env.with_seed(derive_seed(env.seed, &format!("train/{episode}")));
        let mut state = EnvState::reset(&episode_env)?;
        let mut raw = vec![0.0; components.len()];
        let mut total_return = 0.0;
        let mut trace = Vec::with_capacity(env.horizon as usize);
        for (u, o) in obs.iter_mut().enumerate() {
            *o = observe(&state, u);
        }
        while !state.is_done() {
            for (u, slot) in actions.iter_mut().enumerate() {
                *slot = if explore.gen_bool(epsilon) {
                    Action::from_index(explore.gen_range(0..Action::ALL.len()))
                } else {
                    policy.greedy(u, obs[u])
                };
            }
            let record = state.step(&actions)?;
            model.component_values(&record, &mut values)?;
            let reward = model.reward(&values);
            for (acc, v) in raw.iter_mut().zip(&values) {
                *acc += v;
            }
            total_return += reward;
            trace.push(record);

            let terminal = state.is_done();
            for u in 0..units {
                next_obs[u] = observe(&state, u);
                let bootstrap = if terminal {
                    0.0
                } else {
                    policy.tables[u][next_obs[u]].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let q = &mut policy.tables[u][obs[u]][actions[u].index()];
                *q += cfg.learning_rate * (reward + cfg.discount * bootstrap - *q);
            }
            std::mem::swap(&mut obs, &mut next_obs);
        }
        episodes.push(EpisodeLog {
            weighted: model
                .names
                .iter()
                .zip(&model.weights)
                .zip(&raw)
                .map(|((n, w), r)| (n.clone(), w * r))
                .collect(),
            raw: model.names.iter().cloned().zip(raw).collect(),
            total_return,
            metrics: compute_metrics(&trace),
        });
    }

    let eval = evaluate_policy(&policy, env, cfg.eval_episodes, derive_seed(cfg.seed, "eval"))?;
    let log = TrainingLog {
        components: model.names.clone(),
        weights: weights.clone(),
        episodes,
        eval,
        train_seed: cfg.seed,
        env_seed: env.seed,
    };
    Ok((policy, log))
}

/// Seed of the `index`-th evaluation episode.
pub fn eval_episode_seed(seed: u64, index: u32) -> u64 {
    derive_seed(seed, &format!("eval/{index}"))
}

/// Runs one greedy episode and returns its trace.
pub fn greedy_episode(policy: &Policy, env: &EnvConfig) -> Result<Vec<StepRecord>, TrainError> {
    let mut state = EnvState::reset(env)?;
    let mut actions = vec![Action::Stay; env.num_units as usize];
    let mut trace = Vec::with_capacity(env.horizon as usize);
    while !state.is_done() {
        policy.greedy_actions(&state, &mut actions);
        trace.push(state.step(&actions)?);
    }
    Ok(trace)
}

/// Mean metrics over `n` greedy episodes with seeds from [`eval_episode_seed`].
pub fn evaluate_policy(policy: &Policy, env: &EnvConfig, n: u32, seed: u64) -> Result<Metrics, TrainError> {
    if n == 0 {
        return Err(TrainError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let per_episode = (0..n)
        .map(|i| greedy_episode(policy, &env.with_seed(eval_episode_seed(seed, i))).map(|t| compute_metrics(&t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Metrics::mean(&per_episode))
}

/// Step rewards for a fixed action sequence, without learning.
pub fn replay_rewards(
    env: &EnvConfig,
    components: &[RewardComponent],
    weights: &WeightVector,
    actions: &[Vec<Action>],
) -> Result<Vec<f64>, TrainError> {
    let model = RewardModel::new(components, weights)?;
    let mut state = EnvState::reset(env)?;
    let mut values = vec![0.0; components.len()];
    actions
        .iter()
        .map(|step_actions| {
            let record = state.step(step_actions)?;
            model.component_values(&record, &mut values)?;
            Ok(model.reward(&values))
        })
        .collect()
}
