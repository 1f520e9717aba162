//! Grid benchmark: mobile units service requests that spawn at random
//! cells, trading service against energy use and unit collisions.
//!
//! One step runs in a fixed order: all units move simultaneously (moves into
//! a wall are clamped but still pay `energy_move`), collisions are counted
//! pairwise on the post-move positions, requests under any unit are served,
//! remaining deadlines tick down and expire at zero, and finally a new
//! request may spawn on a cell holding neither a unit nor a request.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Binding;

/// Variable names exposed to reward components, in slot order.
pub const FEATURE_SCHEMA: [&str; 6] = [
    "served_now",
    "energy_step",
    "collision_now",
    "dist_to_nearest_request",
    "requests_active",
    "step_idx",
];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid env config: {0}")]
    InvalidConfig(String),
    #[error("episode finished after {0} steps")]
    EpisodeFinished(u32),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_size: u32,
    pub num_units: u32,
    pub horizon: u32,
    pub spawn_prob: f64,
    pub request_deadline: u32,
    pub energy_move: f64,
    pub energy_idle: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 12,
            num_units: 2,
            horizon: 100,
            spawn_prob: 0.15,
            request_deadline: 25,
            energy_move: 1.0,
            energy_idle: 0.1,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.grid_size < 4 {
            return fail(format!("grid_size must be >= 4, got {}", self.grid_size));
        }
        if self.num_units < 1 {
            return fail("num_units must be >= 1".into());
        }
        if u64::from(self.num_units) > u64::from(self.grid_size) * u64::from(self.grid_size) {
            return fail(format!(
                "cannot place {} units on distinct cells of a {}x{} grid",
                self.num_units, self.grid_size, self.grid_size
            ));
        }
        if self.horizon < 1 {
            return fail("horizon must be >= 1".into());
        }
        if self.request_deadline < 1 {
            return fail("request_deadline must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return fail(format!("spawn_prob must be in [0, 1], got {}", self.spawn_prob));
        }
        if !(self.energy_idle >= 0.0 && self.energy_move >= self.energy_idle && self.energy_move.is_finite()) {
            return fail("need energy_move >= energy_idle >= 0".into());
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stay,
    N,
    S,
    E,
    W,
}

impl Action {
    /// Index order doubles as the greedy tie-break order.
    pub const ALL: [Action; 5] = [Action::Stay, Action::N, Action::S, Action::E, Action::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub cell: Cell,
    /// Steps left; always >= 1 while the request is active.
    pub deadline: u32,
}

/// Per-step features, the variable schema reward components are written in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFeatures {
    pub served_now: f64,
    pub energy_step: f64,
    pub collision_now: f64,
    pub dist_to_nearest_request: f64,
    pub requests_active: f64,
    pub step_idx: f64,
}

impl StepFeatures {
    /// Values in [`FEATURE_SCHEMA`] order.
    pub fn slots(&self) -> [f64; 6] {
        [
            self.served_now,
            self.energy_step,
            self.collision_now,
            self.dist_to_nearest_request,
            self.requests_active,
            self.step_idx,
        ]
    }

    pub fn to_binding(&self) -> Binding {
        FEATURE_SCHEMA
            .iter()
            .zip(self.slots())
            .fold(Binding::new(), |b, (name, v)| b.with(*name, v))
    }
}

/// One step of an episode trace: features plus the spawn/expiry events that
/// metrics are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub features: StepFeatures,
    pub spawned: bool,
    pub expired: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub service_rate: f64,
    pub energy_total: f64,
    pub violations: f64,
}

impl Metrics {
    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len() as f64;
        Metrics {
            service_rate: all.iter().map(|m| m.service_rate).sum::<f64>() / n,
            energy_total: all.iter().map(|m| m.energy_total).sum::<f64>() / n,
            violations: all.iter().map(|m| m.violations).sum::<f64>() / n,
        }
    }
}

/// Episode metrics. An episode with no spawned requests has service rate 1.
pub fn compute_metrics(trace: &[StepRecord]) -> Metrics {
    let spawned = trace.iter().filter(|r| r.spawned).count() as f64;
    let served: f64 = trace.iter().map(|r| r.features.served_now).sum();
    Metrics {
        service_rate: if spawned == 0.0 { 1.0 } else { served / spawned },
        energy_total: trace.iter().map(|r| r.features.energy_step).sum(),
        violations: trace.iter().map(|r| r.features.collision_now).sum(),
    }
}

#[derive(Debug, Clone)]
pub struct EnvState {
    config: EnvConfig,
    units: Vec<Cell>,
    requests: Vec<Request>,
    step: u32,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Places units on distinct cells drawn from `config.seed`.
    pub fn reset(config: &EnvConfig) -> Result<EnvState, EnvError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let side = config.grid_size as usize;
        let units = sample(&mut rng, side * side, config.num_units as usize)
            .into_iter()
            .map(|i| Cell {
                x: (i % side) as i32,
                y: (i / side) as i32,
            })
            .collect();
        Ok(EnvState {
            config: *config,
            units,
            requests: Vec::new(),
            step: 0,
            rng,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn units(&self) -> &[Cell] {
        &self.units
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.horizon
    }

    pub fn nearest_request(&self, from: Cell) -> Option<Cell> {
        self.requests
            .iter()
            .map(|r| r.cell)
            .min_by_key(|c| (from.manhattan(*c), c.y, c.x))
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepRecord, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeFinished(self.step));
        }
        if actions.len() != self.units.len() {
            return Err(EnvError::ActionCount {
                expected: self.units.len(),
                got: actions.len(),
            });
        }
        let max = self.config.grid_size as i32 - 1;
        let mut energy = 0.0;
        for (unit, action) in self.units.iter_mut().zip(actions) {
            let (dx, dy) = match action {
                Action::N => (0, -1),
                Action::S => (0, 1),
                Action::E => (1, 0),
                Action::W => (-1, 0),
                Action::Stay => (0, 0),
            };
            unit.x = (unit.x + dx).clamp(0, max);
            unit.y = (unit.y + dy).clamp(0, max);
            energy += if *action == Action::Stay {
                self.config.energy_idle
            } else {
                self.config.energy_move
            };
        }

        let mut collisions = 0u32;
        for i in 0..self.units.len() {
            for j in i + 1..self.units.len() {
                if self.units[i] == self.units[j] {
                    collisions += 1;
                }
            }
        }

        let before = self.requests.len();
        let units = &self.units;
        self.requests.retain(|r| !units.contains(&r.cell));
        let served = before - self.requests.len();

        let mut expired = 0;
        self.requests.retain_mut(|r| {
            r.deadline -= 1;
            if r.deadline == 0 {
                expired += 1;
            }
            r.deadline > 0
        });

        let mut spawned = false;
        if self.rng.gen_bool(self.config.spawn_prob) {
            let side = self.config.grid_size as i32;
            let free: Vec<Cell> = (0..side * side)
                .map(|i| Cell { x: i % side, y: i / side })
                .filter(|c| !self.units.contains(c) && !self.requests.iter().any(|r| r.cell == *c))
                .collect();
            if !free.is_empty() {
                let cell = free[self.rng.gen_range(0..free.len())];
                self.requests.push(Request {
                    cell,
                    deadline: self.config.request_deadline,
                });
                spawned = true;
            }
        }

        let step_idx = self.step;
        self.step += 1;
        Ok(StepRecord {
            features: StepFeatures {
                served_now: served as f64,
                energy_step: energy,
                collision_now: f64::from(collisions),
                dist_to_nearest_request: self.mean_nearest_distance(),
                requests_active: self.requests.len() as f64,
                step_idx: f64::from(step_idx),
            },
            spawned,
            expired,
        })
    }

    fn mean_nearest_distance(&self) -> f64 {
        if self.requests.is_empty() {
            return f64::from(self.config.grid_size * 2);
        }
        let total: i32 = self
            .units
            .iter()
            .map(|u| self.requests.iter().map(|r| u.manhattan(r.cell)).min().unwrap_or(0))
            .sum();
        f64::from(total) / self.units.len() as f64
    }
}

/// Runs one episode choosing every unit's action uniformly at random.
pub fn random_episode(config: &EnvConfig, policy_seed: u64) -> Result<Vec<StepRecord>, EnvError> {
    let mut state = EnvState::reset(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
    let mut trace = Vec::with_capacity(config.horizon as usize);
    let mut actions = vec![Action::Stay; config.num_units as usize];
    while !state.is_done() {
        for a in actions.iter_mut() {
            *a = Action::from_index(rng.gen_range(0..Action::ALL.len()));
        }
        trace.push(state.step(&actions)?);
    }
    Ok(trace)
}

/// Writes a trace as CSV: one row per step, one column per schema variable.
pub fn write_trace_csv(trace: &[StepRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", FEATURE_SCHEMA.join(","))?;
    for record in trace {
        let row: Vec<String> = record.features.slots().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
