//! Run configuration: schema, defaults, cross-reference validation and seed
//! resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::dsl::{Binding, ComponentDef, ProbePair};
use crate::env::{EnvConfig, FEATURE_SCHEMA};
use crate::proposer::LlmSettings;
use crate::requirements::{default_requirements, RequirementSpec};
use crate::search::SearchMode;
use crate::seed::derive_seed;
use crate::trainer::TrainConfig;
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    #[default]
    Scripted,
    Llm,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub kind: ProposerKind,
    pub endpoint: Option<String>,
    pub llm: LlmSettings,
    /// Transcript to replay; defaults to the run directory's own.
    pub transcript: Option<PathBuf>,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            kind: ProposerKind::Scripted,
            endpoint: None,
            llm: LlmSettings::default(),
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub k: usize,
    /// Proposer-driven generations allowed after the initial one.
    pub cap: u32,
    pub mode: SearchMode,
    pub tla: bool,
    /// Scale-balanced initialization; false draws log-uniform weights.
    pub balanced: bool,
    /// Multiplier applied to the energy component's weight after
    /// initialization; 1 leaves the weights alone.
    pub perturb_factor: f64,
    /// Random-policy episodes used to measure component scales.
    pub scale_episodes: u32,
    /// Explicit initial groups; replaces initialization when present.
    pub initial_weights: Option<Vec<WeightVector>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 5,
            cap: 30,
            mode: SearchMode::Erfsl,
            tla: true,
            balanced: true,
            perturb_factor: 1.0,
            scale_episodes: 50,
            initial_weights: None,
        }
    }
}

pub const DEFAULT_DESCRIPTION: &str = "Mobile units move on a square grid (actions: stay, north, south, east, \
west) and serve requests that appear at random empty cells and expire after a deadline. A request is served \
when a unit stands on its cell. Every move costs energy, staying costs less. Two units on the same cell is a \
collision. Objectives: serve a large fraction of requests, keep total energy low, never collide.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub env_description: String,
    pub env: EnvConfig,
    pub requirements: Vec<RequirementSpec>,
    pub components: Vec<ComponentDef>,
    /// Probe pairs per requirement id.
    pub probes: BTreeMap<String, Vec<ProbePair>>,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub proposer: ProposerConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env_description: DEFAULT_DESCRIPTION.into(),
            env: EnvConfig::default(),
            requirements: default_requirements(),
            components: default_components(),
            probes: default_probes(),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            proposer: ProposerConfig::default(),
            output_dir: None,
        }
    }
}

/// The three hand-written components of the default task.
pub fn default_components() -> Vec<ComponentDef> {
    vec![
        ComponentDef::new("service", "service", "served_now", "requests served this step"),
        ComponentDef::new("ec", "energy", "-energy_step", "energy spent this step, negated"),
        ComponentDef::new("collision", "safety", "-collision_now", "collisions this step, negated"),
    ]
}

/// A neutral binding of every schema variable, so probes only need to state
/// what differs.
pub fn probe_base() -> Binding {
    Binding::from([
        ("served_now", 0.0),
        ("energy_step", 0.2),
        ("collision_now", 0.0),
        ("dist_to_nearest_request", 5.0),
        ("requests_active", 0.0),
        ("step_idx", 10.0),
    ])
}

fn probe(var: &str, good: f64, bad: f64) -> ProbePair {
    ProbePair {
        good: probe_base().with(var, good),
        bad: probe_base().with(var, bad),
    }
}

pub fn default_probes() -> BTreeMap<String, Vec<ProbePair>> {
    BTreeMap::from([
        ("service".to_string(), vec![probe("served_now", 1.0, 0.0), probe("served_now", 2.0, 1.0)]),
        ("energy".to_string(), vec![probe("energy_step", 0.2, 2.0), probe("energy_step", 0.0, 1.0)]),
        ("safety".to_string(), vec![probe("collision_now", 0.0, 1.0)]),
    ])
}

pub fn schema() -> BTreeSet<String> {
    FEATURE_SCHEMA.iter().map(|s| s.to_string()).collect()
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self, OrchestratorError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| OrchestratorError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Schema invariants and cross-references between requirements,
    /// components, probes and weights.
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        self.env.validate().map_err(|e| invalid("env", e.to_string()))?;
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        if self.train.episodes < 1 {
            return Err(invalid("train.episodes", "must be >= 1"));
        }

        let mut req_ids = BTreeSet::new();
        for (i, r) in self.requirements.iter().enumerate() {
            r.validate().map_err(|e| invalid(format!("requirements[{i}]"), e.to_string()))?;
            if !req_ids.insert(r.id.as_str()) {
                return Err(invalid(format!("requirements[{i}].id"), format!("duplicate id '{}'", r.id)));
            }
        }
        if self.requirements.is_empty() {
            return Err(invalid("requirements", "at least one requirement is needed"));
        }

        let mut names = BTreeSet::new();
        for (i, c) in self.components.iter().enumerate() {
            if !is_identifier(&c.name) {
                return Err(invalid(format!("components[{i}].name"), format!("'{}' is not an identifier", c.name)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(invalid(format!("components[{i}].name"), format!("duplicate name '{}'", c.name)));
            }
            if !req_ids.contains(c.requirement_id.as_str()) {
                return Err(invalid(
                    format!("components[{i}].requirement_id"),
                    format!("unknown requirement '{}'", c.requirement_id),
                ));
            }
        }
        if self.components.is_empty() {
            return Err(invalid("components", "at least one component is needed"));
        }
        for id in self.probes.keys() {
            if !req_ids.contains(id.as_str()) {
                return Err(invalid(format!("probes.{id}"), "unknown requirement"));
            }
        }

        let s = &self.search;
        if s.k < 1 {
            return Err(invalid("search.k", "k must be >= 1"));
        }
        if s.cap < 1 {
            return Err(invalid("search.cap", "cap must be >= 1"));
        }
        if !(s.perturb_factor.is_finite() && s.perturb_factor > 0.0) {
            return Err(invalid("search.perturb_factor", "must be finite and positive"));
        }
        if s.scale_episodes < 1 {
            return Err(invalid("search.scale_episodes", "must be >= 1"));
        }
        if let Some(initial) = &s.initial_weights {
            if initial.len() != s.k {
                return Err(invalid(
                    "search.initial_weights",
                    format!("{} groups given, k is {}", initial.len(), s.k),
                ));
            }
            for (i, w) in initial.iter().enumerate() {
                let keys: BTreeSet<&str> = w.names().collect();
                if keys != names {
                    return Err(invalid(
                        format!("search.initial_weights[{i}]"),
                        "weights must name exactly the components",
                    ));
                }
                if let Some((n, v)) = w.0.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(invalid(format!("search.initial_weights[{i}].{n}"), format!("{v} is not positive")));
                }
            }
        }
        if self.proposer.kind == ProposerKind::Llm && self.proposer.endpoint.is_none() {
            return Err(invalid("proposer.endpoint", "the llm proposer needs an endpoint"));
        }
        Ok(())
    }

    /// Copy with every derived seed filled in from the master seed.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        out.env.seed = derive_seed(self.seed, "env");
        out.train.seed = derive_seed(self.seed, "train");
        out
    }

    pub fn probes_for(&self, requirement_id: &str) -> &[ProbePair] {
        self.probes.get(requirement_id).map_or(&[], Vec::as_slice)
    }
}
