//! Weight search: scale-balanced initialization, directional mutation,
//! crossover, the Pareto archive and the generation loop.

mod archive;
mod generation;
mod group;
mod init;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{dominates, ArchiveEntry, ParetoArchive};
pub use generation::{assemble_generation, group_id, DEDUPE_FINE_TUNE, DEDUPE_RETRIES};
pub use group::{crossover, crossover_with, mutate, AdjustmentDirective, Direction, Provenance, Sign, WeightGroup, FINE_TUNE_MAX};
pub use init::{init_weights_rwi, initial_group_id, measure_component_scales, scale_spread, EMPHASIS, SCALE_FLOOR};
pub use run::{
    max_ratio, run_search, GenerationRecord, HistoryEntry, NullSink, SearchOutcome, SearchProblem, SearchResult,
    SearchSettings, SearchSink,
};

use crate::dsl::RewardComponent;
use crate::proposer::ProposerError;
use crate::requirements::{Metric, RequirementSpec};
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid directive: {0}")]
    InvalidDirective(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("invalid search settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error("persistence failed: {0}")]
    Persist(String),
    #[error("cannot resume: {0}")]
    Resume(String),
}

/// Which stage-two shape the proposer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Directives, then mutation and crossover.
    #[default]
    #[serde(alias = "erfsl")]
    Erfsl,
    /// K full weight vectors straight from the proposer.
    #[serde(rename = "eureka_m", alias = "eureka-m")]
    EurekaM,
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Erfsl => "erfsl",
            SearchMode::EurekaM => "eureka_m",
        })
    }
}

/// Name of the first component bound to a requirement on `metric`.
pub fn component_for_metric<'a>(
    components: &'a [RewardComponent],
    requirements: &[RequirementSpec],
    metric: Metric,
) -> Option<&'a str> {
    requirements
        .iter()
        .filter(|r| r.metric == metric)
        .find_map(|r| components.iter().find(|c| c.requirement_id == r.id))
        .map(|c| c.name.as_str())
}

/// Name of the component bound to requirement `id`.
pub fn component_for_requirement<'a>(components: &'a [RewardComponent], id: &str) -> Option<&'a str> {
    components.iter().find(|c| c.requirement_id == id).map(|c| c.name.as_str())
}
