//! The generation loop: train, analyze, archive, persist, propose.

use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::ParetoArchive;
use super::generation::{assemble_generation, group_id};
use super::group::{AdjustmentDirective, Provenance, WeightGroup};
use super::{component_for_metric, SearchError, SearchMode};
use crate::analyzer::{analyze, render_text, LogSummary, RenderMode};
use crate::dsl::RewardComponent;
use crate::env::EnvConfig;
use crate::proposer::{Proposal, Proposer, ProposerContext};
use crate::requirements::{Metric, RequirementSpec};
use crate::seed::derive_seed;
use crate::trainer::{train, TrainConfig, TrainingLog};

/// Everything fixed for the duration of one search.
#[derive(Debug, Clone)]
pub struct SearchProblem {
    pub env: EnvConfig,
    pub components: Vec<RewardComponent>,
    pub requirements: Vec<RequirementSpec>,
    pub train: TrainConfig,
    pub env_description: String,
}

impl SearchProblem {
    pub fn service_component(&self) -> Option<&str> {
        component_for_metric(&self.components, &self.requirements, Metric::ServiceRate)
    }

    pub fn energy_component(&self) -> Option<&str> {
        component_for_metric(&self.components, &self.requirements, Metric::EnergyTotal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub k: usize,
    /// Maximum number of proposer-driven generations after the initial one.
    pub cap: u32,
    pub mode: SearchMode,
    /// Full analyzer text when true, raw metrics only when false.
    pub tla: bool,
    pub seed: u64,
    /// Halt after this many generations are committed, as if interrupted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after: Option<u32>,
}

impl SearchSettings {
    pub fn render_mode(&self) -> RenderMode {
        if self.tla {
            RenderMode::Full
        } else {
            RenderMode::RawOnly
        }
    }
}

/// One committed generation. Directives and suggestions are the proposer
/// output that produced this generation; both are empty for generation 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub groups: Vec<WeightGroup>,
    pub directives: Vec<AdjustmentDirective>,
    pub suggestions: String,
    pub logs: Vec<TrainingLog>,
    pub summaries: Vec<LogSummary>,
    pub max_ratio: Option<f64>,
    pub passing: Vec<String>,
}

impl GenerationRecord {
    /// Per-group prompt text in the given mode.
    pub fn group_texts(&self, mode: RenderMode) -> Vec<String> {
        self.groups
            .iter()
            .zip(&self.summaries)
            .map(|(g, s)| group_text(g, s, mode))
            .collect()
    }

    /// All group texts, as stored next to the generation.
    pub fn summary_text(&self, mode: RenderMode) -> String {
        let mut out = format!("generation {}\n", self.generation);
        for text in self.group_texts(mode) {
            out.push('\n');
            out.push_str(&text);
        }
        out
    }

    /// Best margin per requirement across the generation.
    pub fn best_margins(&self) -> Vec<(String, f64)> {
        let Some(first) = self.summaries.first() else {
            return Vec::new();
        };
        first
            .requirements
            .iter()
            .map(|r| {
                let best = self
                    .summaries
                    .iter()
                    .filter_map(|s| s.requirement(&r.id))
                    .map(|s| s.margin)
                    .fold(f64::NEG_INFINITY, f64::max);
                (r.id.clone(), best)
            })
            .collect()
    }
}

pub fn group_text(group: &WeightGroup, summary: &LogSummary, mode: RenderMode) -> String {
    let mut out = String::new();
    let _ = write!(out, "group {} weights:", group.id);
    for (name, w) in &group.weights.0 {
        let _ = write!(out, " {name}={w:.6}");
    }
    out.push('\n');
    out.push_str(&render_text(summary, mode));
    out
}

/// Compact record of an earlier generation for the proposer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub generation: u32,
    pub directives: Vec<AdjustmentDirective>,
    pub best_margins: Vec<(String, f64)>,
    pub passing: usize,
}

impl HistoryEntry {
    fn from_record(r: &GenerationRecord) -> Self {
        HistoryEntry {
            generation: r.generation,
            directives: r.directives.clone(),
            best_margins: r.best_margins(),
            passing: r.passing.len(),
        }
    }
}

/// Receives each generation once it is complete, before the next starts.
pub trait SearchSink {
    fn commit(&mut self, record: &GenerationRecord, archive: &ParetoArchive) -> Result<(), SearchError>;
}

/// Discards everything.
pub struct NullSink;

impl SearchSink for NullSink {
    fn commit(&mut self, _: &GenerationRecord, _: &ParetoArchive) -> Result<(), SearchError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub success: bool,
    /// First generation with a group meeting every requirement; 0 when the
    /// initial generation already does.
    pub iterations_to_success: Option<u32>,
    pub generations_run: u32,
    /// Largest service-to-energy weight ratio per generation.
    pub ratio_trajectory: Vec<f64>,
    pub archive: ParetoArchive,
    pub passing_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Finished(SearchResult),
    Interrupted { generations: u32 },
}

impl SearchOutcome {
    pub fn finished(self) -> Option<SearchResult> {
        match self {
            SearchOutcome::Finished(r) => Some(r),
            SearchOutcome::Interrupted { .. } => None,
        }
    }
}

/// Largest `w_service / w_energy` among the groups.
pub fn max_ratio(groups: &[WeightGroup], service: &str, energy: &str) -> Option<f64> {
    groups
        .iter()
        .filter_map(|g| Some(g.weight(service)? / g.weight(energy)?))
        .reduce(f64::max)
}

fn evaluate_generation(
    problem: &SearchProblem,
    settings: &SearchSettings,
    generation: u32,
    groups: Vec<WeightGroup>,
    directives: Vec<AdjustmentDirective>,
    suggestions: String,
) -> Result<GenerationRecord, SearchError> {
    let cfg = TrainConfig {
        seed: derive_seed(settings.seed, &format!("train/{generation}")),
        ..problem.train
    };
    let logs = groups
        .par_iter()
        .map(|g| train(&problem.env, &problem.components, &g.weights, &cfg).map(|(_, log)| log))
        .collect::<Result<Vec<_>, _>>()?;
    let summaries: Vec<LogSummary> = logs.iter().map(|l| analyze(l, &problem.requirements)).collect();
    let passing = groups
        .iter()
        .zip(&summaries)
        .filter(|(_, s)| s.passes_all())
        .map(|(g, _)| g.id.clone())
        .collect();
    let max_ratio = match (problem.service_component(), problem.energy_component()) {
        (Some(s), Some(e)) => max_ratio(&groups, s, e),
        _ => None,
    };
    Ok(GenerationRecord {
        generation,
        groups,
        directives,
        suggestions,
        logs,
        summaries,
        max_ratio,
        passing,
    })
}

fn check_groups(problem: &SearchProblem, groups: &[WeightGroup], k: usize) -> Result<(), SearchError> {
    if groups.len() != k {
        return Err(SearchError::InvalidWeights(format!("expected {k} groups, got {}", groups.len())));
    }
    for g in groups {
        let names: Vec<&str> = g.weights.names().collect();
        let mut expected: Vec<&str> = problem.components.iter().map(|c| c.name.as_str()).collect();
        expected.sort_unstable();
        if names != expected {
            return Err(SearchError::KeyMismatch(format!(
                "group {} weights [{}], components are [{}]",
                g.id,
                names.join(", "),
                expected.join(", ")
            )));
        }
    }
    Ok(())
}

fn same_groups(a: &[WeightGroup], b: &[WeightGroup]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.id == y.id && x.weights.bit_eq(&y.weights))
}

/// Runs the search from `initial` until some group meets every requirement
/// or `settings.cap` proposer-driven generations have run.
///
/// `resume` holds generations committed by an earlier, interrupted run of
/// the same configuration. They are replayed without training and without
/// calling the proposer.
pub fn run_search(
    problem: &SearchProblem,
    settings: &SearchSettings,
    initial: Vec<WeightGroup>,
    proposer: &mut dyn Proposer,
    sink: &mut dyn SearchSink,
    resume: Vec<GenerationRecord>,
) -> Result<SearchOutcome, SearchError> {
    if settings.k == 0 {
        return Err(SearchError::InvalidSettings("k must be >= 1".into()));
    }
    if settings.cap == 0 {
        return Err(SearchError::InvalidSettings("iteration cap must be >= 1".into()));
    }
    check_groups(problem, &initial, settings.k)?;
    for (i, r) in resume.iter().enumerate() {
        if r.generation as usize != i {
            return Err(SearchError::Resume(format!("record {i} holds generation {}", r.generation)));
        }
    }
    let mut resume = resume.into_iter();
    let render_mode = settings.render_mode();

    let mut archive = ParetoArchive::new();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut trajectory = Vec::new();
    let mut groups = initial;
    let mut directives = Vec::new();
    let mut suggestions = String::new();
    let mut generation = 0u32;

    loop {
        let record = match resume.next() {
            Some(saved) => {
                if !same_groups(&saved.groups, &groups) {
                    return Err(SearchError::Resume(format!(
                        "generation {generation} on disk does not match the recomputed groups"
                    )));
                }
                saved
            }
            None => {
                let record = evaluate_generation(
                    problem,
                    settings,
                    generation,
                    std::mem::take(&mut groups),
                    std::mem::take(&mut directives),
                    std::mem::take(&mut suggestions),
                )?;
                let mut next_archive = archive.clone();
                for (g, log) in record.groups.iter().zip(&record.logs) {
                    next_archive.insert(log.eval, g.id.clone());
                }
                sink.commit(&record, &next_archive)?;
                record
            }
        };
        for (g, log) in record.groups.iter().zip(&record.logs) {
            archive.insert(log.eval, g.id.clone());
        }
        if let Some(r) = record.max_ratio {
            trajectory.push(r);
        }
        history.push(HistoryEntry::from_record(&record));

        let done = !record.passing.is_empty() || generation >= settings.cap;
        if done {
            let success = !record.passing.is_empty();
            return Ok(SearchOutcome::Finished(SearchResult {
                success,
                iterations_to_success: success.then_some(generation),
                generations_run: generation + 1,
                ratio_trajectory: trajectory,
                archive,
                passing_groups: record.passing,
            }));
        }
        if settings.stop_after.is_some_and(|n| generation + 1 >= n) {
            return Ok(SearchOutcome::Interrupted {
                generations: generation + 1,
            });
        }

        let next_generation = generation + 1;
        let next_saved = resume.as_slice().first();
        if let Some(saved) = next_saved {
            groups = saved.groups.clone();
        } else {
            let ctx = ProposerContext {
                generation,
                mode: settings.mode,
                render_mode,
                k: settings.k,
                seed: settings.seed,
                env_description: problem.env_description.clone(),
                components: problem.components.iter().map(RewardComponent::def).collect(),
                requirements: problem.requirements.clone(),
                summary_texts: record.group_texts(render_mode),
                groups: record.groups.clone(),
                summaries: record.summaries.clone(),
                history: history.iter().rev().take(3).rev().cloned().collect(),
            };
            let response = proposer.propose(&ctx)?;
            suggestions = response.suggestions;
            groups = match (settings.mode, response.proposal) {
                (SearchMode::Erfsl, Proposal::Directives(ds)) => {
                    let next = assemble_generation(&ds, &record.groups, settings.k, next_generation, settings.seed)?;
                    directives = ds;
                    next
                }
                (SearchMode::EurekaM, Proposal::Vectors(vs)) => {
                    if vs.len() != settings.k {
                        return Err(SearchError::InvalidWeights(format!(
                            "proposer returned {} weight vectors, expected {}",
                            vs.len(),
                            settings.k
                        )));
                    }
                    vs.into_iter()
                        .enumerate()
                        .map(|(slot, w)| {
                            WeightGroup::new(
                                group_id(next_generation, slot),
                                w,
                                record.groups.iter().map(|g| g.id.clone()).collect(),
                                Provenance::Baseline,
                            )
                        })
                        .collect::<Result<Vec<_>, _>>()?
                }
                (mode, _) => {
                    return Err(SearchError::InvalidSettings(format!(
                        "proposer output does not match search mode {mode}"
                    )))
                }
            };
            check_groups(problem, &groups, settings.k)?;
        }
        generation = next_generation;
    }
}
