//! Pipeline stages behind the command-line entry points: config
//! validation, the critic loop, persisted searches, experiment suites and
//! reports.

mod config;
mod experiment;
mod report;
mod rundir;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    default_components, default_probes, probe_base, schema, ProposerConfig, ProposerKind, RunConfig, SearchConfig,
    DEFAULT_DESCRIPTION,
};
pub use experiment::{run_experiment, ExperimentRow, Suite};
pub use report::{render_report, write_ratios_csv, write_report};
pub use rundir::{read_json, write_atomic, write_json, IterationMeta, RunDirectory};

use crate::dsl::{check_component, ComponentDef, ComponentReport, RewardComponent};
use crate::proposer::{
    critic_review, ChatTransport, CriticMode, CriticVerdict, HttpTransport, LlmProposer, Proposer, ProposerError,
    RecordingTransport, ReplayTransport, ScriptedProposer,
};
use crate::requirements::Metric;
use crate::search::{
    component_for_metric, init_weights_rwi, initial_group_id, measure_component_scales, run_search, NullSink,
    Provenance, SearchError, SearchOutcome, SearchProblem, SearchResult, SearchSettings, SearchSink, WeightGroup,
};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("config error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("component '{component}' fails its checks; run the critic first\n{report}")]
    ComponentFault { component: String, report: ComponentReport },
    #[error("unfixable components: {}", .0.iter().map(|(n, r)| format!("{n} ({r})")).collect::<Vec<_>>().join(", "))]
    UnfixableComponents(Vec<(String, String)>),
    #[error("run directory {0} belongs to a different configuration")]
    ConfigMismatch(PathBuf),
    #[error("run in {0} has not finished")]
    IncompleteRun(PathBuf),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

impl OrchestratorError {
    /// 1 for configuration problems, 2 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Parse { .. } | OrchestratorError::Invalid { .. } | OrchestratorError::ConfigMismatch(_) => 1,
            _ => 2,
        }
    }
}

/// Result of a finished search as written to `run_summary.json`.
/// `finished_at` is the only wall-clock field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub success: bool,
    pub iterations_to_success: Option<u32>,
    pub generations_run: u32,
    pub cap: u32,
    pub k: usize,
    pub mode: crate::search::SearchMode,
    pub tla: bool,
    pub balanced: bool,
    pub perturb_factor: f64,
    pub master_seed: u64,
    pub env_seed: u64,
    pub ratio_trajectory: Vec<f64>,
    pub archive_size: usize,
    pub passing_groups: Vec<String>,
    pub finished_at: u64,
}

pub const TIMESTAMP_KEY: &str = "finished_at";

impl RunSummary {
    fn new(cfg: &RunConfig, result: &SearchResult) -> Self {
        RunSummary {
            success: result.success,
            iterations_to_success: result.iterations_to_success,
            generations_run: result.generations_run,
            cap: cfg.search.cap,
            k: cfg.search.k,
            mode: cfg.search.mode,
            tla: cfg.search.tla,
            balanced: cfg.search.balanced,
            perturb_factor: cfg.search.perturb_factor,
            master_seed: cfg.seed,
            env_seed: cfg.env.seed,
            ratio_trajectory: result.ratio_trajectory.clone(),
            archive_size: result.archive.len(),
            passing_groups: result.passing_groups.clone(),
            finished_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

/// Parses and checks every component; all must be clean before training.
pub fn prepare_components(cfg: &RunConfig) -> Result<Vec<RewardComponent>, OrchestratorError> {
    let schema = schema();
    cfg.components
        .iter()
        .map(|def| {
            let report = check_component(def, &schema, cfg.probes_for(&def.requirement_id));
            if !report.is_clean() {
                return Err(OrchestratorError::ComponentFault {
                    component: def.name.clone(),
                    report,
                });
            }
            Ok(RewardComponent::from_def(def).expect("clean components parse"))
        })
        .collect()
}

pub fn search_problem(cfg: &RunConfig, components: Vec<RewardComponent>) -> SearchProblem {
    SearchProblem {
        env: cfg.env,
        components,
        requirements: cfg.requirements.clone(),
        train: cfg.train,
        env_description: cfg.env_description.clone(),
    }
}

pub fn search_settings(cfg: &RunConfig) -> SearchSettings {
    SearchSettings {
        k: cfg.search.k,
        cap: cfg.search.cap,
        mode: cfg.search.mode,
        tla: cfg.search.tla,
        seed: cfg.seed,
        stop_after: None,
    }
}

pub fn measure_scales(cfg: &RunConfig, problem: &SearchProblem) -> Result<BTreeMap<String, f64>, OrchestratorError> {
    measure_component_scales(
        &cfg.env,
        &problem.components,
        cfg.search.scale_episodes,
        derive_seed(cfg.seed, "scales"),
    )
    .map_err(|e| OrchestratorError::Search(e.into()))
}

/// Initial generation: explicit weights, or initialization from the scales,
/// followed by the energy-weight perturbation.
pub fn initial_groups(
    cfg: &RunConfig,
    problem: &SearchProblem,
    scales: &BTreeMap<String, f64>,
) -> Result<Vec<WeightGroup>, OrchestratorError> {
    let mut groups = match &cfg.search.initial_weights {
        Some(ws) => ws
            .iter()
            .enumerate()
            .map(|(i, w)| WeightGroup::new(initial_group_id(i), w.clone(), vec![], Provenance::Initializer))
            .collect::<Result<Vec<_>, _>>()?,
        None => init_weights_rwi(scales, cfg.search.k, cfg.search.balanced, derive_seed(cfg.seed, "rwi")),
    };
    if cfg.search.perturb_factor != 1.0 {
        let energy = component_for_metric(&problem.components, &problem.requirements, Metric::EnergyTotal)
            .ok_or_else(|| OrchestratorError::Invalid {
                field: "search.perturb_factor".into(),
                message: "no component is bound to an energy requirement".into(),
            })?;
        for g in &mut groups {
            if let Some(w) = g.weights.0.get_mut(energy) {
                *w *= cfg.search.perturb_factor;
            }
        }
    }
    Ok(groups)
}

/// Builds the proposer named in the config. LLM sessions are recorded to
/// `transcripts.jsonl` in the run directory when there is one.
pub fn build_proposer(cfg: &RunConfig, run_dir: Option<&Path>) -> Result<Box<dyn Proposer>, OrchestratorError> {
    let p = &cfg.proposer;
    Ok(match p.kind {
        ProposerKind::Scripted => Box::new(ScriptedProposer),
        ProposerKind::Llm => {
            let endpoint = p.endpoint.clone().ok_or_else(|| OrchestratorError::Invalid {
                field: "proposer.endpoint".into(),
                message: "missing".into(),
            })?;
            let http = HttpTransport::new(endpoint);
            match run_dir {
                Some(dir) => Box::new(LlmProposer::new(
                    RecordingTransport::new(http, dir.join("transcripts.jsonl")),
                    p.llm.clone(),
                )),
                None => Box::new(LlmProposer::new(http, p.llm.clone())),
            }
        }
        ProposerKind::Replay => {
            let path = p
                .transcript
                .clone()
                .or_else(|| run_dir.map(|d| d.join("transcripts.jsonl")))
                .ok_or_else(|| OrchestratorError::Invalid {
                    field: "proposer.transcript".into(),
                    message: "replay needs a transcript".into(),
                })?;
            Box::new(LlmProposer::new(ReplayTransport::load(&path)?, p.llm.clone()))
        }
    })
}

/// Config as stored in `config.json`, without fields that may differ
/// between an interrupted run and its resumption.
fn comparable(cfg: &RunConfig) -> serde_json::Value {
    let mut c = cfg.clone();
    c.output_dir = None;
    serde_json::to_value(c).expect("config serializes")
}

/// Runs a search in memory with the proposer from the config.
pub fn search_in_memory(cfg: &RunConfig) -> Result<(RunSummary, SearchResult), OrchestratorError> {
    let mut proposer = build_proposer(cfg, None)?;
    search_in_memory_with(cfg, proposer.as_mut())
}

pub fn search_in_memory_with(
    cfg: &RunConfig,
    proposer: &mut dyn Proposer,
) -> Result<(RunSummary, SearchResult), OrchestratorError> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let problem = search_problem(&cfg, prepare_components(&cfg)?);
    let scales = measure_scales(&cfg, &problem)?;
    let initial = initial_groups(&cfg, &problem, &scales)?;
    let outcome = run_search(&problem, &search_settings(&cfg), initial, proposer, &mut NullSink, Vec::new())?;
    let result = outcome.finished().expect("no stop_after in memory");
    Ok((RunSummary::new(&cfg, &result), result))
}

/// Outcome of a persisted search.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchRun {
    Finished(RunSummary),
    Interrupted { generations: u32 },
}

/// Persisted, resumable search in `out`, with the proposer from the config.
pub fn search_to_dir(cfg: &RunConfig, out: &Path, stop_after: Option<u32>) -> Result<SearchRun, OrchestratorError> {
    let mut proposer = build_proposer(cfg, Some(out))?;
    search_to_dir_with(cfg, out, proposer.as_mut(), stop_after)
}

/// Persisted, resumable search in `out`.
///
/// A directory holding an earlier run of the same configuration is resumed
/// from its last complete iteration; a finished one is returned as is.
pub fn search_to_dir_with(
    cfg: &RunConfig,
    out: &Path,
    proposer: &mut dyn Proposer,
    stop_after: Option<u32>,
) -> Result<SearchRun, OrchestratorError> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let dir = RunDirectory::new(out, search_settings(&cfg).render_mode());
    let config_path = dir.path("config.json");
    let components_path = dir.path("components.json");

    let components: Vec<ComponentDef> = if config_path.exists() {
        let saved: RunConfig = read_json(&config_path)?;
        if comparable(&saved) != comparable(&cfg) {
            return Err(OrchestratorError::ConfigMismatch(out.to_path_buf()));
        }
        if dir.is_complete() {
            return Ok(SearchRun::Finished(read_json(&dir.path("run_summary.json"))?));
        }
        read_json(&components_path)?
    } else if components_path.exists() {
        // Written by the critic; takes precedence over the config's own.
        read_json(&components_path)?
    } else {
        cfg.components.clone()
    };
    write_json(&config_path, &cfg)?;
    write_json(&components_path, &components)?;
    let cfg = RunConfig { components, ..cfg };
    let problem = search_problem(&cfg, prepare_components(&cfg)?);

    let scales_path = dir.path("scales.json");
    let scales = if scales_path.exists() {
        read_json(&scales_path)?
    } else {
        let s = measure_scales(&cfg, &problem)?;
        write_json(&scales_path, &s)?;
        s
    };
    let initial = initial_groups(&cfg, &problem, &scales)?;
    let resume = dir.load_records()?;
    let settings = SearchSettings {
        stop_after,
        ..search_settings(&cfg)
    };
    let mut sink = dir.clone();
    let outcome = run_search(&problem, &settings, initial, proposer, &mut sink as &mut dyn SearchSink, resume)?;
    match outcome {
        SearchOutcome::Interrupted { generations } => Ok(SearchRun::Interrupted { generations }),
        SearchOutcome::Finished(result) => {
            write_ratios_csv(&dir)?;
            let summary = RunSummary::new(&cfg, &result);
            write_json(&dir.path("run_summary.json"), &summary)?;
            Ok(SearchRun::Finished(summary))
        }
    }
}

/// `run_summary.json` text with the timestamp key removed, for
/// byte-for-byte comparisons.
pub fn summary_without_timestamp(text: &str) -> Result<String, OrchestratorError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| OrchestratorError::Io(format!("run summary: {e}")))?;
    if let Some(map) = value.as_object_mut() {
        map.remove(TIMESTAMP_KEY);
    }
    Ok(serde_json::to_string_pretty(&value).expect("value serializes"))
}

/// Critic rounds allowed per component.
pub const MAX_CRITIC_ROUNDS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticOutcome {
    pub components: Vec<ComponentDef>,
    /// Feedback rounds spent per component; 0 when it was already clean.
    pub rounds: BTreeMap<String, u32>,
    pub verdicts: Vec<CriticVerdict>,
    pub unfixable: Vec<(String, String)>,
}

/// Reviews every component until it is clean, it is declared unfixable, or
/// [`MAX_CRITIC_ROUNDS`] rounds were spent. `transport` selects the LLM
/// critic; `None` uses the scripted one.
pub fn run_critic(cfg: &RunConfig, mut transport: Option<&mut dyn ChatTransport>) -> CriticOutcome {
    let schema = schema();
    let mut outcome = CriticOutcome {
        components: Vec::new(),
        rounds: BTreeMap::new(),
        verdicts: Vec::new(),
        unfixable: Vec::new(),
    };
    for original in &cfg.components {
        let probes = cfg.probes_for(&original.requirement_id);
        let mut def = original.clone();
        let mut rounds = 0;
        let mut report = check_component(&def, &schema, probes);
        while !report.is_clean() && rounds < MAX_CRITIC_ROUNDS {
            let mode = match transport.as_deref_mut() {
                Some(t) => CriticMode::Llm {
                    transport: t,
                    model: &cfg.proposer.llm.model,
                },
                None => CriticMode::Scripted,
            };
            match critic_review(&def, &report, &schema, probes, mode) {
                Ok(verdict) => {
                    rounds += 1;
                    if let Some(src) = &verdict.revised_source {
                        def.source = src.clone();
                    }
                    outcome.verdicts.push(verdict);
                    report = check_component(&def, &schema, probes);
                }
                Err(e) => {
                    outcome.unfixable.push((def.name.clone(), e.to_string()));
                    break;
                }
            }
        }
        if !report.is_clean() && !outcome.unfixable.iter().any(|(n, _)| n == &def.name) {
            outcome
                .unfixable
                .push((def.name.clone(), format!("still failing after {rounds} rounds")));
        }
        outcome.rounds.insert(def.name.clone(), rounds);
        outcome.components.push(def);
    }
    outcome
}
