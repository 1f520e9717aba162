mod common;

use std::fs;
use std::path::Path;

use common::FakeModel;
use rwsearch::analyzer::RenderMode;
use rwsearch::dsl::{check_component, ComponentDef};
use rwsearch::orchestrator::{
    read_json, render_report, run_critic, schema, search_to_dir, search_to_dir_with, summary_without_timestamp,
    write_report, IterationMeta, OrchestratorError, ProposerKind, RunConfig, RunDirectory, RunSummary, SearchRun,
    Suite,
};
use rwsearch::proposer::{LlmProposer, LlmSettings, RecordingTransport};
use rwsearch::search::ParetoArchive;

fn off500(seed: u64) -> RunConfig {
    let mut cfg = Suite::Off500.apply(&RunConfig::default());
    cfg.seed = seed;
    cfg
}

fn summary_text(dir: &Path) -> String {
    summary_without_timestamp(&fs::read_to_string(dir.join("run_summary.json")).unwrap()).unwrap()
}

fn finished(run: SearchRun) -> RunSummary {
    match run {
        SearchRun::Finished(s) => s,
        SearchRun::Interrupted { generations } => panic!("interrupted after {generations}"),
    }
}

#[test]
fn same_config_gives_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    finished(search_to_dir(&off500(3), &a, None).unwrap());
    finished(search_to_dir(&off500(3), &b, None).unwrap());
    assert_eq!(summary_text(&a), summary_text(&b));
    assert!(!summary_text(&a).contains("finished_at"));
}

#[test]
fn interrupted_run_resumes_to_the_same_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (whole, split) = (tmp.path().join("whole"), tmp.path().join("split"));
    let cfg = off500(2);
    let reference = finished(search_to_dir(&cfg, &whole, None).unwrap());
    assert!(reference.generations_run > 2, "needs a run longer than the interruption point");

    assert_eq!(search_to_dir(&cfg, &split, Some(2)).unwrap(), SearchRun::Interrupted { generations: 2 });
    assert!(split.join("iterations/001/meta.json").exists());
    assert!(!split.join("iterations/002").exists());
    assert!(!split.join("run_summary.json").exists());
    let weights_before = fs::read(split.join("iterations/001/weights.json")).unwrap();
    let log_path = split.join("iterations/000/logs/g0.0.json");
    let modified = fs::metadata(&log_path).unwrap().modified().unwrap();

    finished(search_to_dir(&cfg, &split, None).unwrap());
    assert_eq!(summary_text(&whole), summary_text(&split));
    // Completed iterations are reused, not retrained.
    assert_eq!(fs::read(split.join("iterations/001/weights.json")).unwrap(), weights_before);
    assert_eq!(fs::metadata(&log_path).unwrap().modified().unwrap(), modified);
}

#[test]
fn resuming_with_a_different_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    search_to_dir(&off500(2), tmp.path(), Some(1)).unwrap();
    let err = search_to_dir(&off500(9), tmp.path(), None).unwrap_err();
    assert!(matches!(err, OrchestratorError::ConfigMismatch(_)));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn recorded_llm_session_replays_offline() {
    let tmp = tempfile::tempdir().unwrap();
    let (live, replay) = (tmp.path().join("live"), tmp.path().join("replay"));
    let mut cfg = off500(1);
    cfg.search.cap = 3;
    let transcript = live.join("transcripts.jsonl");
    let mut llm = LlmProposer::new(RecordingTransport::new(FakeModel::default(), &transcript), LlmSettings::default());
    let recorded = finished(search_to_dir_with(&cfg, &live, &mut llm, None).unwrap());
    let calls = llm.transport_mut().inner().requests.len();
    assert!(calls >= 2, "at least one suggest/emit pair");
    assert_eq!(fs::read_to_string(&transcript).unwrap().lines().count(), calls);

    let mut replay_cfg = cfg.clone();
    replay_cfg.proposer.kind = ProposerKind::Replay;
    replay_cfg.proposer.transcript = Some(transcript);
    let replayed = finished(search_to_dir(&replay_cfg, &replay, None).unwrap());
    assert_eq!(summary_text(&live), summary_text(&replay));
    assert_eq!(recorded.ratio_trajectory, replayed.ratio_trajectory);
}

#[test]
fn first_generation_pass_counts_zero_iterations() {
    let mut cfg = Suite::Rwi.apply(&RunConfig::default());
    cfg.seed = 0;
    let tmp = tempfile::tempdir().unwrap();
    let s = finished(search_to_dir(&cfg, tmp.path(), None).unwrap());
    assert_eq!((s.success, s.iterations_to_success, s.generations_run), (true, Some(0), 1));
    assert_eq!(s.ratio_trajectory.len(), 1);
}

#[test]
fn exhausted_cap_reports_failure() {
    let mut cfg = Suite::EurekaM.apply(&RunConfig::default());
    cfg.seed = 1;
    cfg.search.cap = 2;
    let tmp = tempfile::tempdir().unwrap();
    let s = finished(search_to_dir(&cfg, tmp.path(), None).unwrap());
    assert!(!s.success);
    assert_eq!(s.iterations_to_success, None);
    assert_eq!(s.generations_run, 3);
    assert_eq!(s.ratio_trajectory.len(), 3);
}

#[test]
fn report_is_consistent_and_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let s = finished(search_to_dir(&off500(4), tmp.path(), None).unwrap());
    let dir = RunDirectory::new(tmp.path(), RenderMode::Full);
    let first = write_report(&dir).unwrap();
    let csv = fs::read_to_string(tmp.path().join("ratios.csv")).unwrap();
    assert_eq!(write_report(&dir).unwrap(), first);
    assert_eq!(fs::read_to_string(tmp.path().join("ratios.csv")).unwrap(), csv);
    assert_eq!(csv.lines().count() as u32, s.generations_run + 1);
    let archive: ParetoArchive = read_json(&tmp.path().join("archive.json")).unwrap();
    assert!(first.contains(&format!("archive entries: {}", archive.len())));
    assert_eq!(archive.len(), s.archive_size);
    for g in 0..s.generations_run {
        let it = tmp.path().join(format!("iterations/{g:03}"));
        for f in ["weights.json", "directives.json", "summary.txt", "summary.json", "meta.json"] {
            assert!(it.join(f).exists(), "{}", it.join(f).display());
        }
        let meta: IterationMeta = read_json(&it.join("meta.json")).unwrap();
        assert_eq!(meta.group_ids.len(), 5);
    }
}

#[test]
fn unfinished_run_has_no_report() {
    let tmp = tempfile::tempdir().unwrap();
    search_to_dir(&off500(2), tmp.path(), Some(1)).unwrap();
    let err = render_report(&RunDirectory::new(tmp.path(), RenderMode::Full)).unwrap_err();
    assert!(matches!(err, OrchestratorError::IncompleteRun(_)));
}

fn with_sources(sources: [&str; 3]) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (c, s) in cfg.components.iter_mut().zip(sources) {
        c.source = s.to_string();
    }
    cfg
}

fn assert_repaired_in_one_round(cfg: &RunConfig) {
    let outcome = run_critic(cfg, None);
    assert!(outcome.unfixable.is_empty(), "{:?}", outcome.unfixable);
    for c in &outcome.components {
        assert_eq!(outcome.rounds[&c.name], 1, "{}", c.name);
        let report = check_component(c, &schema(), cfg.probes_for(&c.requirement_id));
        assert!(report.is_clean(), "{}: {report}", c.name);
    }
}

#[test]
fn critic_fixes_sign_flips_in_one_round() {
    assert_repaired_in_one_round(&with_sources(["-served_now", "energy_step", "collision_now"]));
}

#[test]
fn critic_fixes_misspellings_in_one_round() {
    let cfg = with_sources(["servd_now", "-enrgy_step", "-colision_now"]);
    assert_repaired_in_one_round(&cfg);
    let outcome = run_critic(&cfg, None);
    let fabricated: Vec<&str> = outcome
        .verdicts
        .iter()
        .flat_map(|v| v.fabricated_variables.iter().map(|f| f.name.as_str()))
        .collect();
    assert_eq!(fabricated, ["servd_now", "enrgy_step", "colision_now"]);
    let fixed: Vec<&str> = outcome.components.iter().map(|c| c.source.as_str()).collect();
    assert_eq!(fixed, ["served_now", "-energy_step", "-collision_now"]);
}

#[test]
fn clean_fixtures_need_no_rounds() {
    let outcome = run_critic(&RunConfig::default(), None);
    assert!(outcome.rounds.values().all(|r| *r == 0));
    assert_eq!(outcome.components, RunConfig::default().components);
}

#[test]
fn garbage_is_unfixable_and_blocks_the_search() {
    let cfg = with_sources(["served_now +* (", "-energy_step", "-collision_now"]);
    let outcome = run_critic(&cfg, None);
    assert_eq!(outcome.unfixable.len(), 1);
    assert_eq!(outcome.unfixable[0].0, "service");
    let tmp = tempfile::tempdir().unwrap();
    let err = search_to_dir(&cfg, tmp.path(), None).unwrap_err();
    assert!(matches!(err, OrchestratorError::ComponentFault { .. }), "{err}");
}

#[test]
fn critic_components_file_feeds_the_search() {
    let cfg = with_sources(["-served_now", "-energy_step", "-collision_now"]);
    let outcome = run_critic(&cfg, None);
    let tmp = tempfile::tempdir().unwrap();
    rwsearch::orchestrator::write_json(&tmp.path().join("components.json"), &outcome.components).unwrap();
    let mut cfg = cfg;
    cfg.search.cap = 1;
    search_to_dir(&cfg, tmp.path(), None).unwrap();
    let used: Vec<ComponentDef> = read_json(&tmp.path().join("components.json")).unwrap();
    assert_eq!(used, outcome.components);
}
