use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rwsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwsearch"))
        .args(args)
        .env_remove("RWSEARCH_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, value: Value) -> String {
    let path = dir.join("config.in.json");
    fs::write(&path, value.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_defaults_and_rejects_bad_fields() {
    let ok = rwsearch(&["validate"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).starts_with("ok:"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"search": {"k": 0}}));
    let bad = rwsearch(&["validate", "--config", &cfg]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("search.k"), "{}", stderr(&bad));

    let typo = write_config(tmp.path(), json!({"search": {"k": "five"}}));
    let bad = rwsearch(&["validate", "--config", &typo]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn usage_errors_are_configuration_errors() {
    assert_eq!(rwsearch(&["search", "--mode", "greedy"]).status.code(), Some(1));
    assert_eq!(rwsearch(&["search", "--proposer", "llm"]).status.code(), Some(1));
    assert_eq!(rwsearch(&["--help"]).status.code(), Some(0));
}

#[test]
fn search_writes_a_run_directory_and_report_rereads_it() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();
    let run = rwsearch(&["search", "--seed", "1", "--perturb-factor", "500", "--out", out_s]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert!(stdout(&run).contains("success after"));
    for f in ["config.json", "scales.json", "archive.json", "run_summary.json", "report.txt", "ratios.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = rwsearch(&["report", out_s]);
    assert_eq!(report.status.code(), Some(0), "{}", stderr(&report));
    assert_eq!(stdout(&report), fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn unmet_requirements_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"search": {"cap": 1}}));
    let out = tmp.path().join("run");
    let run = rwsearch(&[
        "search",
        "--config",
        &cfg,
        "--mode",
        "eureka-m",
        "--seed",
        "1",
        "--perturb-factor",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3), "{}", stderr(&run));
    assert!(stderr(&run).contains("requirements unmet"));
    assert!(out.join("report.txt").exists());
}

#[test]
fn critic_repairs_components_and_flags_garbage() {
    let tmp = tempfile::tempdir().unwrap();
    let components = |service: &str| {
        json!({"components": [
            {"name": "service", "requirement_id": "service", "source": service},
            {"name": "ec", "requirement_id": "energy", "source": "energy_step"},
            {"name": "collision", "requirement_id": "safety", "source": "-collision_now"},
        ]})
    };
    let cfg = write_config(tmp.path(), components("servd_now"));
    let out = tmp.path().join("fixed");
    let run = rwsearch(&["critic", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert!(stdout(&run).contains("fabricated variable 'servd_now'"));
    let fixed: Value = serde_json::from_str(&fs::read_to_string(out.join("components.json")).unwrap()).unwrap();
    let sources: Vec<&str> = fixed.as_array().unwrap().iter().map(|c| c["source"].as_str().unwrap()).collect();
    assert_eq!(sources, ["served_now", "-(energy_step)", "-collision_now"]);

    let cfg = write_config(tmp.path(), components("served_now +* ("));
    let out = tmp.path().join("broken");
    let run = rwsearch(&["critic", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(out.join("critic.json").exists());
    assert!(!out.join("components.json").exists());
}

#[test]
fn experiment_prints_a_table_and_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let run = rwsearch(&["experiment", "--suite", "rwi", "--seeds", "2", "--seed", "1", "--out", out]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let csv = fs::read_to_string(tmp.path().join("experiment.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("rwi,2,2,"), "{csv}");
    assert!(stdout(&run).contains(&csv));
    assert!(tmp.path().join("experiment.json").exists());
}
