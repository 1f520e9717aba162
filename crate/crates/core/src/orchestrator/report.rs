//! Per-generation report and ratio trajectory of a finished run.

use std::fmt::Write;

use super::rundir::{read_json, write_atomic, RunDirectory};
use super::{OrchestratorError, RunSummary};
use crate::search::ParetoArchive;

/// `ratios.csv`: one `generation,max_ratio` row per generation run.
pub fn write_ratios_csv(dir: &RunDirectory) -> Result<(), OrchestratorError> {
    let mut csv = String::from("generation,max_ratio\n");
    for meta in dir.metas()? {
        let ratio = meta.max_ratio.map_or(String::new(), |r| format!("{r:.6}"));
        let _ = writeln!(csv, "{},{ratio}", meta.generation);
    }
    let path = dir.path("ratios.csv");
    write_atomic(&path, csv.as_bytes()).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))
}

pub fn render_report(dir: &RunDirectory) -> Result<String, OrchestratorError> {
    let summary_path = dir.path("run_summary.json");
    if !summary_path.exists() {
        return Err(OrchestratorError::IncompleteRun(dir.root().to_path_buf()));
    }
    let summary: RunSummary = read_json(&summary_path)?;
    let archive: ParetoArchive = read_json(&dir.path("archive.json"))?;
    let metas = dir.metas()?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode {} | tla {} | balanced {} | perturb x{} | seed {}",
        summary.mode, summary.tla, summary.balanced, summary.perturb_factor, summary.master_seed
    );
    let _ = writeln!(
        out,
        "success: {} | iterations to success: {} | generations run: {}",
        summary.success,
        summary.iterations_to_success.map_or("-".to_string(), |i| i.to_string()),
        summary.generations_run
    );
    let req_ids: Vec<String> = metas
        .first()
        .map(|m| m.best_margins.iter().map(|(id, _)| id.clone()).collect())
        .unwrap_or_default();
    let _ = write!(out, "\n{:>10} {:>12}", "generation", "max_ratio");
    for id in &req_ids {
        let _ = write!(out, " {:>14}", format!("best {id}"));
    }
    let _ = writeln!(out, " {:>8} {:>7}", "archive", "passing");
    for m in &metas {
        let ratio = m.max_ratio.map_or("-".to_string(), |r| format!("{r:.4}"));
        let _ = write!(out, "{:>10} {:>12}", m.generation, ratio);
        for (_, margin) in &m.best_margins {
            let _ = write!(out, " {:>+14.4}", margin + 0.0);
        }
        let _ = writeln!(out, " {:>8} {:>7}", m.archive_size, m.passing.len());
    }
    let _ = writeln!(out, "\narchive entries: {}", archive.len());
    for e in archive.entries() {
        let _ = writeln!(
            out,
            "  {}: service_rate {:.4} energy_total {:.4} violations {:.4}",
            e.group_id, e.metrics.service_rate, e.metrics.energy_total, e.metrics.violations
        );
    }
    Ok(out)
}

/// Rewrites `ratios.csv` and `report.txt` and returns the report text.
pub fn write_report(dir: &RunDirectory) -> Result<String, OrchestratorError> {
    let text = render_report(dir)?;
    write_ratios_csv(dir)?;
    let path = dir.path("report.txt");
    write_atomic(&path, text.as_bytes()).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
    Ok(text)
}
