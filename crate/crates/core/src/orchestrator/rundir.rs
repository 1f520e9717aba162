//! On-disk run layout with atomic writes and resume support.
//!
//! ```text
//! config.json  components.json  scales.json
//! iterations/NNN/{weights.json, directives.json, logs/, summary.txt, summary.json, meta.json}
//! archive.json  ratios.csv  run_summary.json  transcripts.jsonl
//! ```
//!
//! `meta.json` is written last inside an iteration and marks it complete.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::analyzer::{LogSummary, RenderMode};
use crate::search::{AdjustmentDirective, GenerationRecord, ParetoArchive, SearchError, SearchSink, WeightGroup};
use crate::trainer::TrainingLog;

/// Writes to a sibling temp file, then renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), OrchestratorError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("run artifacts serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| OrchestratorError::Parse {
        path: format!("{}: {}", path.display(), e.path()),
        message: e.inner().to_string(),
    })
}

/// Small per-iteration record; its presence marks the iteration complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMeta {
    pub generation: u32,
    pub group_ids: Vec<String>,
    pub max_ratio: Option<f64>,
    pub passing: Vec<String>,
    pub best_margins: Vec<(String, f64)>,
    pub archive_size: usize,
    pub suggestions: String,
}

#[derive(Debug, Clone)]
pub struct RunDirectory {
    root: PathBuf,
    render_mode: RenderMode,
}

impl RunDirectory {
    pub fn new(root: impl Into<PathBuf>, render_mode: RenderMode) -> Self {
        Self {
            root: root.into(),
            render_mode,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn iteration_dir(&self, generation: u32) -> PathBuf {
        self.root.join("iterations").join(format!("{generation:03}"))
    }

    pub fn is_complete(&self) -> bool {
        self.path("run_summary.json").exists()
    }

    /// Metas of all complete iterations, in order.
    pub fn metas(&self) -> Result<Vec<IterationMeta>, OrchestratorError> {
        let mut out = Vec::new();
        for generation in 0.. {
            let meta = self.iteration_dir(generation).join("meta.json");
            if !meta.exists() {
                break;
            }
            out.push(read_json(&meta)?);
        }
        Ok(out)
    }

    /// Reloads every complete iteration for a resumed search.
    pub fn load_records(&self) -> Result<Vec<GenerationRecord>, OrchestratorError> {
        self.metas()?
            .into_iter()
            .map(|meta| {
                let dir = self.iteration_dir(meta.generation);
                let groups: Vec<WeightGroup> = read_json(&dir.join("weights.json"))?;
                let directives: Vec<AdjustmentDirective> = read_json(&dir.join("directives.json"))?;
                let summaries: Vec<LogSummary> = read_json(&dir.join("summary.json"))?;
                let logs = groups
                    .iter()
                    .map(|g| read_json::<TrainingLog>(&dir.join("logs").join(format!("{}.json", g.id))))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(GenerationRecord {
                    generation: meta.generation,
                    groups,
                    directives,
                    suggestions: meta.suggestions,
                    logs,
                    summaries,
                    max_ratio: meta.max_ratio,
                    passing: meta.passing,
                })
            })
            .collect()
    }

    fn commit_record(&self, record: &GenerationRecord, archive: &ParetoArchive) -> Result<(), OrchestratorError> {
        let dir = self.iteration_dir(record.generation);
        write_json(&dir.join("weights.json"), &record.groups)?;
        write_json(&dir.join("directives.json"), &record.directives)?;
        for (g, log) in record.groups.iter().zip(&record.logs) {
            write_json(&dir.join("logs").join(format!("{}.json", g.id)), log)?;
        }
        write_json(&dir.join("summary.json"), &record.summaries)?;
        let text = record.summary_text(self.render_mode);
        write_atomic(&dir.join("summary.txt"), text.as_bytes())
            .map_err(|e| OrchestratorError::Io(format!("summary.txt: {e}")))?;
        write_json(&self.path("archive.json"), archive)?;
        let meta = IterationMeta {
            generation: record.generation,
            group_ids: record.groups.iter().map(|g| g.id.clone()).collect(),
            max_ratio: record.max_ratio,
            passing: record.passing.clone(),
            best_margins: record.best_margins(),
            archive_size: archive.len(),
            suggestions: record.suggestions.clone(),
        };
        write_json(&dir.join("meta.json"), &meta)
    }
}

impl SearchSink for RunDirectory {
    fn commit(&mut self, record: &GenerationRecord, archive: &ParetoArchive) -> Result<(), SearchError> {
        self.commit_record(record, archive)
            .map_err(|e| SearchError::Persist(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.json");
        write_json(&p, &vec![1, 2]).unwrap();
        write_json(&p, &vec![3]).unwrap();
        assert_eq!(read_json::<Vec<i32>>(&p).unwrap(), vec![3]);
        assert!(!dir.path().join("a/b.json.tmp").exists());
    }
}
