//! Repeated seeded searches per setting, summarized like an iteration-count
//! table.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{search_in_memory, OrchestratorError, RunConfig, RunSummary};
use crate::search::SearchMode;

/// Energy-weight multiplier of the off-by-500 settings.
pub const OFF_FACTOR: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Balanced initialization, no perturbation.
    Rwi,
    /// Log-uniform initialization.
    RwiUb,
    /// Energy weight multiplied by 500 after initialization.
    Off500,
    /// As `Off500`, with raw metrics instead of the analyzer text.
    Off500NoTla,
    /// As `Off500`, with the baseline proposer.
    EurekaM,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Rwi, Suite::RwiUb, Suite::Off500, Suite::Off500NoTla, Suite::EurekaM];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Rwi => "rwi",
            Suite::RwiUb => "rwi_ub",
            Suite::Off500 => "off500",
            Suite::Off500NoTla => "off500_no_tla",
            Suite::EurekaM => "eureka_m",
        }
    }

    /// The config for this setting, derived from `base`.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let s = &mut cfg.search;
        s.initial_weights = None;
        s.balanced = self != Suite::RwiUb;
        s.perturb_factor = match self {
            Suite::Rwi | Suite::RwiUb => 1.0,
            _ => OFF_FACTOR,
        };
        s.tla = self != Suite::Off500NoTla;
        s.mode = if self == Suite::EurekaM {
            SearchMode::EurekaM
        } else {
            SearchMode::Erfsl
        };
        cfg
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    /// Iterations to success per seed; failed runs count as the cap.
    pub iterations: Vec<u32>,
    pub successes: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub summaries: Vec<RunSummary>,
}

impl ExperimentRow {
    pub fn from_summaries(suite: Suite, seeds: Vec<u64>, summaries: Vec<RunSummary>) -> Self {
        let iterations: Vec<u32> = summaries
            .iter()
            .map(|s| s.iterations_to_success.unwrap_or(s.cap))
            .collect();
        let n = iterations.len().max(1) as f64;
        let mean = iterations.iter().map(|&i| f64::from(i)).sum::<f64>() / n;
        let std = (iterations.iter().map(|&i| (f64::from(i) - mean).powi(2)).sum::<f64>() / n).sqrt();
        ExperimentRow {
            suite,
            successes: summaries.iter().filter(|s| s.success).count(),
            median: median(&iterations),
            mean,
            std,
            iterations,
            seeds,
            summaries,
        }
    }

    pub fn csv_header() -> &'static str {
        "suite,runs,successes,mean_iterations,std_iterations,median_iterations,iterations"
    }

    pub fn csv_line(&self) -> String {
        let per_seed = self.iterations.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "{},{},{},{:.4},{:.4},{:.1},{}",
            self.suite,
            self.iterations.len(),
            self.successes,
            self.mean,
            self.std,
            self.median,
            per_seed
        )
    }

    pub fn table_line(&self) -> String {
        format!(
            "{:<14} {:>2}/{:<2} {:>6.2} ± {:<5.2} median {:>4.1}",
            self.suite.name(),
            self.successes,
            self.iterations.len(),
            self.mean,
            self.std,
            self.median
        )
    }
}

pub fn median(values: &[u32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        f64::from(v[mid])
    } else {
        (f64::from(v[mid - 1]) + f64::from(v[mid])) / 2.0
    }
}

/// Runs `n` searches of one setting with master seeds `base.seed + i`.
pub fn run_experiment(base: &RunConfig, suite: Suite, n: u32) -> Result<ExperimentRow, OrchestratorError> {
    if n == 0 {
        return Err(OrchestratorError::Invalid {
            field: "seeds".into(),
            message: "need at least one seed".into(),
        });
    }
    let cfg = suite.apply(base);
    let seeds: Vec<u64> = (0..u64::from(n)).map(|i| base.seed.wrapping_add(i)).collect();
    let summaries = seeds
        .par_iter()
        .map(|&seed| search_in_memory(&RunConfig { seed, ..cfg.clone() }).map(|(s, _)| s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentRow::from_summaries(suite, seeds, summaries))
}
