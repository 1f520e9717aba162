//! Training-log analysis: per-component scale statistics, metric trends and
//! requirement margins, plus the templated text handed to proposers.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::env::Metrics;
use crate::requirements::{Comparator, Metric, RequirementSpec};
use crate::trainer::TrainingLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub name: String,
    pub weight: f64,
    /// Mean and population std of per-episode raw sums.
    pub raw_mean: f64,
    pub raw_std: f64,
    pub weighted_mean: f64,
    /// `|weighted_mean| / sum |weighted_mean|`, or 0 when the sum is 0.
    pub share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTrend {
    pub metric: Metric,
    /// Mean over the last quarter of episodes minus mean over the first.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementStatus {
    pub id: String,
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
    pub value: f64,
    pub pass: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub episodes: usize,
    pub components: Vec<ComponentStats>,
    pub trends: Vec<MetricTrend>,
    pub eval: Metrics,
    pub requirements: Vec<RequirementStatus>,
    pub dominant_component: Option<String>,
}

impl LogSummary {
    pub fn passes_all(&self) -> bool {
        self.requirements.iter().all(|r| r.pass)
    }

    pub fn requirement(&self, id: &str) -> Option<&RequirementStatus> {
        self.requirements.iter().find(|r| r.id == id)
    }

    pub fn component(&self, name: &str) -> Option<&ComponentStats> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Share of the dominant component, 0 when nothing dominates.
    pub fn dominant_share(&self) -> f64 {
        self.dominant_component
            .as_deref()
            .and_then(|n| self.component(n))
            .map_or(0.0, |c| c.share)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Full,
    RawOnly,
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Summarizes one training log against the requirements.
///
/// # Panics
/// If the log has no episodes.
pub fn analyze(log: &TrainingLog, requirements: &[RequirementSpec]) -> LogSummary {
    assert!(!log.episodes.is_empty(), "cannot analyze an empty training log");
    let n = log.episodes.len() as f64;

    let mut components: Vec<ComponentStats> = log
        .components
        .iter()
        .map(|name| {
            let raw_mean = log.episodes.iter().map(|e| e.raw[name]).sum::<f64>() / n;
            let var = log.episodes.iter().map(|e| (e.raw[name] - raw_mean).powi(2)).sum::<f64>() / n;
            ComponentStats {
                name: name.clone(),
                weight: log.weights.get(name).unwrap_or(0.0),
                raw_mean,
                raw_std: var.sqrt(),
                weighted_mean: log.episodes.iter().map(|e| e.weighted[name]).sum::<f64>() / n,
                share: 0.0,
            }
        })
        .collect();
    let total: f64 = components.iter().map(|c| c.weighted_mean.abs()).sum();
    if total > 0.0 {
        for c in &mut components {
            c.share = c.weighted_mean.abs() / total;
        }
    }
    let dominant_component = components
        .iter()
        .filter(|c| c.share > 0.0)
        // max share; on equal shares the lexicographically smallest name wins
        .min_by(|a, b| b.share.total_cmp(&a.share).then_with(|| a.name.cmp(&b.name)))
        .map(|c| c.name.clone());

    let quarter = (log.episodes.len() / 4).max(1);
    let first = &log.episodes[..quarter];
    let last = &log.episodes[log.episodes.len() - quarter..];
    let trends = Metric::ALL
        .iter()
        .map(|&metric| MetricTrend {
            metric,
            delta: mean(last.iter().map(|e| metric.value(&e.metrics))).0
                - mean(first.iter().map(|e| metric.value(&e.metrics))).0,
        })
        .collect();

    let requirements = requirements
        .iter()
        .map(|spec| {
            let value = spec.metric.value(&log.eval);
            RequirementStatus {
                id: spec.id.clone(),
                metric: spec.metric,
                comparator: spec.comparator,
                threshold: spec.threshold,
                value,
                pass: spec.is_satisfied(value),
                margin: spec.margin(value),
            }
        })
        .collect();

    LogSummary {
        episodes: log.episodes.len(),
        components,
        trends,
        eval: log.eval,
        requirements,
        dominant_component,
    }
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn signed(x: f64) -> String {
    // Adding zero turns -0.0 into 0.0 so it prints as "+0.0000".
    let rounded = (x * 1e4).round() / 1e4 + 0.0;
    format!("{rounded:+.4}")
}

/// Deterministic text rendering. `RawOnly` keeps just the evaluation metrics
/// and requirement outcomes.
pub fn render_text(summary: &LogSummary, mode: RenderMode) -> String {
    let mut out = String::new();
    let e = &summary.eval;
    let _ = writeln!(
        out,
        "eval metrics: service_rate={} energy_total={} violations={}",
        num(e.service_rate),
        num(e.energy_total),
        num(e.violations)
    );
    for r in &summary.requirements {
        let _ = writeln!(
            out,
            "requirement {}: {} {} {} -> {} (value {}, margin {})",
            r.id,
            r.metric,
            r.comparator.symbol(),
            num(r.threshold),
            if r.pass { "PASS" } else { "FAIL" },
            num(r.value),
            signed(r.margin)
        );
    }
    if mode == RenderMode::RawOnly {
        return out;
    }
    let _ = writeln!(out, "training episodes: {}", summary.episodes);
    for c in &summary.components {
        let _ = writeln!(
            out,
            "component {}: weight {} raw_mean {} raw_std {} weighted_mean {} share {}",
            c.name,
            num(c.weight),
            num(c.raw_mean),
            num(c.raw_std),
            num(c.weighted_mean),
            num(c.share)
        );
    }
    for t in &summary.trends {
        let _ = writeln!(out, "trend {} (last quarter - first quarter): {}", t.metric, signed(t.delta));
    }
    match &summary.dominant_component {
        Some(name) => {
            let _ = writeln!(
                out,
                "dominant component: {name} with share {} of total weighted magnitude",
                num(summary.dominant_share())
            );
        }
        None => {
            let _ = writeln!(out, "dominant component: none (all weighted means are zero)");
        }
    }
    out
}
