//! Numerical user requirements on evaluation metrics.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ServiceRate,
    EnergyTotal,
    Violations,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ServiceRate, Metric::EnergyTotal, Metric::Violations];

    pub fn value(self, m: &Metrics) -> f64 {
        match self {
            Metric::ServiceRate => m.service_rate,
            Metric::EnergyTotal => m.energy_total,
            Metric::Violations => m.violations,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::ServiceRate => "service_rate",
            Metric::EnergyTotal => "energy_total",
            Metric::Violations => "violations",
        }
    }

    pub fn is_integer_valued(self) -> bool {
        self == Metric::Violations
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Eq => "==",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RequirementError {
    #[error("requirement '{0}': threshold must be finite")]
    NonFiniteThreshold(String),
    #[error("requirement '{id}': '==' is only allowed on integer-valued metrics, not {metric}")]
    EqualityOnContinuous { id: String, metric: Metric },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementSpec {
    pub id: String,
    pub metric: Metric,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl RequirementSpec {
    pub fn new(id: &str, metric: Metric, comparator: Comparator, threshold: f64) -> Self {
        Self {
            id: id.to_string(),
            metric,
            comparator,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<(), RequirementError> {
        if !self.threshold.is_finite() {
            return Err(RequirementError::NonFiniteThreshold(self.id.clone()));
        }
        if self.comparator == Comparator::Eq && !self.metric.is_integer_valued() {
            return Err(RequirementError::EqualityOnContinuous {
                id: self.id.clone(),
                metric: self.metric,
            });
        }
        Ok(())
    }

    /// Signed margin, positive when satisfied with room to spare. Equality
    /// requirements have margin `-|value - threshold|`.
    pub fn margin(&self, value: f64) -> f64 {
        match self.comparator {
            Comparator::Ge => value - self.threshold,
            Comparator::Le => self.threshold - value,
            Comparator::Eq => -(value - self.threshold).abs(),
        }
    }

    /// Comparators are closed: a value exactly at the threshold passes.
    pub fn is_satisfied(&self, value: f64) -> bool {
        match self.comparator {
            Comparator::Ge => value >= self.threshold,
            Comparator::Le => value <= self.threshold,
            Comparator::Eq => value == self.threshold,
        }
    }
}

impl fmt::Display for RequirementSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.metric, self.comparator.symbol(), self.threshold)
    }
}

/// The default task's requirements.
pub fn default_requirements() -> Vec<RequirementSpec> {
    vec![
        RequirementSpec::new("service", Metric::ServiceRate, Comparator::Ge, 0.65),
        RequirementSpec::new("energy", Metric::EnergyTotal, Comparator::Le, 150.0),
        RequirementSpec::new("safety", Metric::Violations, Comparator::Eq, 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementCheck {
    pub pass: bool,
    /// `(requirement id, margin)` in spec order.
    pub margins: Vec<(String, f64)>,
}

pub fn check_requirements(metrics: &Metrics, specs: &[RequirementSpec]) -> RequirementCheck {
    let mut pass = true;
    let margins = specs
        .iter()
        .map(|spec| {
            let value = spec.metric.value(metrics);
            pass &= spec.is_satisfied(value);
            (spec.id.clone(), spec.margin(value))
        })
        .collect();
    RequirementCheck { pass, margins }
}
