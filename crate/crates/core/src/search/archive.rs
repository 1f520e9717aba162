//! Non-dominated archive over (service_rate up, energy_total down,
//! violations down).

use serde::{Deserialize, Serialize};

use crate::env::Metrics;

/// `a` strictly dominates `b`: no worse on every oriented objective and
/// strictly better on at least one.
pub fn dominates(a: &Metrics, b: &Metrics) -> bool {
    let no_worse = a.service_rate >= b.service_rate && a.energy_total <= b.energy_total && a.violations <= b.violations;
    let better = a.service_rate > b.service_rate || a.energy_total < b.energy_total || a.violations < b.violations;
    no_worse && better
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub group_id: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, group_id: &str) -> bool {
        self.entries.iter().any(|e| e.group_id == group_id)
    }

    /// Inserts unless an existing entry strictly dominates the point; evicts
    /// entries the point strictly dominates. Returns whether it was inserted.
    pub fn insert(&mut self, metrics: Metrics, group_id: impl Into<String>) -> bool {
        if self.entries.iter().any(|e| dominates(&e.metrics, &metrics)) {
            return false;
        }
        self.entries.retain(|e| !dominates(&metrics, &e.metrics));
        self.entries.push(ArchiveEntry {
            group_id: group_id.into(),
            metrics,
        });
        true
    }
}
