use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Component name to weight. Ordered so serialization and iteration are
/// stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub BTreeMap<String, f64>);

impl WeightVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> WeightVector {
        WeightVector(self.0.iter().map(|(k, v)| (k.clone(), v * factor)).collect())
    }

    /// Bitwise equality, so `0.0` and `-0.0` differ and duplicate detection
    /// matches what gets serialized.
    pub fn bit_eq(&self, other: &WeightVector) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|((ka, va), (kb, vb))| ka == kb && va.to_bits() == vb.to_bits())
    }
}

impl<const N: usize> From<[(&str, f64); N]> for WeightVector {
    fn from(pairs: [(&str, f64); N]) -> Self {
        WeightVector(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}
