use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initializer,
    Mutant,
    Crossover,
    Baseline,
}

/// One candidate weighting of all components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightGroup {
    pub id: String,
    pub weights: WeightVector,
    pub parent_ids: Vec<String>,
    pub provenance: Provenance,
}

impl WeightGroup {
    /// Fails unless every weight is finite and strictly positive.
    pub fn new(
        id: impl Into<String>,
        weights: WeightVector,
        parent_ids: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self, SearchError> {
        let id = id.into();
        if weights.is_empty() {
            return Err(SearchError::InvalidWeights(format!("group {id} has no weights")));
        }
        if let Some((name, w)) = weights.0.iter().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(SearchError::InvalidWeights(format!("group {id}: weight {name} = {w}")));
        }
        Ok(WeightGroup {
            id,
            weights,
            parent_ids,
            provenance,
        })
    }

    pub fn weight(&self, component: &str) -> Option<f64> {
        self.weights.get(component)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
    #[serde(rename = "fine-tune", alias = "fine_tune", alias = "finetune")]
    FineTune,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::FineTune => "fine-tune",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Up,
    Down,
}

/// Largest multiplier a fine-tune may apply.
pub const FINE_TUNE_MAX: f64 = 1.5;

/// Mutation instruction: scale one weight of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentDirective {
    pub source_group_id: String,
    pub component: String,
    pub direction: Direction,
    pub magnitude: f64,
    /// Only read for fine-tune.
    #[serde(default)]
    pub sign: Sign,
    #[serde(default)]
    pub rationale: String,
}

impl AdjustmentDirective {
    pub fn new(source: &str, component: &str, direction: Direction, magnitude: f64) -> Self {
        Self {
            source_group_id: source.to_string(),
            component: component.to_string(),
            direction,
            magnitude,
            sign: Sign::Up,
            rationale: String::new(),
        }
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = rationale.into();
        self
    }

    /// Checks the magnitude bounds for the direction.
    pub fn validate_magnitude(&self) -> Result<(), SearchError> {
        let m = self.magnitude;
        let ok = match self.direction {
            Direction::Increase | Direction::Decrease => m.is_finite() && m >= 1.0,
            Direction::FineTune => (1.0..=FINE_TUNE_MAX).contains(&m),
        };
        if ok {
            Ok(())
        } else {
            Err(SearchError::InvalidDirective(format!(
                "{} magnitude {m} out of range ({})",
                self.direction,
                if self.direction == Direction::FineTune {
                    "expected 1 <= m <= 1.5"
                } else {
                    "expected m >= 1"
                }
            )))
        }
    }

    /// Multiplier this directive applies to its weight.
    pub fn factor(&self) -> f64 {
        match (self.direction, self.sign) {
            (Direction::Increase, _) | (Direction::FineTune, Sign::Up) => self.magnitude,
            (Direction::Decrease, _) | (Direction::FineTune, Sign::Down) => 1.0 / self.magnitude,
        }
    }
}

impl fmt::Display for AdjustmentDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} of {} by x{}", self.direction, self.component, self.source_group_id, self.magnitude)?;
        if self.direction == Direction::FineTune {
            write!(f, " ({})", if self.sign == Sign::Up { "up" } else { "down" })?;
        }
        Ok(())
    }
}

/// Applies one directive, changing exactly one coordinate.
pub fn mutate(group: &WeightGroup, d: &AdjustmentDirective, new_id: impl Into<String>) -> Result<WeightGroup, SearchError> {
    if d.source_group_id != group.id {
        return Err(SearchError::InvalidDirective(format!(
            "directive targets group {} but was applied to {}",
            d.source_group_id, group.id
        )));
    }
    d.validate_magnitude()?;
    let current = group.weight(&d.component).ok_or_else(|| {
        SearchError::InvalidDirective(format!("group {} has no component '{}'", group.id, d.component))
    })?;
    let mut weights = group.weights.clone();
    let factor = d.factor();
    // Identity fine-tunes must stay bit-identical.
    let updated = if factor == 1.0 {
        current
    } else if d.direction == Direction::Decrease || (d.direction == Direction::FineTune && d.sign == Sign::Down) {
        current / d.magnitude
    } else {
        current * d.magnitude
    };
    weights.0.insert(d.component.clone(), updated);
    WeightGroup::new(new_id, weights, vec![group.id.clone()], Provenance::Mutant)
}

/// Uniform crossover: each weight is copied from a uniformly chosen parent.
pub fn crossover_with(
    parents: &[&WeightGroup],
    rng: &mut impl Rng,
    new_id: impl Into<String>,
) -> Result<WeightGroup, SearchError> {
    if parents.len() < 2 {
        return Err(SearchError::KeyMismatch("crossover needs at least two parents".into()));
    }
    let keys: Vec<&str> = parents[0].weights.names().collect();
    for p in &parents[1..] {
        if !p.weights.names().eq(keys.iter().copied()) {
            return Err(SearchError::KeyMismatch(format!(
                "groups {} and {} weight different components",
                parents[0].id, p.id
            )));
        }
    }
    let weights = WeightVector(
        keys.iter()
            .map(|k| {
                let pick = parents[rng.gen_range(0..parents.len())];
                (k.to_string(), pick.weights.0[*k])
            })
            .collect(),
    );
    WeightGroup::new(
        new_id,
        weights,
        parents.iter().map(|p| p.id.clone()).collect(),
        Provenance::Crossover,
    )
}

pub fn crossover(parents: &[&WeightGroup], seed: u64, new_id: impl Into<String>) -> Result<WeightGroup, SearchError> {
    crossover_with(parents, &mut ChaCha8Rng::seed_from_u64(seed), new_id)
}
