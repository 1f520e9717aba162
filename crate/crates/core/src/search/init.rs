//! Scale measurement and initial weight groups.

use std::collections::BTreeMap;

use rand::Rng;

use super::group::{Provenance, WeightGroup};
use crate::dsl::RewardComponent;
use crate::env::{random_episode, EnvConfig};
use crate::seed::{derive_seed, rng_for};
use crate::trainer::{RewardModel, TrainError};
use crate::weights::WeightVector;

/// Floor applied to components whose measured scale is zero.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Emphasis multipliers for balanced initialization; their max/min ratio
/// bounds the spread of weighted scales inside a group.
pub const EMPHASIS: [f64; 3] = [0.5, 1.0, 2.0];

/// Mean absolute per-episode sum of each component under a uniformly random
/// policy.
pub fn measure_component_scales(
    env: &EnvConfig,
    components: &[RewardComponent],
    episodes: u32,
    seed: u64,
) -> Result<BTreeMap<String, f64>, TrainError> {
    if episodes == 0 {
        return Err(TrainError::InvalidConfig("scale measurement needs at least one episode".into()));
    }
    let unit = WeightVector(components.iter().map(|c| (c.name.clone(), 1.0)).collect());
    let model = RewardModel::new(components, &unit)?;
    let mut totals = vec![0.0; components.len()];
    let mut values = vec![0.0; components.len()];
    for i in 0..episodes {
        let episode_env = env.with_seed(derive_seed(seed, &format!("scales/env/{i}")));
        let trace = random_episode(&episode_env, derive_seed(seed, &format!("scales/policy/{i}")))?;
        let mut sums = vec![0.0; components.len()];
        for record in &trace {
            model.component_values(record, &mut values)?;
            for (s, v) in sums.iter_mut().zip(&values) {
                *s += v;
            }
        }
        for (t, s) in totals.iter_mut().zip(&sums) {
            *t += s.abs();
        }
    }
    Ok(components
        .iter()
        .zip(totals)
        .map(|(c, t)| {
            let scale = t / f64::from(episodes);
            (c.name.clone(), if scale > 0.0 { scale } else { SCALE_FLOOR })
        })
        .collect())
}

pub fn initial_group_id(slot: usize) -> String {
    format!("g0.{slot}")
}

/// Builds the initial generation.
///
/// Balanced groups start from `1 / scale` per component; group 0 keeps those
/// base weights and every other group multiplies each weight by an emphasis
/// factor drawn from [`EMPHASIS`]. Unbalanced groups ignore the scales and
/// draw each weight log-uniformly from `[0.01, 100]`.
pub fn init_weights_rwi(scales: &BTreeMap<String, f64>, k: usize, balanced: bool, seed: u64) -> Vec<WeightGroup> {
    let mut rng = rng_for(seed, if balanced { "rwi/balanced" } else { "rwi/unbalanced" });
    (0..k)
        .map(|slot| {
            let weights = scales
                .iter()
                .map(|(name, scale)| {
                    let w = if balanced {
                        let emphasis = if slot == 0 {
                            1.0
                        } else {
                            EMPHASIS[rng.gen_range(0..EMPHASIS.len())]
                        };
                        emphasis / scale.max(SCALE_FLOOR)
                    } else {
                        10f64.powf(rng.gen_range(-2.0..=2.0))
                    };
                    (name.clone(), w)
                })
                .collect();
            WeightGroup::new(initial_group_id(slot), WeightVector(weights), vec![], Provenance::Initializer)
                .expect("initial weights are positive")
        })
        .collect()
}

/// Largest over smallest weighted scale within a group.
pub fn scale_spread(group: &WeightGroup, scales: &BTreeMap<String, f64>) -> f64 {
    let products: Vec<f64> = scales
        .iter()
        .map(|(name, s)| group.weight(name).unwrap_or(0.0) * s)
        .collect();
    let max = products.iter().copied().fold(f64::MIN, f64::max);
    let min = products.iter().copied().fold(f64::MAX, f64::min);
    max / min
}
