//! Deterministic second stage: directives in, exactly K groups out.

use rand::Rng;

use super::group::{crossover_with, mutate, AdjustmentDirective, Provenance, WeightGroup};
use super::SearchError;
use crate::seed::rng_for;

/// Crossover redraws tried before a duplicate child is perturbed.
pub const DEDUPE_RETRIES: usize = 10;
/// Fine-tune multiplier used to break a remaining duplicate.
pub const DEDUPE_FINE_TUNE: f64 = 1.1;

pub fn group_id(generation: u32, slot: usize) -> String {
    format!("g{generation}.{slot}")
}

fn is_duplicate(candidate: &WeightGroup, taken: &[WeightGroup]) -> bool {
    taken.iter().any(|g| g.weights.bit_eq(&candidate.weights))
}

/// Multiplies or divides one random coordinate by [`DEDUPE_FINE_TUNE`] until
/// the group is unique.
fn perturb_until_unique(mut group: WeightGroup, taken: &[WeightGroup], rng: &mut impl Rng) -> WeightGroup {
    let names: Vec<String> = group.weights.0.keys().cloned().collect();
    while is_duplicate(&group, taken) {
        let name = &names[rng.gen_range(0..names.len())];
        let w = group.weights.0.get_mut(name).expect("name taken from the same map");
        if rng.gen_bool(0.5) {
            *w *= DEDUPE_FINE_TUNE;
        } else {
            *w /= DEDUPE_FINE_TUNE;
        }
        group.provenance = Provenance::Mutant;
    }
    group
}

/// Builds the next generation.
///
/// The first `k` directives become mutants. Remaining slots are filled with
/// uniform crossovers between two distinct mutants; a lone mutant is crossed
/// with its source group, and with no mutants at all the current groups
/// serve as parents. Exact duplicates are redrawn up to [`DEDUPE_RETRIES`]
/// times and then perturbed by a fine-tune.
pub fn assemble_generation(
    directives: &[AdjustmentDirective],
    groups: &[WeightGroup],
    k: usize,
    generation: u32,
    seed: u64,
) -> Result<Vec<WeightGroup>, SearchError> {
    if k == 0 {
        return Err(SearchError::InvalidSettings("k must be >= 1".into()));
    }
    let mut rng = rng_for(seed, &format!("assemble/{generation}"));
    let mut out: Vec<WeightGroup> = Vec::with_capacity(k);

    for d in directives.iter().take(k) {
        let source = groups.iter().find(|g| g.id == d.source_group_id).ok_or_else(|| {
            SearchError::InvalidDirective(format!("unknown source group '{}'", d.source_group_id))
        })?;
        let mutant = mutate(source, d, group_id(generation, out.len()))?;
        let mutant = perturb_until_unique(mutant, &out, &mut rng);
        out.push(mutant);
    }

    let pool: Vec<WeightGroup> = match out.len() {
        0 => groups.to_vec(),
        1 => {
            let source = &out[0].parent_ids[0];
            let source = groups.iter().find(|g| &g.id == source).expect("mutant source exists");
            vec![out[0].clone(), source.clone()]
        }
        _ => out.clone(),
    };

    while out.len() < k {
        let id = group_id(generation, out.len());
        let child = if pool.len() < 2 {
            let mut only = pool[0].clone();
            only.id = id;
            only.parent_ids = vec![pool[0].id.clone()];
            only.provenance = Provenance::Crossover;
            only
        } else {
            let mut attempt = 0;
            loop {
                let a = rng.gen_range(0..pool.len());
                let mut b = rng.gen_range(0..pool.len() - 1);
                if b >= a {
                    b += 1;
                }
                let child = crossover_with(&[&pool[a], &pool[b]], &mut rng, id.clone())?;
                attempt += 1;
                if !is_duplicate(&child, &out) || attempt > DEDUPE_RETRIES {
                    break child;
                }
            }
        };
        let child = perturb_until_unique(child, &out, &mut rng);
        out.push(child);
    }
    Ok(out)
}
