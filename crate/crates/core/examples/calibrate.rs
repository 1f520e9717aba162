//! Sweeps the service/energy weight ratio and prints mean eval metrics, used
//! to pick default requirement thresholds.
//!
//! Run with: cargo run --release --example calibrate -- [episodes] [seeds]

use rwsearch::dsl::{ComponentDef, RewardComponent};
use rwsearch::env::{compute_metrics, random_episode, Action, EnvConfig, EnvState, Metrics, StepRecord};
use rwsearch::trainer::{train, TrainConfig};
use rwsearch::weights::WeightVector;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let episodes = *args.first().unwrap_or(&300) as u32;
    let seeds = *args.get(1).unwrap_or(&8);
    let env = EnvConfig::default().with_seed(1);
    let comps: Vec<RewardComponent> = [("service", "served_now"), ("ec", "-energy_step"), ("collision", "-collision_now")]
        .iter()
        .map(|(n, s)| RewardComponent::from_def(&ComponentDef::new(n, n, s, "")).unwrap())
        .collect();
    let random: Vec<Metrics> = (0..200)
        .map(|i| compute_metrics(&random_episode(&env.with_seed(i), i + 1000).unwrap()))
        .collect();
    println!("random policy: {:?}", Metrics::mean(&random));
    let greedy: Vec<Metrics> = (0..200).map(|i| compute_metrics(&greedy_episode(&env.with_seed(i)))).collect();
    println!("greedy chase: {:?}", Metrics::mean(&greedy));
    for ratio in [1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 100.0, 300.0] {
        let runs: Vec<Metrics> = (0..seeds)
            .map(|seed| {
                let w = WeightVector::from([("service", 0.4), ("ec", 0.4 / ratio), ("collision", 1.4)]);
                let cfg = TrainConfig { seed, episodes, ..TrainConfig::default() };
                train(&env.with_seed(seed + 100), &comps, &w, &cfg).unwrap().1.eval
            })
            .collect();
        let mean = Metrics::mean(&runs);
        let sd = |f: fn(&Metrics) -> f64, m: f64| {
            (runs.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / runs.len() as f64).sqrt()
        };
        let zero_viol = runs.iter().filter(|r| r.violations == 0.0).count();
        println!(
            "ratio {ratio:6}: service {:.3}±{:.3} energy {:6.1}±{:5.1} violations {:.2} (zero in {zero_viol}/{seeds})",
            mean.service_rate,
            sd(|m| m.service_rate, mean.service_rate),
            mean.energy_total,
            sd(|m| m.energy_total, mean.energy_total),
            mean.violations,
        );
    }
}

/// Every unit steps toward its nearest request, or stays when there is none.
fn greedy_episode(env: &EnvConfig) -> Vec<StepRecord> {
    let mut state = EnvState::reset(env).unwrap();
    let mut trace = Vec::new();
    while !state.is_done() {
        let actions: Vec<Action> = state
            .units()
            .iter()
            .map(|u| match state.nearest_request(*u) {
                None => Action::Stay,
                Some(t) if t.x > u.x => Action::E,
                Some(t) if t.x < u.x => Action::W,
                Some(t) if t.y > u.y => Action::S,
                Some(_) => Action::N,
            })
            .collect();
        trace.push(state.step(&actions).unwrap());
    }
    trace
}
