mod common;

use std::collections::BTreeMap;

use common::{brute_force_front, random_metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwsearch::analyzer::{analyze, render_text, RenderMode};
use rwsearch::dsl::{evaluate, ComponentDef, RewardComponent};
use rwsearch::env::{random_episode, EnvConfig, Metrics};
use rwsearch::requirements::default_requirements;
use rwsearch::search::{
    assemble_generation, crossover, measure_component_scales, AdjustmentDirective, Direction, ParetoArchive,
    Provenance, WeightGroup,
};
use rwsearch::seed::derive_seed;
use rwsearch::trainer::{EpisodeLog, TrainingLog};
use rwsearch::weights::WeightVector;

const NAMES: [&str; 3] = ["collision", "ec", "service"];

/// A 40-episode log whose metrics drift linearly so trends are non-zero.
fn synthetic_log(rng: &mut impl Rng) -> TrainingLog {
    let weights = WeightVector::from([("collision", 2.0), ("ec", 0.05), ("service", 1.5)]);
    let episodes = (0..40)
        .map(|i| {
            let t = f64::from(i);
            let raw: BTreeMap<String, f64> = [
                ("collision", -f64::from(rng.gen_range(0..3))),
                ("ec", -(60.0 + t + rng.gen_range(0.0..20.0))),
                ("service", rng.gen_range(0.0..10.0) + t / 4.0),
            ]
            .into_iter()
            .map(|(n, v)| (n.to_string(), v))
            .collect();
            let weighted = raw.iter().map(|(n, v)| (n.clone(), weights.get(n).unwrap() * v)).collect();
            EpisodeLog {
                total_return: raw.iter().map(|(n, v)| weights.get(n).unwrap() * v).sum(),
                raw,
                weighted,
                metrics: Metrics {
                    service_rate: 0.2 + t / 80.0,
                    energy_total: 120.0 - t,
                    violations: f64::from(rng.gen_range(0..2)),
                },
            }
        })
        .collect();
    TrainingLog {
        components: NAMES.iter().map(|s| s.to_string()).collect(),
        weights,
        episodes,
        eval: Metrics {
            service_rate: 0.7,
            energy_total: 131.0,
            violations: 0.0,
        },
        train_seed: 0,
        env_seed: 0,
    }
}

#[test]
fn summary_matches_column_by_column_recomputation() {
    let log = synthetic_log(&mut ChaCha8Rng::seed_from_u64(40));
    let s = analyze(&log, &default_requirements());

    // Column means, population std, then shares of absolute weighted means.
    let column = |name: &str, weighted: bool| -> Vec<f64> {
        log.episodes
            .iter()
            .map(|e| if weighted { e.weighted[name] } else { e.raw[name] })
            .collect()
    };
    let mut abs_weighted = Vec::new();
    for name in NAMES {
        let raw = column(name, false);
        let mean: f64 = raw.iter().sum::<f64>() / 40.0;
        let std = (raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 40.0).sqrt();
        let c = s.component(name).unwrap();
        assert!((c.raw_mean - mean).abs() < 1e-9);
        assert!((c.raw_std - std).abs() < 1e-9);
        let wmean = column(name, true).iter().sum::<f64>() / 40.0;
        assert!((c.weighted_mean - wmean).abs() < 1e-9);
        abs_weighted.push(wmean.abs());
    }
    let total: f64 = abs_weighted.iter().sum();
    for (name, a) in NAMES.iter().zip(&abs_weighted) {
        assert!((s.component(name).unwrap().share - a / total).abs() < 1e-12);
    }
    let shares: f64 = s.components.iter().map(|c| c.share).sum();
    assert!((shares - 1.0).abs() < 1e-12);
    let top = NAMES
        .iter()
        .zip(&abs_weighted)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(n, _)| n.to_string());
    assert_eq!(s.dominant_component, top);

    // Trends: mean of episodes 30..40 minus mean of episodes 0..10.
    for t in &s.trends {
        let values: Vec<f64> = log.episodes.iter().map(|e| t.metric.value(&e.metrics)).collect();
        let first: f64 = values[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = values[30..].iter().sum::<f64>() / 10.0;
        assert!((t.delta - (last - first)).abs() < 1e-9, "{:?}", t.metric);
    }

    let service = s.requirement("service").unwrap();
    assert!(service.pass && (service.margin - 0.05).abs() < 1e-12);
    let energy = s.requirement("energy").unwrap();
    assert!(energy.pass && (energy.margin - 19.0).abs() < 1e-12);
}

#[test]
fn raw_only_text_is_a_subset_without_shares() {
    let log = synthetic_log(&mut ChaCha8Rng::seed_from_u64(41));
    let s = analyze(&log, &default_requirements());
    let full = render_text(&s, RenderMode::Full);
    let raw = render_text(&s, RenderMode::RawOnly);
    assert_eq!(full, render_text(&s, RenderMode::Full));
    assert!(!raw.contains("share"));
    assert!(full.contains("share") && full.contains("dominant component"));
    for line in raw.lines() {
        assert!(full.contains(line), "{line}");
    }
}

#[test]
fn constant_metric_has_zero_trend() {
    let mut log = synthetic_log(&mut ChaCha8Rng::seed_from_u64(42));
    for e in &mut log.episodes {
        e.metrics.violations = 3.0;
    }
    let s = analyze(&log, &default_requirements());
    let t = s.trends.iter().find(|t| t.metric.name() == "violations").unwrap();
    assert_eq!(t.delta, 0.0);
}

fn fixture_components() -> Vec<RewardComponent> {
    [("service", "served_now"), ("ec", "-energy_step"), ("collision", "-collision_now")]
        .iter()
        .map(|(n, s)| RewardComponent::from_def(&ComponentDef::new(n, n, s, "")).unwrap())
        .collect()
}

#[test]
fn scales_match_an_interpreted_rollout_recount() {
    let env = EnvConfig::default().with_seed(77);
    let comps = fixture_components();
    let scales = measure_component_scales(&env, &comps, 50, 13).unwrap();
    for c in &comps {
        let mut total = 0.0;
        for i in 0..50 {
            let e = env.with_seed(derive_seed(13, &format!("scales/env/{i}")));
            let trace = random_episode(&e, derive_seed(13, &format!("scales/policy/{i}"))).unwrap();
            let sum: f64 = trace
                .iter()
                .map(|r| evaluate(&c.expr, &r.features.to_binding()).unwrap())
                .sum();
            total += sum.abs();
        }
        let want = total / 50.0;
        assert!((scales[&c.name] - want).abs() <= 1e-9 * want.max(1.0), "{}", c.name);
    }
    // Moving every step costs at most 2 units x 1.0 x 100 steps.
    assert!(scales["ec"] <= 200.0);
}

fn pair() -> (WeightGroup, WeightGroup) {
    let a = WeightGroup::new("a", WeightVector::from([("x", 1.0), ("y", 2.0)]), vec![], Provenance::Initializer).unwrap();
    let b = WeightGroup::new("b", WeightVector::from([("x", 10.0), ("y", 20.0)]), vec![], Provenance::Initializer)
        .unwrap();
    (a, b)
}

#[test]
fn crossover_picks_each_parent_half_the_time() {
    let (a, b) = pair();
    let (mut x_from_a, mut y_from_a) = (0, 0);
    for seed in 0..1000u64 {
        let child = crossover(&[&a, &b], derive_seed(seed, "crossover-mc"), "c").unwrap();
        let x = child.weight("x").unwrap();
        let y = child.weight("y").unwrap();
        assert!(x == 1.0 || x == 10.0);
        assert!(y == 2.0 || y == 20.0);
        x_from_a += usize::from(x == 1.0);
        y_from_a += usize::from(y == 2.0);
        assert_eq!(child.provenance, Provenance::Crossover);
        assert_eq!(child.parent_ids, vec!["a".to_string(), "b".to_string()]);
    }
    for count in [x_from_a, y_from_a] {
        let freq = count as f64 / 1000.0;
        assert!((freq - 0.5).abs() <= 0.05, "frequency {freq}");
    }
}

#[test]
fn crossover_of_identical_parents_is_a_copy() {
    let (a, _) = pair();
    let twin = WeightGroup { id: "t".into(), ..a.clone() };
    assert_eq!(crossover(&[&a, &twin], 5, "c").unwrap().weights, a.weights);
}

fn archive_matches_brute_force(n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Metrics> = (0..n).map(|_| random_metrics(&mut rng)).collect();
    let mut archive = ParetoArchive::new();
    for (i, p) in points.iter().enumerate() {
        archive.insert(*p, format!("p{i}"));
    }
    let mut got: Vec<String> = archive.entries().iter().map(|e| e.group_id.clone()).collect();
    let mut want: Vec<String> = brute_force_front(&points).iter().map(|i| format!("p{i}")).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn archive_after_100_insertions_is_the_non_dominated_set() {
    for seed in 0..20 {
        archive_matches_brute_force(100, seed);
    }
}

#[test]
fn archive_after_1000_insertions_is_the_non_dominated_set() {
    archive_matches_brute_force(1000, 7);
}

fn generation_zero(k: usize) -> Vec<WeightGroup> {
    (0..k)
        .map(|i| {
            let f = 1.0 + i as f64;
            WeightGroup::new(
                format!("g0.{i}"),
                WeightVector::from([("collision", 3.0 * f), ("ec", 0.02 * f), ("service", 1.0 / f)]),
                vec![],
                Provenance::Initializer,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn crossover_children_trace_every_coordinate_to_a_parent() {
    let groups = generation_zero(5);
    let directives = vec![
        AdjustmentDirective::new("g0.1", "ec", Direction::Decrease, 10.0),
        AdjustmentDirective::new("g0.3", "service", Direction::Increase, 3.0),
    ];
    let out = assemble_generation(&directives, &groups, 5, 1, 99).unwrap();
    assert_eq!(out.len(), 5);
    let mutants: Vec<&WeightGroup> = out.iter().filter(|g| g.provenance == Provenance::Mutant).collect();
    assert_eq!(mutants.len(), 2);
    for child in out.iter().filter(|g| g.provenance == Provenance::Crossover) {
        for (name, w) in &child.weights.0 {
            assert!(mutants.iter().any(|m| m.weight(name) == Some(*w)), "{} {name}", child.id);
        }
    }
    for g in &out {
        assert!(g.weights.0.values().all(|w| *w > 0.0 && w.is_finite()));
    }
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            assert!(!out[i].weights.bit_eq(&out[j].weights), "duplicate groups");
        }
    }
    assert_eq!(out, assemble_generation(&directives, &groups, 5, 1, 99).unwrap());
}
