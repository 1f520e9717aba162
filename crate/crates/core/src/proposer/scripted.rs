//! Deterministic proposers used as test oracles and offline defaults.

use std::fmt::Write;

use rand::Rng;

use super::{Proposal, Proposer, ProposerContext, ProposerError, ProposerResponse};
use crate::analyzer::{LogSummary, RenderMode};
use crate::requirements::RequirementSpec;
use crate::search::{AdjustmentDirective, Direction, SearchMode, WeightGroup};
use crate::seed::rng_for;
use crate::weights::WeightVector;

/// Dominant share above which the dominant component is cut by 10x.
pub const DOMINANCE_HIGH: f64 = 0.9;
/// Dominant share above which the dominant component is cut by 3x.
pub const DOMINANCE_LOW: f64 = 0.6;
/// Relative distance to the threshold treated as "nearly there".
pub const NEAR_THRESHOLD: f64 = 0.1;
pub const FINE_TUNE_STEP: f64 = 1.2;
/// Per-weight multiplier range of the baseline proposer.
pub const EUREKA_JITTER: (f64, f64) = (0.9, 1.3);

const STEP_LARGE: f64 = 10.0;
const STEP_MEDIUM: f64 = 3.0;

fn relative_gap(spec: &RequirementSpec, margin: f64) -> f64 {
    let scale = if spec.threshold == 0.0 { 1.0 } else { spec.threshold.abs() };
    margin.abs() / scale
}

/// Weight of `numerator` over weight of `denominator` in a group, 0 when
/// either is missing.
fn weight_ratio(g: &WeightGroup, numerator: Option<&str>, denominator: Option<&str>) -> f64 {
    match (numerator.and_then(|n| g.weight(n)), denominator.and_then(|d| g.weight(d))) {
        (Some(n), Some(d)) => n / d,
        _ => 0.0,
    }
}

/// Index of the group to mutate for a failing requirement: best margin,
/// then the least dominated, then the largest failing/dominant weight
/// ratio, then the earliest.
fn pick_group(ctx: &ProposerContext, spec: &RequirementSpec, full: bool) -> usize {
    let own = ctx.component_for_requirement(&spec.id);
    let key = |i: usize| {
        let s = &ctx.summaries[i];
        let margin = s.requirement(&spec.id).map_or(f64::NEG_INFINITY, |r| r.margin);
        let share = if full { s.dominant_share() } else { 0.0 };
        let ratio = if full {
            weight_ratio(&ctx.groups[i], own, s.dominant_component.as_deref())
        } else {
            0.0
        };
        (margin, share, ratio)
    };
    (0..ctx.groups.len())
        .min_by(|&a, &b| {
            let (ma, sa, ra) = key(a);
            let (mb, sb, rb) = key(b);
            mb.total_cmp(&ma)
                .then(sa.total_cmp(&sb))
                .then(rb.total_cmp(&ra))
                .then(a.cmp(&b))
        })
        .expect("context has groups")
}

fn directive_for(
    ctx: &ProposerContext,
    spec: &RequirementSpec,
    group: usize,
    full: bool,
) -> Option<(AdjustmentDirective, String)> {
    let own = ctx.component_for_requirement(&spec.id)?;
    let g = &ctx.groups[group];
    let s: &LogSummary = &ctx.summaries[group];
    let margin = s.requirement(&spec.id)?.margin;
    if !full {
        let d = AdjustmentDirective::new(&g.id, own, Direction::Increase, STEP_MEDIUM);
        return Some((d, format!("{} fails (margin {margin:+.4}); raise {own}", spec.id)));
    }
    let share = s.dominant_share();
    if let Some(dominant) = s.dominant_component.as_deref() {
        if share > DOMINANCE_LOW && dominant != own {
            let m = if share > DOMINANCE_HIGH { STEP_LARGE } else { STEP_MEDIUM };
            let d = AdjustmentDirective::new(&g.id, dominant, Direction::Decrease, m);
            let why = format!(
                "{} fails (margin {margin:+.4}) while {dominant} holds {share:.4} of the weighted reward; cut it",
                spec.id
            );
            return Some((d, why));
        }
    }
    if relative_gap(spec, margin) <= NEAR_THRESHOLD {
        let d = AdjustmentDirective::new(&g.id, own, Direction::FineTune, FINE_TUNE_STEP);
        return Some((d, format!("{} is close (margin {margin:+.4}); nudge {own} up", spec.id)));
    }
    let d = AdjustmentDirective::new(&g.id, own, Direction::Increase, STEP_MEDIUM);
    Some((d, format!("{} fails (margin {margin:+.4}) without a dominance problem; raise {own}", spec.id)))
}

/// Rule-based directives.
///
/// Each requirement that no group meets is handled from the group with the
/// best margin on it. When every requirement is met by some group but no
/// group meets all, groups are repaired closest-first until K directives.
/// Returns no directives when a group already passes.
pub fn scripted_propose(ctx: &ProposerContext) -> ProposerResponse {
    let full = ctx.render_mode == RenderMode::Full;
    let mut suggestions = String::new();
    let mut directives: Vec<AdjustmentDirective> = Vec::new();
    let mut push = |d: AdjustmentDirective, why: String, out: &mut String| {
        if directives.len() < ctx.k && !directives.contains(&d) {
            let _ = writeln!(out, "- {d}: {why}");
            directives.push(d.with_rationale(why));
        }
    };

    if ctx.summaries.iter().any(LogSummary::passes_all) || ctx.groups.is_empty() {
        suggestions.push_str("A group already meets every requirement; no change.\n");
        return respond(suggestions, directives);
    }

    let globally_failing: Vec<&RequirementSpec> = ctx
        .requirements
        .iter()
        .filter(|r| !ctx.summaries.iter().any(|s| s.requirement(&r.id).is_some_and(|x| x.pass)))
        .collect();

    if !globally_failing.is_empty() {
        for spec in globally_failing {
            let group = pick_group(ctx, spec, full);
            if let Some((d, why)) = directive_for(ctx, spec, group, full) {
                push(d, why, &mut suggestions);
            }
        }
    } else {
        for focus in focus_order(ctx) {
            let summary = &ctx.summaries[focus];
            for spec in &ctx.requirements {
                if summary.requirement(&spec.id).is_some_and(|r| !r.pass) {
                    if let Some((d, why)) = directive_for(ctx, spec, focus, full) {
                        push(d, why, &mut suggestions);
                    }
                }
            }
        }
    }
    if suggestions.is_empty() {
        suggestions.push_str("No applicable adjustment.\n");
    }
    respond(suggestions, directives)
}

fn respond(suggestions: String, directives: Vec<AdjustmentDirective>) -> ProposerResponse {
    ProposerResponse {
        suggestions,
        proposal: Proposal::Directives(directives),
    }
}

/// Groups ordered by how close they are to passing: the smallest summed
/// relative shortfall over failed requirements first, then the most
/// requirements met, then the earliest.
fn focus_order(ctx: &ProposerContext) -> Vec<usize> {
    let score = |s: &LogSummary| {
        let passed = s.requirements.iter().filter(|r| r.pass).count();
        let shortfall: f64 = ctx
            .requirements
            .iter()
            .filter_map(|spec| s.requirement(&spec.id).filter(|r| !r.pass).map(|r| relative_gap(spec, r.margin)))
            .sum();
        (shortfall, passed)
    };
    let mut order: Vec<usize> = (0..ctx.summaries.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, pa) = score(&ctx.summaries[a]);
        let (sb, pb) = score(&ctx.summaries[b]);
        sa.total_cmp(&sb).then(pb.cmp(&pa)).then(a.cmp(&b))
    });
    order
}

/// Baseline proposal: every weight of every current group multiplied by an
/// independent factor uniform in [`EUREKA_JITTER`].
pub fn scripted_eureka_m(ctx: &ProposerContext, seed: u64) -> ProposerResponse {
    let mut rng = rng_for(seed, &format!("eureka/{}", ctx.generation));
    let vectors: Vec<WeightVector> = ctx
        .groups
        .iter()
        .map(|g| {
            WeightVector(
                g.weights
                    .0
                    .iter()
                    .map(|(n, w)| (n.clone(), w * rng.gen_range(EUREKA_JITTER.0..=EUREKA_JITTER.1)))
                    .collect(),
            )
        })
        .collect();
    ProposerResponse {
        suggestions: "Perturb every weight of every function by a small random step.\n".into(),
        proposal: Proposal::Vectors(vectors),
    }
}

/// Scripted proposer for either search mode.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedProposer;

impl Proposer for ScriptedProposer {
    fn propose(&mut self, ctx: &ProposerContext) -> Result<ProposerResponse, ProposerError> {
        Ok(match ctx.mode {
            SearchMode::Erfsl => scripted_propose(ctx),
            SearchMode::EurekaM => scripted_eureka_m(ctx, ctx.seed),
        })
    }
}
