//! Independent oracles shared by the integration suites.
//!
//! Nothing here calls into the crate's parser, evaluator, archive or
//! proposers; each helper recomputes its answer from first principles.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use rwsearch::env::Metrics;
use rwsearch::proposer::{ChatRequest, ChatTransport, ProposerError};

pub const SCHEMA: [&str; 6] = [
    "served_now",
    "energy_step",
    "collision_now",
    "dist_to_nearest_request",
    "requests_active",
    "step_idx",
];

/// Expression tree of the reference interpreter.
#[derive(Debug, Clone)]
pub enum RefExpr {
    Num(f64),
    Var(usize),
    Neg(Box<RefExpr>),
    Bin(&'static str, Box<RefExpr>, Box<RefExpr>),
    Call(&'static str, Vec<RefExpr>),
}

const BIN_OPS: [&str; 9] = ["+", "-", "*", "/", "<", "<=", ">", ">=", "=="];
const FUNCS: [(&str, usize); 6] = [("min", 2), ("max", 2), ("abs", 1), ("exp", 1), ("clip", 3), ("if", 3)];

/// Random tree of at most `depth` levels (a leaf is one level).
pub fn random_expr(rng: &mut impl Rng, depth: usize) -> RefExpr {
    if depth <= 1 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            RefExpr::Var(rng.gen_range(0..SCHEMA.len()))
        } else {
            let v = match rng.gen_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                2 => f64::from(rng.gen_range(0..5)),
                _ => rng.gen_range(0.0..10.0),
            };
            RefExpr::Num(v)
        };
    }
    match rng.gen_range(0..10) {
        0 => RefExpr::Neg(Box::new(random_expr(rng, depth - 1))),
        1..=5 => RefExpr::Bin(
            BIN_OPS[rng.gen_range(0..BIN_OPS.len())],
            Box::new(random_expr(rng, depth - 1)),
            Box::new(random_expr(rng, depth - 1)),
        ),
        _ => {
            let (name, arity) = FUNCS[rng.gen_range(0..FUNCS.len())];
            RefExpr::Call(name, (0..arity).map(|_| random_expr(rng, depth - 1)).collect())
        }
    }
}

pub fn ref_depth(e: &RefExpr) -> usize {
    match e {
        RefExpr::Num(_) | RefExpr::Var(_) => 1,
        RefExpr::Neg(c) => 1 + ref_depth(c),
        RefExpr::Bin(_, a, b) => 1 + ref_depth(a).max(ref_depth(b)),
        RefExpr::Call(_, args) => 1 + args.iter().map(ref_depth).max().unwrap_or(0),
    }
}

/// Fully parenthesized source text.
pub fn ref_print(e: &RefExpr) -> String {
    match e {
        RefExpr::Num(v) => format!("{v:?}"),
        RefExpr::Var(i) => SCHEMA[*i].to_string(),
        RefExpr::Neg(c) => format!("(-{})", ref_print(c)),
        RefExpr::Bin(op, a, b) => format!("({} {op} {})", ref_print(a), ref_print(b)),
        RefExpr::Call(f, args) => {
            let inner: Vec<String> = args.iter().map(ref_print).collect();
            format!("{f}({})", inner.join(", "))
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Tree-walking evaluation; `None` marks a fault (division by zero or a
/// non-finite intermediate). Untaken `if` branches are not evaluated.
pub fn ref_eval(e: &RefExpr, vars: &[f64; 6]) -> Option<f64> {
    match e {
        RefExpr::Num(v) => Some(*v),
        RefExpr::Var(i) => Some(vars[*i]),
        RefExpr::Neg(c) => ref_eval(c, vars).map(|v| -v),
        RefExpr::Bin(op, a, b) => {
            let x = ref_eval(a, vars)?;
            let y = ref_eval(b, vars)?;
            let truth = |t: bool| Some(if t { 1.0 } else { 0.0 });
            match *op {
                "+" => finite(x + y),
                "-" => finite(x - y),
                "*" => finite(x * y),
                "/" if y == 0.0 => None,
                "/" => finite(x / y),
                "<" => truth(x < y),
                "<=" => truth(x <= y),
                ">" => truth(x > y),
                ">=" => truth(x >= y),
                "==" => truth(x == y),
                other => unreachable!("operator {other}"),
            }
        }
        RefExpr::Call("if", args) => {
            if ref_eval(&args[0], vars)? != 0.0 {
                ref_eval(&args[1], vars)
            } else {
                ref_eval(&args[2], vars)
            }
        }
        RefExpr::Call(f, args) => {
            let vals = args.iter().map(|a| ref_eval(a, vars)).collect::<Option<Vec<f64>>>()?;
            match *f {
                "min" => Some(if vals[1] < vals[0] { vals[1] } else { vals[0] }),
                "max" => Some(if vals[1] > vals[0] { vals[1] } else { vals[0] }),
                "abs" => Some(if vals[0] < 0.0 { -vals[0] } else { vals[0] }),
                "exp" => finite(vals[0].exp()),
                "clip" => {
                    let lifted = if vals[0] < vals[1] { vals[1] } else { vals[0] };
                    Some(if lifted > vals[2] { vals[2] } else { lifted })
                }
                other => unreachable!("function {other}"),
            }
        }
    }
}

/// `true` when `a` is no worse on all three objectives and strictly better
/// on at least one (service up, energy down, violations down).
fn strictly_better(a: &Metrics, b: &Metrics) -> bool {
    let no_worse = a.service_rate >= b.service_rate && a.energy_total <= b.energy_total && a.violations <= b.violations;
    let better = a.service_rate > b.service_rate || a.energy_total < b.energy_total || a.violations < b.violations;
    no_worse && better
}

/// O(n²) non-dominated filter; returns the indices of surviving points.
pub fn brute_force_front(points: &[Metrics]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| strictly_better(q, &points[i])))
        .collect()
}

/// Points on a coarse grid so that ties and duplicates occur.
pub fn random_metrics(rng: &mut impl Rng) -> Metrics {
    Metrics {
        service_rate: f64::from(rng.gen_range(0..20)) / 20.0,
        energy_total: f64::from(rng.gen_range(0..30)) * 5.0,
        violations: f64::from(rng.gen_range(0..3)),
    }
}

/// Stand-in for a chat model, answering offline.
///
/// Free-text prompts get a fixed suggestion. Structured prompts get a
/// directive that divides the energy weight of the first group named in the
/// prompt by 10. `bad_replies` are served first to exercise reprompting.
#[derive(Debug, Default)]
pub struct FakeModel {
    pub requests: Vec<ChatRequest>,
    pub bad_replies: VecDeque<String>,
}

/// First token shaped like `g<digits>.<digits>`.
pub fn first_group_id(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    for start in 0..bytes.len() {
        if bytes[start] != b'g' || (start > 0 && bytes[start - 1].is_ascii_alphanumeric()) {
            continue;
        }
        let rest = &text[start + 1..];
        let gen_len = rest.bytes().take_while(u8::is_ascii_digit).count();
        if gen_len == 0 || rest.as_bytes().get(gen_len) != Some(&b'.') {
            continue;
        }
        let slot_len = rest[gen_len + 1..].bytes().take_while(u8::is_ascii_digit).count();
        if slot_len > 0 {
            return Some(text[start..start + 2 + gen_len + slot_len].to_string());
        }
    }
    None
}

impl ChatTransport for FakeModel {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError> {
        self.requests.push(request.clone());
        if request.response_format.is_none() {
            return Ok("The energy penalty dwarfs the service reward. Cut the energy weight by 10x.".into());
        }
        if let Some(bad) = self.bad_replies.pop_front() {
            return Ok(bad);
        }
        let prompt = &request.messages[0].content;
        let id = first_group_id(prompt).ok_or_else(|| ProposerError::Transport("no group in prompt".into()))?;
        Ok(format!(
            r#"{{"directives":[{{"group":"{id}","component":"w_ec","direction":"decrease","magnitude":10,"rationale":"energy dominates"}}]}}"#
        ))
    }
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
