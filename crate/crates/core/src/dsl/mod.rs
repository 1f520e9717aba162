//! Sandboxed reward-component expression language.
//!
//! A reward component is a single arithmetic expression over per-step
//! features. The language has no loops, no assignment and no I/O, so any
//! generated component can be parsed, probed and evaluated in isolation.

mod ast;
mod eval;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BinOp, Expr, Func, UnaryOp};
pub use eval::{evaluate, Binding, CompiledExpr};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    pub fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("undefined variable '{0}'")]
    UndefinedVariable(String),
    #[error("non-finite result: {0}")]
    NonFiniteResult(String),
    #[error("binding for '{0}' is not finite")]
    NonFiniteBinding(String),
}

/// Serialized form of a component: what a generator emits and what the
/// critic reviews. It may not parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDef {
    pub name: String,
    pub requirement_id: String,
    pub source: String,
    #[serde(default)]
    pub description: String,
}

impl ComponentDef {
    pub fn new(name: &str, requirement_id: &str, source: &str, description: &str) -> Self {
        Self {
            name: name.into(),
            requirement_id: requirement_id.into(),
            source: source.into(),
            description: description.into(),
        }
    }
}

/// A parsed reward term bound to one requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardComponent {
    pub name: String,
    pub requirement_id: String,
    pub source: String,
    pub expr: Expr,
    pub description: String,
}

impl RewardComponent {
    pub fn from_def(def: &ComponentDef) -> Result<Self, SyntaxError> {
        Ok(Self {
            name: def.name.clone(),
            requirement_id: def.requirement_id.clone(),
            source: def.source.clone(),
            expr: parse(&def.source)?,
            description: def.description.clone(),
        })
    }

    pub fn def(&self) -> ComponentDef {
        ComponentDef {
            name: self.name.clone(),
            requirement_id: self.requirement_id.clone(),
            source: self.source.clone(),
            description: self.description.clone(),
        }
    }
}

/// Two bindings where `good` represents better achievement of the
/// component's objective than `bad`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub good: Binding,
    pub bad: Binding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub probe: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub parses: bool,
    pub syntax_error: Option<String>,
    pub unknown_variables: Vec<String>,
    pub finite_on_probes: bool,
    /// `None` unless the component parses, uses only schema variables and
    /// evaluates finitely on every probe.
    pub direction_ok: Option<bool>,
    pub failures: Vec<ProbeFailure>,
}

impl ComponentReport {
    pub fn is_clean(&self) -> bool {
        self.parses
            && self.unknown_variables.is_empty()
            && self.finite_on_probes
            && self.direction_ok == Some(true)
    }
}

impl fmt::Display for ComponentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parses: {}", self.parses)?;
        if let Some(err) = &self.syntax_error {
            writeln!(f, "syntax error: {err}")?;
        }
        writeln!(f, "unknown variables: [{}]", self.unknown_variables.join(", "))?;
        writeln!(f, "finite on probes: {}", self.finite_on_probes)?;
        match self.direction_ok {
            Some(ok) => writeln!(f, "direction ok: {ok}")?,
            None => writeln!(f, "direction ok: not evaluated")?,
        }
        for failure in &self.failures {
            writeln!(f, "probe {}: {}", failure.probe, failure.message)?;
        }
        Ok(())
    }
}

/// Runs the per-component test harness. Faults are reported, never raised.
pub fn check_component(def: &ComponentDef, schema: &BTreeSet<String>, probes: &[ProbePair]) -> ComponentReport {
    let expr = match parse(&def.source) {
        Ok(expr) => expr,
        Err(err) => {
            return ComponentReport {
                parses: false,
                syntax_error: Some(err.to_string()),
                unknown_variables: Vec::new(),
                finite_on_probes: false,
                direction_ok: None,
                failures: Vec::new(),
            }
        }
    };
    let unknown_variables: Vec<String> = expr.free_vars().difference(schema).cloned().collect();

    let mut failures = Vec::new();
    let mut direction_ok = true;
    if unknown_variables.is_empty() {
        for (i, pair) in probes.iter().enumerate() {
            match (evaluate(&expr, &pair.good), evaluate(&expr, &pair.bad)) {
                (Ok(good), Ok(bad)) => {
                    if good < bad {
                        direction_ok = false;
                        failures.push(ProbeFailure {
                            probe: i,
                            message: format!("wrong direction: good probe scored {good}, bad probe scored {bad}"),
                        });
                    }
                }
                (good, bad) => {
                    for (side, res) in [("good", good), ("bad", bad)] {
                        if let Err(err) = res {
                            failures.push(ProbeFailure {
                                probe: i,
                                message: format!("{side} probe: {err}"),
                            });
                        }
                    }
                }
            }
        }
    }
    let finite_on_probes = unknown_variables.is_empty()
        && !failures.iter().any(|f| !f.message.starts_with("wrong direction"));
    ComponentReport {
        parses: true,
        syntax_error: None,
        direction_ok: finite_on_probes.then_some(direction_ok),
        unknown_variables,
        finite_on_probes,
        failures,
    }
}
