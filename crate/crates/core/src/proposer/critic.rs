//! Reward critic: turns a failing component report into a revised source.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::llm::parse_critic_reply;
use super::prompts::{render_prompt, PromptFields, TemplateId};
use super::transport::{ChatMessage, ChatRequest, ChatTransport};
use super::ProposerError;
use crate::dsl::{check_component, tokenize, ComponentDef, ComponentReport, ProbePair, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricatedVariable {
    pub name: String,
    /// What the user is asked to supply.
    #[serde(alias = "requested_description")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub component: String,
    /// The revision (or the original, when nothing was wrong) passes every
    /// check.
    pub accepted: bool,
    pub revised_source: Option<String>,
    pub fabricated_variables: Vec<FabricatedVariable>,
    pub explanation: String,
}

pub enum CriticMode<'a> {
    /// Fixes sign flips and misspelled variables; anything else is
    /// unfixable.
    Scripted,
    Llm {
        transport: &'a mut dyn ChatTransport,
        model: &'a str,
    },
}

/// Levenshtein distance over bytes.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Largest edit distance accepted as a misspelling of a schema variable.
fn max_typo_distance(name: &str) -> usize {
    (name.len() / 3).max(2)
}

/// Closest schema variable; ties go to the lexicographically smaller name.
fn nearest<'s>(name: &str, schema: &'s BTreeSet<String>) -> Option<(&'s str, usize)> {
    schema
        .iter()
        .map(|s| (s.as_str(), edit_distance(name, s)))
        .min_by_key(|(_, d)| *d)
}

/// Replaces variable tokens (identifiers not followed by `(`), keeping the
/// rest of the source text untouched.
fn substitute(source: &str, from: &str, to: &str) -> String {
    let Ok(tokens) = tokenize(source) else {
        return source.to_string();
    };
    let mut out = String::with_capacity(source.len());
    let mut last = 0;
    for (i, t) in tokens.iter().enumerate() {
        if let TokenKind::Ident(name) = &t.kind {
            let is_call = matches!(tokens.get(i + 1).map(|n| &n.kind), Some(TokenKind::LParen));
            if name == from && !is_call {
                out.push_str(&source[last..t.offset]);
                out.push_str(to);
                last = t.offset + t.len;
            }
        }
    }
    out.push_str(&source[last..]);
    out
}

fn scripted_revision(
    def: &ComponentDef,
    report: &ComponentReport,
    schema: &BTreeSet<String>,
) -> Result<(String, Vec<FabricatedVariable>, String), ProposerError> {
    let unfixable = |reason: String| ProposerError::UnfixableComponent {
        component: def.name.clone(),
        reason,
    };
    if !report.parses {
        return Err(unfixable(report.syntax_error.clone().unwrap_or_else(|| "does not parse".into())));
    }
    if !report.unknown_variables.is_empty() {
        let mut source = def.source.clone();
        let mut fabricated = Vec::new();
        let mut notes = Vec::new();
        for name in &report.unknown_variables {
            match nearest(name, schema) {
                Some((fix, d)) if d <= max_typo_distance(name) => {
                    source = substitute(&source, name, fix);
                    notes.push(format!("replaced unknown '{name}' with '{fix}'"));
                    fabricated.push(FabricatedVariable {
                        name: name.clone(),
                        description: format!("not provided by the environment; substituted with '{fix}'"),
                    });
                }
                _ => return Err(unfixable(format!("variable '{name}' has no close match in the schema"))),
            }
        }
        return Ok((source, fabricated, notes.join("; ")));
    }
    if !report.finite_on_probes {
        let detail = report.failures.first().map_or(String::new(), |f| f.message.clone());
        return Err(unfixable(format!("non-finite on probes: {detail}")));
    }
    if report.direction_ok == Some(false) {
        return Ok((
            format!("-({})", def.source),
            Vec::new(),
            "scored the bad probe above the good one; negated".into(),
        ));
    }
    Err(unfixable("no known fault to fix".into()))
}

/// Reviews one component. A clean report is accepted without revision;
/// otherwise the revision is re-checked and accepted only if clean.
pub fn critic_review(
    def: &ComponentDef,
    report: &ComponentReport,
    schema: &BTreeSet<String>,
    probes: &[ProbePair],
    mode: CriticMode<'_>,
) -> Result<CriticVerdict, ProposerError> {
    if report.is_clean() {
        return Ok(CriticVerdict {
            component: def.name.clone(),
            accepted: true,
            revised_source: None,
            fabricated_variables: Vec::new(),
            explanation: "all checks pass".into(),
        });
    }
    let (revised, fabricated, explanation) = match mode {
        CriticMode::Scripted => scripted_revision(def, report, schema)?,
        CriticMode::Llm { transport, model } => {
            let names: Vec<&str> = schema.iter().map(String::as_str).collect();
            let prompt = render_prompt(
                TemplateId::Critic,
                &PromptFields {
                    component: Some(def),
                    report: Some(report),
                    schema: Some(&names),
                    ..PromptFields::default()
                },
            )?;
            let reply = transport.complete(&ChatRequest {
                model: model.to_string(),
                messages: vec![ChatMessage::user(prompt)],
                temperature: 0.0,
                response_format: Some(serde_json::json!({"type": "json_object"})),
            })?;
            let (revised, fabricated, explanation) = parse_critic_reply(&reply)?;
            let revised = revised.ok_or_else(|| ProposerError::UnfixableComponent {
                component: def.name.clone(),
                reason: format!("critic returned no revision: {explanation}"),
            })?;
            (revised, fabricated, explanation)
        }
    };
    let revised_def = ComponentDef {
        source: revised.clone(),
        ..def.clone()
    };
    let accepted = check_component(&revised_def, schema, probes).is_clean();
    Ok(CriticVerdict {
        component: def.name.clone(),
        accepted,
        revised_source: Some(revised),
        fabricated_variables: fabricated,
        explanation,
    })
}
