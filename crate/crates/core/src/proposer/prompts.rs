//! Prompt templates. Rendering is deterministic; each template names the
//! context fields it needs and fails when one is absent.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ProposerContext, ProposerError};
use crate::dsl::{ComponentDef, ComponentReport};
use crate::requirements::RequirementSpec;
use crate::search::WeightGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    DescribeEnhance,
    GenComponents,
    Critic,
    Suggest,
    EmitWeights,
    EurekaM,
}

impl TemplateId {
    pub fn name(self) -> &'static str {
        match self {
            TemplateId::DescribeEnhance => "describe_enhance",
            TemplateId::GenComponents => "gen_components",
            TemplateId::Critic => "critic",
            TemplateId::Suggest => "suggest",
            TemplateId::EmitWeights => "emit_weights",
            TemplateId::EurekaM => "eureka_m",
        }
    }
}

/// Inputs a template may draw on. Unset fields are `None`.
#[derive(Debug, Clone, Default)]
pub struct PromptFields<'a> {
    pub env_description: Option<&'a str>,
    pub components: Option<&'a [ComponentDef]>,
    pub requirements: Option<&'a [RequirementSpec]>,
    pub schema: Option<&'a [&'a str]>,
    pub groups: Option<&'a [WeightGroup]>,
    pub summary_texts: Option<&'a [String]>,
    pub history: Option<String>,
    pub suggestions: Option<&'a str>,
    pub component: Option<&'a ComponentDef>,
    pub report: Option<&'a ComponentReport>,
    pub k: Option<usize>,
    pub generation: Option<u32>,
}

impl ProposerContext {
    pub fn prompt_fields(&self) -> PromptFields<'_> {
        PromptFields {
            env_description: Some(&self.env_description),
            components: Some(&self.components),
            requirements: Some(&self.requirements),
            groups: Some(&self.groups),
            summary_texts: Some(&self.summary_texts),
            history: Some(self.history_digest()),
            k: Some(self.k),
            generation: Some(self.generation),
            ..PromptFields::default()
        }
    }
}

const GRAMMAR: &str = "\
expr   := cmp
cmp    := sum (('<' | '<=' | '>' | '>=' | '==') sum)*
sum    := term (('+' | '-') term)*
term   := unary (('*' | '/') unary)*
unary  := '-' unary | atom
atom   := number | name | name '(' args ')' | '(' expr ')'
functions: min(a,b) max(a,b) abs(x) exp(x) clip(x,lo,hi) if(cond,a,b)
comparisons yield 1.0 or 0.0; division by zero is an error";

fn need<T>(value: Option<T>, template: TemplateId, field: &'static str) -> Result<T, ProposerError> {
    value.ok_or(ProposerError::MissingContextField {
        template: template.name(),
        field,
    })
}

fn write_components(out: &mut String, components: &[ComponentDef]) {
    out.push_str("Reward components:\n");
    for c in components {
        let _ = writeln!(out, "- {} (requirement {}): {}", c.name, c.requirement_id, c.source);
    }
}

fn write_requirements(out: &mut String, requirements: &[RequirementSpec]) {
    out.push_str("Requirements:\n");
    for r in requirements {
        let _ = writeln!(out, "- {}: {}", r.id, r);
    }
}

fn write_weights(out: &mut String, groups: &[WeightGroup]) {
    out.push_str("Current weight groups:\n");
    for g in groups {
        let weights = g
            .weights
            .0
            .iter()
            .map(|(n, w)| format!("{n}={w:.6}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "- {}: {weights}", g.id);
    }
}

pub fn render_prompt(template: TemplateId, f: &PromptFields<'_>) -> Result<String, ProposerError> {
    let mut out = String::new();
    match template {
        TemplateId::DescribeEnhance => {
            let description = need(f.env_description, template, "env_description")?;
            out.push_str(
                "Rewrite the task description below so a reward designer can act on it. \
                 Keep every number, name the observable quantities, and state each objective \
                 as a measurable target. Reply with the rewritten description only.\n\n",
            );
            let _ = writeln!(out, "Description:\n{description}");
        }
        TemplateId::GenComponents => {
            let description = need(f.env_description, template, "env_description")?;
            let requirements = need(f.requirements, template, "requirements")?;
            let schema = need(f.schema, template, "schema")?;
            let _ = writeln!(out, "Task:\n{description}\n");
            write_requirements(&mut out, requirements);
            let _ = writeln!(out, "\nAvailable per-step variables: {}", schema.join(", "));
            let _ = writeln!(out, "\nExpression grammar:\n{GRAMMAR}\n");
            out.push_str(
                "Write exactly one reward component per requirement. Larger values must mean \
                 better achievement. If a needed quantity is missing, use a new variable name \
                 and describe it; the user will supply it. Reply as JSON: \
                 {\"components\":[{\"name\":..,\"requirement_id\":..,\"source\":..,\"description\":..}]}\n",
            );
        }
        TemplateId::Critic => {
            let component = need(f.component, template, "component")?;
            let report = need(f.report, template, "report")?;
            let schema = need(f.schema, template, "schema")?;
            let _ = writeln!(
                out,
                "Component '{}' for requirement '{}' failed its tests.\nSource: {}\n",
                component.name, component.requirement_id, component.source
            );
            let _ = writeln!(out, "Test report:\n{report}");
            let _ = writeln!(out, "Available per-step variables: {}", schema.join(", "));
            let _ = writeln!(out, "\nExpression grammar:\n{GRAMMAR}\n");
            out.push_str(
                "Fix the component. Reply as JSON: {\"revised_source\":..,\
                 \"fabricated_variables\":[{\"name\":..,\"description\":..}],\"explanation\":..}\n",
            );
        }
        TemplateId::Suggest => {
            let description = need(f.env_description, template, "env_description")?;
            let components = need(f.components, template, "components")?;
            let requirements = need(f.requirements, template, "requirements")?;
            let texts = need(f.summary_texts, template, "summary_texts")?;
            let history = need(f.history.as_deref(), template, "history")?;
            let k = need(f.k, template, "k")?;
            let generation = need(f.generation, template, "generation")?;
            let _ = writeln!(out, "Task:\n{description}\n");
            write_components(&mut out, components);
            write_requirements(&mut out, requirements);
            let _ = writeln!(out, "\nTraining results for generation {generation}:");
            for text in texts {
                let _ = writeln!(out, "\n{text}");
            }
            if !history.is_empty() {
                let _ = writeln!(out, "Recent history:\n{history}");
            }
            let _ = writeln!(
                out,
                "Diagnose why requirements fail and suggest up to {k} weight adjustments. For each, \
                 name the starting group, the component, the direction (increase, decrease or \
                 fine-tune) and a multiplier. Larger multipliers suit larger imbalances."
            );
        }
        TemplateId::EmitWeights => {
            let suggestions = need(f.suggestions, template, "suggestions")?;
            let groups = need(f.groups, template, "groups")?;
            let _ = writeln!(out, "Suggestions:\n{suggestions}\n");
            write_weights(&mut out, groups);
            out.push_str(
                "\nEmit the suggested adjustments as JSON: {\"directives\":[{\"group\":..,\"component\":..,\
                 \"direction\":\"increase|decrease|fine-tune\",\"magnitude\":..,\"sign\":\"up|down\"}]}. \
                 increase/decrease need magnitude >= 1; fine-tune needs 1 <= magnitude <= 1.5.\n",
            );
        }
        TemplateId::EurekaM => {
            let description = need(f.env_description, template, "env_description")?;
            let components = need(f.components, template, "components")?;
            let requirements = need(f.requirements, template, "requirements")?;
            let texts = need(f.summary_texts, template, "summary_texts")?;
            let k = need(f.k, template, "k")?;
            let _ = writeln!(out, "Task:\n{description}\n");
            write_components(&mut out, components);
            write_requirements(&mut out, requirements);
            out.push_str("\nReward functions tried so far and their training logs:\n");
            for text in texts {
                let _ = writeln!(out, "\n{text}");
            }
            let _ = writeln!(
                out,
                "Write {k} improved reward functions as positive weight vectors over the components. \
                 Reply as JSON: {{\"weights\":[{{\"<component>\":<weight>, ...}}, ...]}}"
            );
        }
    }
    Ok(out)
}
