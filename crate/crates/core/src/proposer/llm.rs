//! Two-stage LLM proposer: free-text suggestions, then schema-constrained
//! JSON that is validated before anything reaches the search.

use serde::Deserialize;
use serde_json::{json, Value};

use super::prompts::{render_prompt, TemplateId};
use super::transport::{ChatMessage, ChatRequest, ChatTransport};
use super::{FabricatedVariable, Proposal, Proposer, ProposerContext, ProposerError, ProposerResponse};
use crate::search::{AdjustmentDirective, Direction, SearchMode, Sign, WeightGroup};
use crate::weights::WeightVector;

/// Stage-two attempts (first try plus reprompts) before giving up.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    pub model: String,
    #[serde(default = "default_suggest_temperature")]
    pub suggest_temperature: f64,
    #[serde(default)]
    pub emit_temperature: f64,
}

fn default_suggest_temperature() -> f64 {
    0.7
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            suggest_temperature: default_suggest_temperature(),
            emit_temperature: 0.0,
        }
    }
}

/// The slice between the first `{` and the last `}`, so replies wrapped in
/// prose or code fences still parse.
fn json_body(text: &str) -> Result<&str, ProposerError> {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => Ok(&text[a..=b]),
        _ => Err(ProposerError::Schema("reply contains no JSON object".into())),
    }
}

#[derive(Deserialize)]
struct RawDirectives {
    directives: Vec<RawDirective>,
}

#[derive(Deserialize)]
struct RawDirective {
    group: String,
    component: String,
    direction: String,
    magnitude: f64,
    #[serde(default)]
    sign: Option<String>,
    #[serde(default)]
    rationale: Option<String>,
}

/// Maps a component name from the reply onto a known component; a `w_`
/// prefix is accepted because weights are often written that way.
fn resolve_component(name: &str, known: &[&str]) -> Option<String> {
    known
        .iter()
        .find(|k| **k == name)
        .or_else(|| name.strip_prefix("w_").and_then(|bare| known.iter().find(|k| **k == bare)))
        .map(|k| k.to_string())
}

/// Parses and validates stage-two directive JSON against the current groups.
pub fn parse_directives(text: &str, groups: &[WeightGroup]) -> Result<Vec<AdjustmentDirective>, ProposerError> {
    let raw: RawDirectives =
        serde_json::from_str(json_body(text)?).map_err(|e| ProposerError::Schema(format!("bad directive JSON: {e}")))?;
    let mut out = Vec::with_capacity(raw.directives.len());
    for (i, r) in raw.directives.into_iter().enumerate() {
        let direction = match r.direction.to_ascii_lowercase().as_str() {
            "increase" => Direction::Increase,
            "decrease" => Direction::Decrease,
            "fine-tune" | "fine_tune" | "finetune" => Direction::FineTune,
            other => {
                return Err(ProposerError::Schema(format!(
                    "directive {i}: direction '{other}' is not one of increase, decrease, fine-tune"
                )))
            }
        };
        let sign = match r.sign.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("up") | Some("+") => Sign::Up,
            Some("down") | Some("-") => Sign::Down,
            Some(other) => return Err(ProposerError::Schema(format!("directive {i}: sign '{other}' is not up or down"))),
        };
        let group = groups
            .iter()
            .find(|g| g.id == r.group)
            .ok_or_else(|| ProposerError::Schema(format!("directive {i}: unknown group '{}'", r.group)))?;
        let known: Vec<&str> = group.weights.names().collect();
        let component = resolve_component(&r.component, &known).ok_or_else(|| {
            ProposerError::Schema(format!("directive {i}: unknown component '{}'", r.component))
        })?;
        let d = AdjustmentDirective::new(&group.id, &component, direction, r.magnitude)
            .with_sign(sign)
            .with_rationale(r.rationale.unwrap_or_default());
        d.validate_magnitude()
            .map_err(|e| ProposerError::Schema(format!("directive {i}: {e}")))?;
        out.push(d);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawVectors {
    weights: Vec<serde_json::Map<String, Value>>,
}

/// Parses baseline-mode JSON: exactly `k` positive weight vectors over the
/// given component names.
pub fn parse_weight_vectors(text: &str, components: &[&str], k: usize) -> Result<Vec<WeightVector>, ProposerError> {
    let raw: RawVectors =
        serde_json::from_str(json_body(text)?).map_err(|e| ProposerError::Schema(format!("bad weights JSON: {e}")))?;
    if raw.weights.len() != k {
        return Err(ProposerError::Schema(format!("expected {k} weight vectors, got {}", raw.weights.len())));
    }
    raw.weights
        .into_iter()
        .enumerate()
        .map(|(i, map)| {
            let mut v = WeightVector::default();
            for (name, value) in map {
                let name = resolve_component(&name, components)
                    .ok_or_else(|| ProposerError::Schema(format!("vector {i}: unknown component '{name}'")))?;
                let w = value
                    .as_f64()
                    .filter(|w| w.is_finite() && *w > 0.0)
                    .ok_or_else(|| ProposerError::Schema(format!("vector {i}: weight {name} must be a positive number")))?;
                v.0.insert(name, w);
            }
            if v.len() != components.len() {
                return Err(ProposerError::Schema(format!(
                    "vector {i}: expected weights for [{}]",
                    components.join(", ")
                )));
            }
            Ok(v)
        })
        .collect()
}

#[derive(Deserialize)]
struct RawCritic {
    revised_source: Option<String>,
    #[serde(default)]
    fabricated_variables: Vec<FabricatedVariable>,
    #[serde(default)]
    explanation: String,
}

/// Parses a critic reply into (revised source, fabricated variables,
/// explanation).
pub fn parse_critic_reply(text: &str) -> Result<(Option<String>, Vec<FabricatedVariable>, String), ProposerError> {
    let raw: RawCritic =
        serde_json::from_str(json_body(text)?).map_err(|e| ProposerError::Schema(format!("bad critic JSON: {e}")))?;
    Ok((raw.revised_source, raw.fabricated_variables, raw.explanation))
}

fn directive_schema() -> Value {
    json!({
        "type": "json_schema",
        "json_schema": {
            "name": "directives",
            "strict": true,
            "schema": {
                "type": "object",
                "additionalProperties": false,
                "required": ["directives"],
                "properties": {
                    "directives": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": false,
                            "required": ["group", "component", "direction", "magnitude", "sign"],
                            "properties": {
                                "group": {"type": "string"},
                                "component": {"type": "string"},
                                "direction": {"type": "string", "enum": ["increase", "decrease", "fine-tune"]},
                                "magnitude": {"type": "number"},
                                "sign": {"type": "string", "enum": ["up", "down"]}
                            }
                        }
                    }
                }
            }
        }
    })
}

fn json_object_format() -> Value {
    json!({"type": "json_object"})
}

pub struct LlmProposer<T> {
    transport: T,
    settings: LlmSettings,
}

impl<T: ChatTransport> LlmProposer<T> {
    pub fn new(transport: T, settings: LlmSettings) -> Self {
        Self { transport, settings }
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Sends a single-turn prompt and returns the reply.
    pub fn ask(&mut self, prompt: String, temperature: f64, format: Option<Value>) -> Result<String, ProposerError> {
        self.transport.complete(&ChatRequest {
            model: self.settings.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            response_format: format,
        })
    }

    /// Asks for structured output, reprompting with the validation error
    /// until it parses or [`MAX_ATTEMPTS`] replies were rejected.
    fn ask_validated<R>(
        &mut self,
        prompt: String,
        format: Value,
        parse: impl Fn(&str) -> Result<R, ProposerError>,
    ) -> Result<R, ProposerError> {
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut last_error = String::new();
        for _ in 0..MAX_ATTEMPTS {
            let reply = self.transport.complete(&ChatRequest {
                model: self.settings.model.clone(),
                messages: messages.clone(),
                temperature: self.settings.emit_temperature,
                response_format: Some(format.clone()),
            })?;
            match parse(&reply) {
                Ok(parsed) => return Ok(parsed),
                Err(e) => {
                    last_error = e.to_string();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your reply was rejected: {last_error}. Reply again with corrected JSON only."
                    )));
                }
            }
        }
        Err(ProposerError::ProposerFailure {
            attempts: MAX_ATTEMPTS,
            last_error,
        })
    }
}

impl<T: ChatTransport> Proposer for LlmProposer<T> {
    fn propose(&mut self, ctx: &ProposerContext) -> Result<ProposerResponse, ProposerError> {
        let fields = ctx.prompt_fields();
        match ctx.mode {
            SearchMode::Erfsl => {
                let suggest = render_prompt(TemplateId::Suggest, &fields)?;
                let suggestions = self.ask(suggest, self.settings.suggest_temperature, None)?;
                let mut emit_fields = fields.clone();
                emit_fields.suggestions = Some(&suggestions);
                let emit = render_prompt(TemplateId::EmitWeights, &emit_fields)?;
                let groups = ctx.groups.clone();
                let directives = self.ask_validated(emit, directive_schema(), |reply| parse_directives(reply, &groups))?;
                Ok(ProposerResponse {
                    suggestions,
                    proposal: Proposal::Directives(directives),
                })
            }
            SearchMode::EurekaM => {
                let prompt = render_prompt(TemplateId::EurekaM, &fields)?;
                let names: Vec<&str> = ctx.components.iter().map(|c| c.name.as_str()).collect();
                let vectors = self.ask_validated(prompt, json_object_format(), |reply| {
                    parse_weight_vectors(reply, &names, ctx.k)
                })?;
                Ok(ProposerResponse {
                    suggestions: String::new(),
                    proposal: Proposal::Vectors(vectors),
                })
            }
        }
    }
}
