//! Proposers turn the analyzed state of a generation into the next step of
//! the search: directives in the default mode, whole weight vectors in the
//! baseline mode. A deterministic scripted proposer doubles as the test
//! oracle; the LLM proposer speaks the chat-completions wire format.

mod critic;
mod llm;
mod prompts;
mod scripted;
mod transport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use critic::{critic_review, edit_distance, CriticMode, CriticVerdict, FabricatedVariable};
pub use llm::{parse_critic_reply, parse_directives, parse_weight_vectors, LlmProposer, LlmSettings, MAX_ATTEMPTS};
pub use prompts::{render_prompt, PromptFields, TemplateId};
pub use scripted::{
    scripted_eureka_m, scripted_propose, ScriptedProposer, DOMINANCE_HIGH, DOMINANCE_LOW, EUREKA_JITTER, FINE_TUNE_STEP,
    NEAR_THRESHOLD,
};
pub use transport::{
    ChatMessage, ChatRequest, ChatTransport, HttpTransport, RecordingTransport, ReplayTransport, TranscriptEntry,
    API_KEY_ENV,
};

use crate::analyzer::{LogSummary, RenderMode};
use crate::dsl::ComponentDef;
use crate::requirements::RequirementSpec;
use crate::search::{AdjustmentDirective, HistoryEntry, SearchMode, WeightGroup};
use crate::weights::WeightVector;

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("prompt template '{template}' needs context field '{field}'")]
    MissingContextField { template: &'static str, field: &'static str },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("proposer failed after {attempts} attempts: {last_error}")]
    ProposerFailure { attempts: u32, last_error: String },
    #[error("component '{component}' cannot be fixed: {reason}")]
    UnfixableComponent { component: String, reason: String },
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("transcript i/o: {0}")]
    Io(String),
}

/// Everything a proposer may look at after one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerContext {
    /// The generation that was just evaluated.
    pub generation: u32,
    pub mode: SearchMode,
    pub render_mode: RenderMode,
    pub k: usize,
    pub seed: u64,
    pub env_description: String,
    pub components: Vec<ComponentDef>,
    pub requirements: Vec<RequirementSpec>,
    pub groups: Vec<WeightGroup>,
    pub summaries: Vec<LogSummary>,
    /// Rendered per-group text in `render_mode`, parallel to `groups`.
    pub summary_texts: Vec<String>,
    /// Up to the last three generations, oldest first.
    pub history: Vec<HistoryEntry>,
}

impl ProposerContext {
    pub fn component_for_requirement(&self, id: &str) -> Option<&str> {
        self.components
            .iter()
            .find(|c| c.requirement_id == id)
            .map(|c| c.name.as_str())
    }

    pub fn history_digest(&self) -> String {
        let mut out = String::new();
        for h in &self.history {
            let directives = if h.directives.is_empty() {
                "initial".to_string()
            } else {
                h.directives.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            };
            let margins = h
                .best_margins
                .iter()
                .map(|(id, m)| format!("{id} {m:+.4}"))
                .collect::<Vec<_>>()
                .join(", ");
            out.push_str(&format!(
                "generation {}: {directives} -> best margins [{margins}], {} passing\n",
                h.generation, h.passing
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    Directives(Vec<AdjustmentDirective>),
    Vectors(Vec<WeightVector>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerResponse {
    /// Stage-one free text.
    pub suggestions: String,
    pub proposal: Proposal,
}

pub trait Proposer {
    fn propose(&mut self, ctx: &ProposerContext) -> Result<ProposerResponse, ProposerError>;
}
