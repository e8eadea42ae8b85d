use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::client::{ChatEndpoint, TransportError};
use super::parse::{parse_response, ParseError};
use super::prompts::{
    build_initial_prompt, build_round_prompt, Personality, PromptError, PromptTemplateSet,
};
use super::ChatMessage;
use crate::sim::{
    AgentId, AgentState, BackendError, Decision, DecisionMaker, DecisionTrace, MotionLimits,
    WorldState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("no parseable response after {attempts} attempts (last: {last})")]
    Exhausted { attempts: u32, last: ParseError },
    #[error("agent {0} is not in the world")]
    UnknownAgent(AgentId),
}

impl From<LlmError> for BackendError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Transport(t) => BackendError::Transport(t.to_string()),
            LlmError::Exhausted { attempts, last } => BackendError::Exhausted {
                attempts,
                last: last.to_string(),
            },
            other => BackendError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustionPolicy {
    HoldPosition,
    FailEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub on_exhaustion: ExhaustionPolicy,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            on_exhaustion: ExhaustionPolicy::HoldPosition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryWindow {
    #[default]
    Full,
    /// The opening message plus the most recent `rounds` exchanges.
    Sliding { rounds: usize },
}

/// One agent's private message history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub agent_id: AgentId,
    pub messages: Vec<ChatMessage>,
    pub window: HistoryWindow,
}

impl ConversationState {
    pub fn new(agent_id: AgentId, window: HistoryWindow) -> Self {
        Self {
            agent_id,
            messages: Vec::new(),
            window,
        }
    }

    /// Messages to send, after applying the history window.
    pub fn outgoing(&self) -> Vec<ChatMessage> {
        match self.window {
            HistoryWindow::Full => self.messages.clone(),
            HistoryWindow::Sliding { rounds } => {
                let Some((first, rest)) = self.messages.split_first() else {
                    return Vec::new();
                };
                let keep = (2 * rounds).min(rest.len());
                std::iter::once(first.clone())
                    .chain(rest[rest.len() - keep..].iter().cloned())
                    .collect()
            }
        }
    }
}

/// Everything needed to render this agent's prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub templates: PromptTemplateSet,
    pub shape: String,
    pub limits: MotionLimits,
    pub personality: Option<Personality>,
    /// Append others' velocities to round prompts.
    pub velocities: bool,
}

const NO_TEXT: &str = "(empty response)";

/// One decision for one agent. The first call sends the opening prompt; each
/// later call sends a round update. Replies that fail to parse trigger a
/// corrective message restating the output format, up to
/// `policy.max_attempts` requests. Only the accepted exchange is kept in the
/// conversation.
pub fn llm_decide(
    conv: &mut ConversationState,
    client: &mut dyn ChatEndpoint,
    me: &AgentState,
    others: &[&AgentState],
    ctx: &PromptContext,
    policy: &RetryPolicy,
) -> Result<Decision, LlmError> {
    let prompt = if conv.messages.is_empty() {
        build_initial_prompt(
            &ctx.templates,
            me,
            others,
            &ctx.limits,
            &ctx.shape,
            ctx.personality,
        )?
    } else {
        vec![build_round_prompt(
            &ctx.templates,
            me,
            others,
            ctx.velocities,
        )?]
    };
    let mut outgoing = conv.outgoing();
    outgoing.extend(prompt.iter().cloned());

    let attempts = policy.max_attempts.max(1);
    let mut trace = DecisionTrace::default();
    let mut last_error = ParseError::Empty;
    for attempt in 1..=attempts {
        let reply = client.complete(&outgoing)?;
        if let Some(u) = reply.usage {
            trace.prompt_tokens += u.prompt_tokens;
            trace.completion_tokens += u.completion_tokens;
        }
        trace.raw_responses.push(reply.content.clone());
        match parse_response(&reply.content) {
            Ok(parsed) => {
                conv.messages.extend(prompt);
                conv.messages.push(ChatMessage::assistant(reply.content));
                trace.excess_precision = parsed.excess_precision;
                return Ok(Decision {
                    target: parsed.target,
                    reasoning: parsed.reasoning,
                    trace,
                });
            }
            Err(err) => {
                log::debug!("agent {} attempt {attempt}: {err}", me.id);
                trace.parse_failures.push(err.kind().to_string());
                last_error = err;
                if attempt < attempts {
                    outgoing.push(ChatMessage::assistant(non_empty(&reply.content)));
                    outgoing.push(ChatMessage::user(ctx.templates.output_format.clone()));
                }
            }
        }
    }

    match policy.on_exhaustion {
        ExhaustionPolicy::FailEpisode => Err(LlmError::Exhausted {
            attempts,
            last: last_error,
        }),
        ExhaustionPolicy::HoldPosition => {
            let last = trace.raw_responses.last().map(String::as_str).unwrap_or("");
            conv.messages.extend(prompt);
            conv.messages.push(ChatMessage::assistant(non_empty(last)));
            trace.held = true;
            Ok(Decision {
                target: me.position,
                reasoning: format!(
                    "held position after {attempts} unparseable responses ({last_error})"
                ),
                trace,
            })
        }
    }
}

fn non_empty(text: &str) -> String {
    if text.trim().is_empty() {
        NO_TEXT.to_string()
    } else {
        text.to_string()
    }
}

/// A chat-completion backed agent.
pub struct LlmAgent {
    pub conversation: ConversationState,
    pub context: PromptContext,
    pub policy: RetryPolicy,
    endpoint: Box<dyn ChatEndpoint>,
    label: String,
}

impl LlmAgent {
    pub fn new(
        agent_id: AgentId,
        endpoint: Box<dyn ChatEndpoint>,
        context: PromptContext,
        policy: RetryPolicy,
        window: HistoryWindow,
        label: impl Into<String>,
    ) -> Self {
        Self {
            conversation: ConversationState::new(agent_id, window),
            context,
            policy,
            endpoint,
            label: label.into(),
        }
    }
}

impl DecisionMaker for LlmAgent {
    fn decide(
        &mut self,
        id: AgentId,
        world: &WorldState,
        limits: &MotionLimits,
    ) -> Result<Decision, BackendError> {
        let me = world.agent(id).ok_or(LlmError::UnknownAgent(id))?;
        let others = world.others(id);
        let mut ctx = self.context.clone();
        ctx.limits = *limits;
        llm_decide(
            &mut self.conversation,
            self.endpoint.as_mut(),
            me,
            &others,
            &ctx,
            &self.policy,
        )
        .map_err(BackendError::from)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
