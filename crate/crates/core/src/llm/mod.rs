//! Language-model agents: prompt construction, per-agent conversations,
//! chat endpoints and response parsing.

mod agent;
pub mod client;
pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};

pub use agent::{
    llm_decide, ConversationState, ExhaustionPolicy, HistoryWindow, LlmAgent, LlmError,
    PromptContext, RetryPolicy,
};
pub use client::{
    decode_reply, ChatEndpoint, ChatReply, ChatSettings, FnEndpoint, HttpChatClient,
    ReplayEndpoint, TokenUsage, TransportError,
};
pub use parse::{parse_response, parse_response_bytes, DecisionResponse, ParseError};
pub use prompts::{
    build_initial_prompt, build_round_prompt, Personality, PromptError, PromptTemplateSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}
