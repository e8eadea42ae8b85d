//! Chat-completion endpoints: an HTTP client speaking the common
//! `/chat/completions` wire format, plus offline stand-ins.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::ChatMessage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response document: {0}")]
    Decode(String),
    #[error("recorded session exhausted after {0} replies")]
    ReplayExhausted(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub usage: Option<TokenUsage>,
}

impl ChatReply {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            usage: None,
        }
    }
}

pub trait ChatEndpoint: Send {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<ChatReply, TransportError>;
}

/// Settings for the HTTP endpoint. Sampling fields left as `None` are not
/// sent, so the server's defaults apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSettings {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Retries on connection errors, HTTP 429 and 5xx.
    #[serde(default = "default_transport_retries")]
    pub transport_retries: u32,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_transport_retries() -> u32 {
    3
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo-0613".into(),
            api_key_env: default_key_env(),
            temperature: None,
            max_tokens: None,
            timeout_secs: default_timeout(),
            transport_retries: default_transport_retries(),
        }
    }
}

pub struct HttpChatClient {
    settings: ChatSettings,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    backoff: Duration,
}

impl HttpChatClient {
    /// Reads the API key from `settings.api_key_env`. A missing key is an
    /// error unless the base URL is a loopback address.
    pub fn from_env(settings: ChatSettings) -> Result<Self, TransportError> {
        let key = std::env::var(&settings.api_key_env).ok();
        let local = settings.base_url.contains("://127.0.0.1")
            || settings.base_url.contains("://localhost");
        if key.is_none() && !local {
            return Err(TransportError::MissingApiKey(settings.api_key_env.clone()));
        }
        Self::new(settings, key)
    }

    pub fn new(settings: ChatSettings, api_key: Option<String>) -> Result<Self, TransportError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        Ok(Self {
            settings,
            api_key,
            http,
            backoff: Duration::from_millis(500),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let mut body = json!({
            "model": self.settings.model,
            "messages": messages,
        });
        if let Some(t) = self.settings.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.settings.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.settings.base_url.trim_end_matches('/')
        )
    }

    fn send_once(&self, body: &Value) -> Result<ChatReply, (TransportError, bool)> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| (TransportError::Request(e.to_string()), true))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (TransportError::Request(e.to_string()), true))?;
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            return Err((
                TransportError::Status {
                    status: status.as_u16(),
                    body: text,
                },
                retry,
            ));
        }
        decode_reply(&text).map_err(|e| (e, false))
    }
}

/// Pulls the assistant text (and usage, if present) out of a
/// chat-completions response document.
pub fn decode_reply(body: &str) -> Result<ChatReply, TransportError> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    let content = doc
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Decode("missing choices[0].message.content".into()))?
        .to_string();
    let usage = doc.get("usage").map(|u| TokenUsage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u
            .get("completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    });
    Ok(ChatReply { content, usage })
}

impl ChatEndpoint for HttpChatClient {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<ChatReply, TransportError> {
        let body = self.request_body(messages);
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(reply) => return Ok(reply),
                Err((err, retryable)) => {
                    if !retryable || attempt >= self.settings.transport_retries {
                        return Err(err);
                    }
                    log::warn!("chat request failed ({err}); retrying");
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Re-serves stored assistant texts byte-for-byte, in order.
#[derive(Debug, Clone, Default)]
pub struct ReplayEndpoint {
    replies: VecDeque<String>,
    served: usize,
}

impl ReplayEndpoint {
    pub fn new(replies: impl IntoIterator<Item = String>) -> Self {
        Self {
            replies: replies.into_iter().collect(),
            served: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl ChatEndpoint for ReplayEndpoint {
    fn complete(&mut self, _messages: &[ChatMessage]) -> Result<ChatReply, TransportError> {
        let reply = self
            .replies
            .pop_front()
            .ok_or(TransportError::ReplayExhausted(self.served))?;
        self.served += 1;
        Ok(ChatReply::text(reply))
    }
}

/// Endpoint backed by a closure over the outgoing conversation; handy for
/// tests and synthetic model behaviour.
pub struct FnEndpoint<F>(pub F);

impl<F> ChatEndpoint for FnEndpoint<F>
where
    F: FnMut(&[ChatMessage]) -> Result<ChatReply, TransportError> + Send,
{
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<ChatReply, TransportError> {
        (self.0)(messages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_chat_completion_document() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Position: [1, 2]"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;
        let reply = decode_reply(body).unwrap();
        assert_eq!(reply.content, "Position: [1, 2]");
        assert_eq!(
            reply.usage,
            Some(TokenUsage {
                prompt_tokens: 12,
                completion_tokens: 5
            })
        );
        assert!(matches!(decode_reply("{}"), Err(TransportError::Decode(_))));
        assert!(matches!(
            decode_reply("not json"),
            Err(TransportError::Decode(_))
        ));
    }

    #[test]
    fn request_body_omits_unset_sampling() {
        let client = HttpChatClient::new(ChatSettings::default(), None).unwrap();
        let body = client.request_body(&[ChatMessage::user("hi")]);
        assert_eq!(body["model"], "gpt-3.5-turbo-0613");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert!(body.get("temperature").is_none());

        let settings = ChatSettings {
            temperature: Some(0.7),
            ..ChatSettings::default()
        };
        let client = HttpChatClient::new(settings, None).unwrap();
        assert_eq!(client.request_body(&[])["temperature"], 0.7);
    }

    #[test]
    fn replay_serves_in_order_then_errors() {
        let mut r = ReplayEndpoint::new(["a".to_string(), "b".to_string()]);
        assert_eq!(r.complete(&[]).unwrap().content, "a");
        assert_eq!(r.complete(&[]).unwrap().content, "b");
        assert_eq!(
            r.complete(&[]).unwrap_err(),
            TransportError::ReplayExhausted(2)
        );
    }
}
