use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::parse::parse_agent_output;
use super::{AgentDecision, MarketState, Prediction, PromptBundle, Role};
use crate::portfolio::Allocation;

pub const FORMAT_REMINDER: &str = "Your previous reply could not be used. Reply again with exactly one JSON object \
of the form {\"state\": \"bullish\" | \"bearish\" | \"neutral\", \"allocation_btc_pct\": <0-100>, \"reasoning\": \"<non-empty>\"}.";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint rejected request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("no scripted response for {0}")]
    NoScript(String),
    #[error("cannot load script {path}: {message}")]
    Script { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatClientConfig {
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    /// Name of the environment variable holding the bearer token; `None` sends no auth header.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_model() -> String {
    "deepseek-r1".into()
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

impl ChatClientConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: default_model(),
            api_key_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            temperature: 0.0,
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    /// Transport attempts spent on this reply.
    pub attempts: u32,
}

/// Anything that can answer a chat conversation for a given role and day.
/// Quants and Signals are invoked concurrently, hence `Sync`.
pub trait ChatResponder: Send + Sync {
    fn complete(&self, role: Role, date: NaiveDate, messages: &[ChatMessage]) -> Result<ChatReply, ClientError>;
}

pub struct HttpChatClient {
    config: ChatClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpChatClient {
    pub fn new(config: ChatClientConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(Self { config, agent, api_key })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error as _;
    let io_timeout = t
        .source()
        .and_then(|s| s.downcast_ref::<std::io::Error>())
        .is_some_and(|e| matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock));
    io_timeout || t.to_string().contains("timed out")
}

fn reply_content(body: &str) -> Result<String, ClientError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ClientError::Decode(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Decode(format!("missing choices[0].message.content in {body}")))
}

impl ChatResponder for HttpChatClient {
    fn complete(&self, role: Role, date: NaiveDate, messages: &[ChatMessage]) -> Result<ChatReply, ClientError> {
        let cfg = &self.config;
        let body = ChatRequest {
            model: &cfg.model_name,
            messages,
            temperature: cfg.temperature,
        };
        let payload = serde_json::to_string(&body).map_err(|e| ClientError::Decode(e.to_string()))?;
        let attempts = cfg.max_retries + 1;
        let mut timed_out = false;
        let mut last = String::new();
        for attempt in 1..=attempts {
            let mut req = self.agent.post(&self.endpoint()).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_string(&payload) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| ClientError::Network {
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    return Ok(ChatReply {
                        content: reply_content(&text)?,
                        attempts: attempt,
                    });
                }
                Err(ureq::Error::Status(status, resp)) if status != 429 && status < 500 => {
                    return Err(ClientError::Rejected {
                        status,
                        body: resp.into_string().unwrap_or_default(),
                    });
                }
                Err(e) => {
                    timed_out = matches!(&e, ureq::Error::Transport(t) if is_timeout(t));
                    last = e.to_string();
                    log::warn!("{role} {date}: chat attempt {attempt}/{attempts} failed: {last}");
                    if attempt < attempts && cfg.backoff_ms > 0 {
                        thread::sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1).min(6)));
                    }
                }
            }
        }
        if timed_out {
            Err(ClientError::Timeout { attempts })
        } else {
            Err(ClientError::Network { attempts, message: last })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Script {
    One(String),
    Many(Vec<String>),
}

/// Deterministic stand-in for the chat endpoint. Responses are keyed by
/// `"<role>:<date>"`; a list value supplies one reply per attempt, the last
/// entry answering any further attempts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedResponder {
    scripts: BTreeMap<String, Vec<String>>,
}

impl<'de> Deserialize<'de> for ScriptedResponder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, Script>::deserialize(d)?;
        let scripts = raw
            .into_iter()
            .map(|(k, v)| match v {
                Script::One(s) => (k, vec![s]),
                Script::Many(v) => (k, v),
            })
            .filter(|(_, v)| !v.is_empty())
            .collect();
        Ok(Self { scripts })
    }
}

impl ScriptedResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, role: Role, date: NaiveDate, replies: Vec<String>) {
        self.scripts.insert(role.script_key(date), replies);
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let err = |message: String| ClientError::Script {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| err(e.to_string()))
    }
}

impl ChatResponder for ScriptedResponder {
    fn complete(&self, role: Role, date: NaiveDate, messages: &[ChatMessage]) -> Result<ChatReply, ClientError> {
        let key = role.script_key(date);
        let replies = self.scripts.get(&key).ok_or(ClientError::NoScript(key))?;
        // Each retry appends the rejected assistant reply to the conversation.
        let attempt = messages.iter().filter(|m| m.role == "assistant").count();
        Ok(ChatReply {
            content: replies[attempt.min(replies.len() - 1)].clone(),
            attempts: 1,
        })
    }
}

pub fn bundle_messages(bundle: &PromptBundle) -> Vec<ChatMessage> {
    vec![ChatMessage::system(&bundle.system_text), ChatMessage::user(&bundle.user_text)]
}

pub fn invoke(client: &dyn ChatResponder, bundle: &PromptBundle) -> Result<ChatReply, ClientError> {
    client.complete(bundle.role, bundle.date, &bundle_messages(bundle))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// Assistant text verbatim; absent when the transport failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub decision: AgentDecision,
    pub attempts: Vec<AttemptRecord>,
    pub fallback: bool,
}

pub fn fallback_decision(previous: Allocation, reason: &str) -> AgentDecision {
    AgentDecision {
        prediction: Prediction {
            state: MarketState::Neutral,
            reasoning: format!("fallback: {reason}; holding previous allocation"),
        },
        allocation: previous,
        confidence: None,
    }
}

/// Replays already-recorded attempts through the same acceptance rule used
/// live: the first attempt that parses wins, otherwise the fallback applies.
pub fn resolve_attempts(attempts: &[AttemptRecord], previous: Allocation) -> (AgentDecision, bool) {
    for a in attempts {
        if let Some(Ok(d)) = a.raw.as_deref().map(parse_agent_output) {
            return (d, false);
        }
    }
    let reason = attempts
        .last()
        .and_then(|a| a.error.clone())
        .unwrap_or_else(|| "no response".into());
    (fallback_decision(previous, &reason), true)
}

/// Invokes `client` until a reply parses, at most `retry_limit + 1` times.
/// Transport failures end the loop early. When nothing usable comes back the
/// decision falls back to `previous` with a neutral state.
pub fn decide_with_retry(
    client: &dyn ChatResponder,
    bundle: &PromptBundle,
    retry_limit: u32,
    previous: Allocation,
) -> DecisionOutcome {
    let mut messages = bundle_messages(bundle);
    let mut attempts = Vec::new();
    for _ in 0..=retry_limit {
        match client.complete(bundle.role, bundle.date, &messages) {
            Ok(reply) => match parse_agent_output(&reply.content) {
                Ok(decision) => {
                    attempts.push(AttemptRecord { raw: Some(reply.content), error: None });
                    return DecisionOutcome { decision, attempts, fallback: false };
                }
                Err(e) => {
                    log::warn!("{} {}: unusable reply: {e}", bundle.role, bundle.date);
                    messages.push(ChatMessage::assistant(&reply.content));
                    messages.push(ChatMessage::user(format!("{FORMAT_REMINDER} Problem: {e}.")));
                    attempts.push(AttemptRecord {
                        raw: Some(reply.content),
                        error: Some(e.to_string()),
                    });
                }
            },
            Err(e) => {
                log::error!("{} {}: {e}", bundle.role, bundle.date);
                attempts.push(AttemptRecord { raw: None, error: Some(e.to_string()) });
                break;
            }
        }
    }
    let (decision, fallback) = resolve_attempts(&attempts, previous);
    DecisionOutcome { decision, attempts, fallback }
}
