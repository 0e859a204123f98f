//! Quants / Signals / Decision agents: prompt construction, chat-completion
//! transport and structured-output parsing.

mod client;
mod lint;
mod parse;
mod prompts;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::portfolio::Allocation;

pub use client::{
    bundle_messages, decide_with_retry, fallback_decision, invoke, resolve_attempts, AttemptRecord, ChatClientConfig, ChatMessage, ChatReply, ChatRequest, ChatResponder,
    ClientError, DecisionOutcome, HttpChatClient, ScriptedResponder, FORMAT_REMINDER,
};
pub use lint::{lint_bundle, ScopeIssue, INDICATOR_LABELS, SENTIMENT_LABELS};
pub use parse::{extract_json_objects, parse_agent_output, OutputError};
pub use prompts::{
    allocation_token_patterns, build_decision_prompt, build_quants_prompt, build_signals_prompt, redact_allocations, InjectedFeedback,
    DAILY_FEEDBACK_HEADING, NO_NEWS_MARKER, WEEKLY_FEEDBACK_HEADING,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketState {
    Bullish,
    Bearish,
    Neutral,
}

impl fmt::Display for MarketState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarketState::Bullish => "bullish",
            MarketState::Bearish => "bearish",
            MarketState::Neutral => "neutral",
        })
    }
}

impl FromStr for MarketState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bullish" => Ok(MarketState::Bullish),
            "bearish" => Ok(MarketState::Bearish),
            "neutral" => Ok(MarketState::Neutral),
            other => Err(format!("unknown market state {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Quants,
    Signals,
    Decision,
    Reflect,
}

impl Role {
    pub const TRADING: [Role; 3] = [Role::Quants, Role::Signals, Role::Decision];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Quants => "quants",
            Role::Signals => "signals",
            Role::Decision => "decision",
            Role::Reflect => "reflect",
        }
    }

    /// Key used by scripted responders: `"<role>:<date>"`.
    pub fn script_key(self, date: NaiveDate) -> String {
        format!("{}:{}", self.as_str(), date)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub state: MarketState,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub prediction: Prediction,
    pub allocation: Allocation,
    /// Journaled when the model emits one; nothing downstream reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl AgentDecision {
    pub fn state(&self) -> MarketState {
        self.prediction.state
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: Role,
    pub date: NaiveDate,
    pub system_text: String,
    pub user_text: String,
}
