use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DailyFeedback;
use crate::agents::Role;

/// Lexical limits on what daily feedback may say to each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeRules {
    /// Terms that must never appear in feedback addressed to Signals, which
    /// has no access to technical data. Matched case-insensitively as whole
    /// words, plural forms included.
    #[serde(default = "default_signals_terms")]
    pub signals_forbidden_terms: Vec<String>,
}

fn default_signals_terms() -> Vec<String> {
    ["MACD", "RSI", "VWAP", "ADX", "Bollinger", "moving average", "technical indicator"]
        .map(String::from)
        .to_vec()
}

impl Default for ScopeRules {
    fn default() -> Self {
        Self {
            signals_forbidden_terms: default_signals_terms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeViolation {
    pub role: Role,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeReport {
    /// Input feedback with violating roles removed.
    pub accepted: DailyFeedback,
    pub violations: Vec<ScopeViolation>,
}

const ALLOCATION_VERBS: &str = "increase|increasing|decrease|decreasing|raise|raising|lower|lowering|reduce|reducing|cut|cutting|boost|boosting|allocate|allocating|shift|shifting|move|moving|trim|trimming|add|adding|hold|holding|set|setting|put|rebalance|adjust|adjusting|go|keep";
const ALLOCATION_NOUNS: &str = "allocation|allocations|exposure|btc|bitcoin|cash|position|positions|portfolio|weight|weighting|stake";

fn word_re(alternatives: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b(?:{alternatives})\b")).expect("word pattern")
}

static VERBS: LazyLock<Regex> = LazyLock::new(|| word_re(ALLOCATION_VERBS));
static NOUNS: LazyLock<Regex> = LazyLock::new(|| word_re(ALLOCATION_NOUNS));
static PERCENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\d+(?:\.\d+)?\s*(?:%|percent\b|pct\b)").expect("percent pattern"));
static SPLIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\d+(?:\.\d+)?\s*%\s*(?:btc|bitcoin)\s*(?:/|and|,)\s*\d+(?:\.\d+)?\s*%\s*cash").expect("split pattern")
});
static SENTENCES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?;](?:\s+|$)|\n").expect("sentence pattern"));

/// The first sentence of `text` that dictates an allocation: an allocation
/// verb, a percentage and an allocation noun together, or an explicit
/// BTC/cash split.
pub fn allocation_directive(text: &str) -> Option<String> {
    SENTENCES
        .split(text)
        .map(str::trim)
        .find(|s| SPLIT.is_match(s) || (PERCENT.is_match(s) && VERBS.is_match(s) && NOUNS.is_match(s)))
        .map(str::to_string)
}

fn forbidden_term(text: &str, terms: &[String]) -> Option<String> {
    terms.iter().find_map(|t| {
        let re = Regex::new(&format!(r"(?i)\b{}(?:s|es)?\b", regex::escape(t))).ok()?;
        re.find(text).map(|m| m.as_str().to_string())
    })
}

/// Checks one role's feedback text, returning the reason it is out of scope.
pub fn check_text(role: Role, text: &str, rules: &ScopeRules) -> Option<String> {
    if role == Role::Signals {
        if let Some(term) = forbidden_term(text, &rules.signals_forbidden_terms) {
            return Some(format!("refers to technical data the Signals agent does not see ({term:?})"));
        }
    }
    allocation_directive(text).map(|s| format!("dictates an allocation ({s:?})"))
}

pub fn scope_filter(feedback: &DailyFeedback, rules: &ScopeRules) -> ScopeReport {
    let mut accepted = feedback.clone();
    let mut violations = Vec::new();
    for (role, text) in &feedback.texts {
        if let Some(reason) = check_text(*role, text, rules) {
            accepted.texts.remove(role);
            violations.push(ScopeViolation { role: *role, reason });
        }
    }
    ScopeReport { accepted, violations }
}
