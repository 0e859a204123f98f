//! Lexical checks that each prompt only carries the inputs its role may see.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompts::allocation_token_patterns;
use super::{PromptBundle, Role};
use crate::portfolio::Allocation;

/// Field labels of the indicator snapshot as they appear in Quants prompts.
pub const INDICATOR_LABELS: [&str; 13] = [
    "sma",
    "ema",
    "macd_line",
    "macd_signal",
    "macd_signal_line",
    "macd_hist",
    "rsi",
    "bb_upper",
    "bb_mid",
    "bb_lower",
    "vwap",
    "pct_below_vwap",
    "adx",
];

/// Sentiment and news field labels that belong to the Signals role only.
pub const SENTIMENT_LABELS: [&str; 6] = [
    "fear & greed",
    "fgi",
    "social sentiment",
    "headline",
    "headlines",
    "news",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeIssue {
    pub role: Role,
    /// The label or token found where it should not be.
    pub token: String,
}

fn word(label: &str) -> Regex {
    Regex::new(&format!(r"(?i)(?:^|[^A-Za-z0-9_]){}(?:$|[^A-Za-z0-9_])", regex::escape(label))).expect("label pattern")
}

static INDICATOR_RES: LazyLock<Vec<Regex>> = LazyLock::new(|| INDICATOR_LABELS.iter().map(|l| word(l)).collect());
static SENTIMENT_RES: LazyLock<Vec<Regex>> = LazyLock::new(|| SENTIMENT_LABELS.iter().map(|l| word(l)).collect());

/// Returns every scoping violation in `bundle`. `upstream` holds the Quants and
/// Signals allocations for the day and only matters for Decision bundles.
pub fn lint_bundle(bundle: &PromptBundle, upstream: &[Allocation]) -> Vec<ScopeIssue> {
    let text = format!("{}\n{}", bundle.system_text, bundle.user_text);
    let (labels, res): (&[&str], &[Regex]) = match bundle.role {
        Role::Signals => (&INDICATOR_LABELS, &INDICATOR_RES),
        Role::Quants => (&SENTIMENT_LABELS, &SENTIMENT_RES),
        _ => (&[], &[]),
    };
    let mut issues: Vec<ScopeIssue> = labels
        .iter()
        .zip(res)
        .filter(|(_, re)| re.is_match(&text))
        .map(|(l, _)| ScopeIssue {
            role: bundle.role,
            token: l.to_string(),
        })
        .collect();
    if bundle.role == Role::Decision {
        for a in upstream {
            for re in allocation_token_patterns(*a) {
                if let Some(c) = re.captures(&bundle.user_text) {
                    issues.push(ScopeIssue {
                        role: Role::Decision,
                        token: c["tok"].to_string(),
                    });
                }
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn bundle(role: Role, user: &str) -> PromptBundle {
        PromptBundle {
            role,
            date: NaiveDate::from_ymd_opt(2024, 11, 4).unwrap(),
            system_text: String::new(),
            user_text: user.into(),
        }
    }

    #[test]
    fn whole_word_and_case_insensitive() {
        let issues = lint_bundle(&bundle(Role::Signals, "The RSI is high; schema unchanged."), &[]);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].token, "rsi");
        assert!(lint_bundle(&bundle(Role::Signals, "Emanuel adxx"), &[]).is_empty());
    }

    #[test]
    fn quants_sentiment_labels() {
        let issues = lint_bundle(&bundle(Role::Quants, "FGI 70, headline: ETF"), &[]);
        let toks: Vec<_> = issues.iter().map(|i| i.token.as_str()).collect();
        assert_eq!(toks, ["fgi", "headline"]);
    }

    #[test]
    fn decision_upstream_tokens() {
        let a = Allocation::new(0.35).unwrap();
        assert!(!lint_bundle(&bundle(Role::Decision, "go 35% BTC"), &[a]).is_empty());
        assert!(lint_bundle(&bundle(Role::Decision, "value 10035.00, RSI 35"), &[a]).is_empty());
    }
}
