//! Daily critique by the Reflect agent and weekly template guidance.

mod scope;
mod weekly;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    bundle_messages, extract_json_objects, AttemptRecord, ChatMessage, ChatResponder, MarketState, OutputError,
    Prediction, PromptBundle, Role,
};
use crate::metrics::prediction_correct;
use crate::portfolio::Allocation;

pub use scope::{allocation_directive, check_text, scope_filter, ScopeReport, ScopeRules, ScopeViolation};
pub use weekly::{
    select_template, template_text, weekly_feedback, Corrective, TemplateKind, TemplatePool, TemplateThresholds,
    WeeklyEntry, WeeklyFeedback, WeeklyStats, WEEK_DAYS,
};

pub const NO_ALLOCATION_ADVICE: &str = "Never dictate allocations: do not tell any agent what percentage of \
BTC or cash to hold, nor by how much to change its position.";

pub const JUDGE_REASONING: &str = "Judge whether each agent's decision was justified based on the reasoning \
provided, rather than purely on their portfolio performance outcomes.";

#[derive(Debug, Error)]
pub enum ReflectionError {
    #[error("no {role} record for {date}")]
    MissingAgentRecord { role: Role, date: NaiveDate },
    #[error("weekly feedback needs 7 consecutive completed days, got {days}")]
    IncompleteWeek { days: usize },
    #[error("cannot load templates from {path}: {message}")]
    Templates { path: String, message: String },
}

/// What one agent did on a day, as simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDay {
    pub prediction: Prediction,
    pub allocation: Allocation,
    pub portfolio_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub role: Role,
    pub state: MarketState,
    pub allocation: Allocation,
    pub reasoning: String,
    pub portfolio_return: f64,
    pub correct: bool,
    /// Share of correct calls up to and including this day.
    pub running_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyOutcomePacket {
    pub date: NaiveDate,
    /// BTC close-to-close return from `date` to the next day.
    pub realized_btc_return: f64,
    pub baseline_return: f64,
    pub agents: Vec<AgentOutcome>,
}

impl DailyOutcomePacket {
    pub fn agent(&self, role: Role) -> Result<&AgentOutcome, ReflectionError> {
        self.agents
            .iter()
            .find(|a| a.role == role)
            .ok_or(ReflectionError::MissingAgentRecord { role, date: self.date })
    }
}

/// Correct-call counts carried across days.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTally {
    pub days: u32,
    pub correct: BTreeMap<Role, u32>,
}

impl AccuracyTally {
    pub fn record(&mut self, packet: &DailyOutcomePacket) {
        self.days += 1;
        for a in &packet.agents {
            *self.correct.entry(a.role).or_default() += u32::from(a.correct);
        }
    }
}

pub fn evaluate_day(
    date: NaiveDate,
    realized_btc_return: f64,
    baseline_return: f64,
    agents: &BTreeMap<Role, AgentDay>,
    tally: &AccuracyTally,
    neutral_band: f64,
) -> Result<DailyOutcomePacket, ReflectionError> {
    let outcomes = Role::TRADING
        .iter()
        .map(|role| {
            let day = agents
                .get(role)
                .ok_or(ReflectionError::MissingAgentRecord { role: *role, date })?;
            let correct = prediction_correct(day.prediction.state, realized_btc_return, neutral_band);
            let prior = tally.correct.get(role).copied().unwrap_or(0);
            Ok(AgentOutcome {
                role: *role,
                state: day.prediction.state,
                allocation: day.allocation,
                reasoning: day.prediction.reasoning.clone(),
                portfolio_return: day.portfolio_return,
                correct,
                running_accuracy: f64::from(prior + u32::from(correct)) / f64::from(tally.days + 1),
            })
        })
        .collect::<Result<Vec<_>, ReflectionError>>()?;
    Ok(DailyOutcomePacket {
        date,
        realized_btc_return,
        baseline_return,
        agents: outcomes,
    })
}

fn inputs_of(role: Role) -> &'static str {
    match role {
        Role::Quants => "price history, technical indicators and on-chain activity only",
        Role::Signals => "news, the Fear & Greed Index and social sentiment only; it never sees technical indicators",
        _ => "the two analysts' predictions and reasoning plus the portfolio value only",
    }
}

pub fn build_reflect_prompt(packet: &DailyOutcomePacket) -> PromptBundle {
    let mut system = String::from(
        "You are the Reflect agent reviewing a Bitcoin trading desk after the market closed. \
         Critique each agent's reasoning: was its prediction logically consistent with the inputs it had? \
         Separate poor decisions caused by flawed predictions and reasoning from losses due to \
         unpredictable market behavior, and critique reasoning quality even on profitable days.\n",
    );
    let _ = writeln!(system, "{JUDGE_REASONING}");
    let _ = writeln!(system, "{NO_ALLOCATION_ADVICE}");
    system.push_str("Keep each critique tied to the inputs that agent can see:\n");
    for role in Role::TRADING {
        let _ = writeln!(system, "- {role}: {}", inputs_of(role));
    }
    system.push_str(
        "Respond with a single JSON object with one non-empty feedback string per agent:\n\
         {\"quants\": \"...\", \"signals\": \"...\", \"decision\": \"...\"}",
    );

    let mut user = format!(
        "Date: {}\nRealized BTC return to next close: {:+.2}%\nBaseline (static 50/50) return: {:+.2}%\n",
        packet.date,
        packet.realized_btc_return * 100.0,
        packet.baseline_return * 100.0
    );
    for a in &packet.agents {
        let _ = write!(
            user,
            "\n#### {} agent\nPrediction: {} ({})\nBTC allocation: {:.0}%\nPortfolio return: {:+.2}% ({:+.2} points vs baseline)\nRunning accuracy: {:.1}%\nReasoning: {}\n",
            a.role,
            a.state,
            if a.correct { "correct" } else { "incorrect" },
            a.allocation.btc_fraction() * 100.0,
            a.portfolio_return * 100.0,
            (a.portfolio_return - packet.baseline_return) * 100.0,
            a.running_accuracy * 100.0,
            a.reasoning
        );
    }
    PromptBundle {
        role: Role::Reflect,
        date: packet.date,
        system_text: system,
        user_text: user,
    }
}

/// Per-role critique for one day. Roles without accepted feedback are absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyFeedback {
    pub date: NaiveDate,
    pub texts: BTreeMap<Role, String>,
}

impl DailyFeedback {
    pub fn empty(date: NaiveDate) -> Self {
        Self {
            date,
            texts: BTreeMap::new(),
        }
    }

    pub fn text(&self, role: Role) -> Option<&str> {
        self.texts.get(&role).map(String::as_str)
    }
}

pub fn parse_reflect_output(raw: &str, date: NaiveDate) -> Result<DailyFeedback, OutputError> {
    let objects = extract_json_objects(raw);
    if objects.is_empty() {
        return Err(OutputError::Parse);
    }
    let obj = objects
        .iter()
        .find(|o| Role::TRADING.iter().any(|r| o.contains_key(r.as_str())))
        .ok_or_else(|| OutputError::Schema("no object with quants/signals/decision keys".into()))?;
    let mut texts = BTreeMap::new();
    for role in Role::TRADING {
        let text = obj
            .get(role.as_str())
            .and_then(|v| v.as_str())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| OutputError::Schema(format!("missing or empty {:?}", role.as_str())))?;
        texts.insert(role, text.to_string());
    }
    Ok(DailyFeedback { date, texts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectOutcome {
    pub feedback: DailyFeedback,
    pub attempts: Vec<AttemptRecord>,
    /// No parsable critique arrived; the next day runs without daily feedback.
    pub fallback: bool,
    pub violations: Vec<ScopeViolation>,
}

fn violation_notice(violations: &[ScopeViolation]) -> String {
    let mut s = String::from("Your critique broke the scoping rules:\n");
    for v in violations {
        let _ = writeln!(s, "- {} feedback {}", v.role, v.reason);
    }
    s.push_str("Rewrite all three critiques without these problems, in the same JSON format.");
    s
}

/// Runs the Reflect agent for one day: format retries up to `retry_limit`,
/// then one extra invocation if the critique breaks scope. Whatever still
/// violates scope after that is dropped for the affected role only.
pub fn reflect_day(
    client: &dyn ChatResponder,
    packet: &DailyOutcomePacket,
    rules: &ScopeRules,
    retry_limit: u32,
) -> ReflectOutcome {
    let bundle = build_reflect_prompt(packet);
    let mut messages = bundle_messages(&bundle);
    let mut attempts = Vec::new();
    let mut violations = Vec::new();
    let mut parsed: Option<DailyFeedback> = None;
    let mut rescoped = false;
    let mut format_failures = 0;

    loop {
        let reply = match client.complete(Role::Reflect, packet.date, &messages) {
            Ok(r) => r.content,
            Err(e) => {
                log::error!("reflect {}: {e}", packet.date);
                attempts.push(AttemptRecord { raw: None, error: Some(e.to_string()) });
                break;
            }
        };
        messages.push(ChatMessage::assistant(&reply));
        match parse_reflect_output(&reply, packet.date) {
            Ok(fb) => {
                attempts.push(AttemptRecord { raw: Some(reply), error: None });
                let report = scope_filter(&fb, rules);
                violations.extend(report.violations.iter().cloned());
                if report.violations.is_empty() || rescoped {
                    parsed = Some(report.accepted);
                    break;
                }
                // Keep the accepted part in case the rewrite comes back unusable.
                parsed = Some(report.accepted);
                rescoped = true;
                messages.push(ChatMessage::user(violation_notice(&report.violations)));
            }
            Err(e) => {
                attempts.push(AttemptRecord { raw: Some(reply), error: Some(e.to_string()) });
                format_failures += 1;
                if format_failures > retry_limit {
                    break;
                }
                messages.push(ChatMessage::user(format!(
                    "Reply again with exactly one JSON object {{\"quants\": \"...\", \"signals\": \"...\", \"decision\": \"...\"}}. Problem: {e}."
                )));
            }
        }
    }
    ReflectOutcome {
        fallback: parsed.is_none(),
        feedback: parsed.unwrap_or_else(|| DailyFeedback::empty(packet.date)),
        attempts,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ScriptedResponder;
    use crate::metrics::accuracy;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn day(state: MarketState, alloc: f64, r: f64) -> AgentDay {
        AgentDay {
            prediction: Prediction {
                state,
                reasoning: format!("{state} because of inputs"),
            },
            allocation: Allocation::new(alloc).unwrap(),
            portfolio_return: r,
        }
    }

    fn all(state: MarketState) -> BTreeMap<Role, AgentDay> {
        Role::TRADING.iter().map(|r| (*r, day(state, 0.5, 0.0112))).collect()
    }

    #[test]
    fn bullish_on_a_up_day_is_correct() {
        let p = evaluate_day(d("2024-11-04"), 0.0224, 0.0112, &all(MarketState::Bullish), &AccuracyTally::default(), 0.005)
            .unwrap();
        assert!(p.agents.iter().all(|a| a.correct && a.running_accuracy == 1.0));
        let p = evaluate_day(d("2024-11-04"), 0.0, 0.0, &all(MarketState::Neutral), &AccuracyTally::default(), 0.005)
            .unwrap();
        assert!(p.agents.iter().all(|a| a.correct));
    }

    #[test]
    fn missing_agent_is_an_error() {
        let mut m = all(MarketState::Bullish);
        m.remove(&Role::Signals);
        assert!(matches!(
            evaluate_day(d("2024-11-04"), 0.0, 0.0, &m, &AccuracyTally::default(), 0.005),
            Err(ReflectionError::MissingAgentRecord { role: Role::Signals, .. })
        ));
    }

    #[test]
    fn running_accuracy_accumulates() {
        let mut tally = AccuracyTally::default();
        let p1 = evaluate_day(d("2024-11-04"), 0.02, 0.0, &all(MarketState::Bullish), &tally, 0.005).unwrap();
        tally.record(&p1);
        let p2 = evaluate_day(d("2024-11-05"), 0.02, 0.0, &all(MarketState::Bearish), &tally, 0.005).unwrap();
        assert!(p2.agents.iter().all(|a| a.running_accuracy == 0.5));
    }

    proptest! {
        #[test]
        fn flags_match_single_day_accuracy(r in -0.05f64..0.05, s in 0usize..3, band in 0.0f64..0.02) {
            let state = [MarketState::Bullish, MarketState::Bearish, MarketState::Neutral][s];
            let p = evaluate_day(d("2024-11-04"), r, 0.0, &all(state), &AccuracyTally::default(), band).unwrap();
            let oracle = accuracy(&[state], &[r], band).unwrap() == 1.0;
            prop_assert!(p.agents.iter().all(|a| a.correct == oracle));
        }
    }

    #[test]
    fn reflect_prompt_contents() {
        let mut m = all(MarketState::Bullish);
        m.insert(Role::Quants, day(MarketState::Bearish, 0.35, 0.0078));
        let p = evaluate_day(d("2024-11-04"), 0.0224, 0.0112, &m, &AccuracyTally::default(), 0.005).unwrap();
        let b = build_reflect_prompt(&p);
        assert!(b.system_text.contains(NO_ALLOCATION_ADVICE));
        assert!(b.system_text.contains(JUDGE_REASONING));
        assert!(b.user_text.contains("Baseline (static 50/50) return: +1.12%"));
        assert!(b.user_text.contains("bearish (incorrect)"));
        assert!(b.user_text.contains("bullish (correct)"));
        assert!(b.user_text.contains("bearish because of inputs"));
        assert!(b.user_text.contains("bullish because of inputs"));
    }

    #[test]
    fn parse_reflect() {
        let fb = parse_reflect_output(r#"ok {"quants":"q","signals":"s","decision":"d"}"#, d("2024-11-04")).unwrap();
        assert_eq!(fb.text(Role::Signals), Some("s"));
        assert!(matches!(
            parse_reflect_output(r#"{"quants":"q","decision":"d"}"#, d("2024-11-04")),
            Err(OutputError::Schema(_))
        ));
        assert_eq!(parse_reflect_output("none", d("2024-11-04")), Err(OutputError::Parse));
    }

    fn packet() -> DailyOutcomePacket {
        evaluate_day(d("2024-11-04"), 0.0224, 0.0112, &all(MarketState::Bullish), &AccuracyTally::default(), 0.005).unwrap()
    }

    fn script(replies: &[&str]) -> ScriptedResponder {
        let mut r = ScriptedResponder::new();
        r.insert(Role::Reflect, d("2024-11-04"), replies.iter().map(|s| s.to_string()).collect());
        r
    }

    #[test]
    fn scope_violation_gets_one_rewrite() {
        let bad = r#"{"quants":"fine","signals":"use the RSI","decision":"increase BTC allocation by 10%"}"#;
        let good = r#"{"quants":"fine","signals":"weigh the election news","decision":"you over-hedged"}"#;
        let out = reflect_day(&script(&[bad, good]), &packet(), &ScopeRules::default(), 1);
        assert!(!out.fallback);
        assert_eq!(out.attempts.len(), 2);
        assert_eq!(out.violations.len(), 2);
        assert_eq!(out.feedback.texts.len(), 3);

        let out = reflect_day(&script(&[bad]), &packet(), &ScopeRules::default(), 1);
        assert_eq!(out.attempts.len(), 2);
        assert_eq!(out.feedback.texts.keys().copied().collect::<Vec<_>>(), vec![Role::Quants]);
    }

    #[test]
    fn unparsable_critique_falls_back_to_no_feedback() {
        let out = reflect_day(&script(&["no idea"]), &packet(), &ScopeRules::default(), 2);
        assert!(out.fallback);
        assert_eq!(out.attempts.len(), 3);
        assert!(out.feedback.texts.is_empty());
    }
}
