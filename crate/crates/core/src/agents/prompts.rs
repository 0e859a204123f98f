use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{LazyLock, Mutex};

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Prediction, PromptBundle, Role};
use crate::indicators::IndicatorSnapshot;
use crate::market_data::{Bar, NewsItem, OnChainDaily, SentimentDaily};
use crate::portfolio::Allocation;

pub const DAILY_FEEDBACK_HEADING: &str = "### Feedback on your previous decision";
pub const WEEKLY_FEEDBACK_HEADING: &str = "### Weekly performance guidance";
pub const NO_NEWS_MARKER: &str = "No news available for this date.";

const REDACTED: &str = "[redacted]";

const OUTPUT_CONTRACT: &str = "Respond with a single JSON object and nothing after it:\n\
{\"state\": \"bullish\" | \"bearish\" | \"neutral\", \"allocation_btc_pct\": <number from 0 to 100>, \"reasoning\": \"<why>\"}\n\
You may add \"confidence\" (0 to 1). The allocation is the share of portfolio value to hold in BTC; the rest stays in cash. No leverage or shorting.";

/// Feedback texts carried into a day's prompts. Absent texts produce no section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedFeedback {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekly: Option<String>,
}

impl InjectedFeedback {
    pub fn is_empty(&self) -> bool {
        self.daily.is_none() && self.weekly.is_none()
    }
}

fn push_feedback(out: &mut String, fb: &InjectedFeedback, clean: impl Fn(&str) -> String) {
    if let Some(text) = &fb.daily {
        let _ = write!(out, "\n\n{DAILY_FEEDBACK_HEADING}\n{}", clean(text));
    }
    if let Some(text) = &fb.weekly {
        let _ = write!(out, "\n\n{WEEKLY_FEEDBACK_HEADING}\n{}", clean(text));
    }
}

pub fn build_quants_prompt(
    window: &[Bar],
    snapshot: &IndicatorSnapshot,
    onchain: &[OnChainDaily],
    feedback: &InjectedFeedback,
) -> PromptBundle {
    let system_text = format!(
        "You are the Quants agent on a Bitcoin trading desk. You work only from price history, \
         technical indicators and on-chain activity. Classify tomorrow's BTC market direction as \
         bullish, bearish or neutral and propose a BTC/cash allocation derived purely from those \
         technical insights.\n\n{OUTPUT_CONTRACT}"
    );

    let mut user = format!("Date: {}\n\n#### Price window ({} daily bars)\n", snapshot.date, window.len());
    user.push_str("date,open,high,low,close,volume\n");
    for b in window {
        let _ = writeln!(
            user,
            "{},{:.2},{:.2},{:.2},{:.2},{:.2}",
            b.date, b.open, b.high, b.low, b.close, b.volume
        );
    }
    if let (Some(first), Some(last)) = (window.first(), window.last()) {
        let hi = window.iter().map(|b| b.high).fold(f64::MIN, f64::max);
        let lo = window.iter().map(|b| b.low).fold(f64::MAX, f64::min);
        let _ = writeln!(
            user,
            "Window change: {:.2}%; high {:.2}; low {:.2}",
            (last.close / first.close - 1.0) * 100.0,
            hi,
            lo
        );
    }

    user.push_str("\n#### Technical indicators\n");
    let s = snapshot;
    for (key, value) in [
        ("sma", s.sma),
        ("ema", s.ema),
        ("macd_line", s.macd_line),
        ("macd_signal", s.macd_signal_line),
        ("macd_hist", s.macd_hist),
        ("rsi", s.rsi),
        ("bb_upper", s.bb_upper),
        ("bb_mid", s.bb_mid),
        ("bb_lower", s.bb_lower),
        ("vwap", s.vwap),
        ("pct_below_vwap", s.pct_below_vwap),
        ("adx", s.adx),
    ] {
        let _ = writeln!(user, "- {key}: {value:.2}");
    }
    if s.adx_degenerate {
        user.push_str("(adx undefined on a window with zero range; reported as 0)\n");
    }

    user.push_str("\n#### On-chain activity\n");
    if onchain.is_empty() {
        user.push_str("No on-chain data available.\n");
    } else {
        user.push_str("date,tx_count,active_addresses,transfer_volume_usd\n");
        for o in onchain {
            let _ = writeln!(
                user,
                "{},{},{},{:.2}",
                o.date, o.tx_count, o.active_addresses, o.transfer_volume_usd
            );
        }
    }
    push_feedback(&mut user, feedback, str::to_string);

    PromptBundle {
        role: Role::Quants,
        date: snapshot.date,
        system_text,
        user_text: user,
    }
}

pub fn build_signals_prompt(
    date: NaiveDate,
    news: &[NewsItem],
    sentiment: &SentimentDaily,
    feedback: &InjectedFeedback,
) -> PromptBundle {
    let system_text = format!(
        "You are the Signals agent on a Bitcoin trading desk. You read news, the crypto Fear & Greed \
         Index and aggregated social-media sentiment. Classify tomorrow's BTC market direction as \
         bullish, bearish or neutral and propose a BTC/cash allocation based on that qualitative \
         picture.\n\n{OUTPUT_CONTRACT}"
    );
    let mut user = format!(
        "Date: {date}\n\n#### Sentiment\nFear & Greed Index: {} ({})\nSocial sentiment score: {:.2} (scale -1 to 1)\n\n#### News\n",
        sentiment.fgi_value, sentiment.fgi_label, sentiment.social_score_mean
    );
    if news.is_empty() {
        user.push_str(NO_NEWS_MARKER);
        user.push('\n');
    } else {
        for item in news {
            let _ = write!(user, "- [{}] {}", item.source, item.headline);
            if !item.summary.trim().is_empty() {
                let _ = write!(user, ": {}", item.summary.trim());
            }
            user.push('\n');
        }
    }
    push_feedback(&mut user, feedback, str::to_string);
    PromptBundle {
        role: Role::Signals,
        date,
        system_text,
        user_text: user,
    }
}

/// `upstream` holds the analysts' own allocations; any trace of them in the
/// reasoning or feedback text is redacted before it reaches the Decision agent.
pub fn build_decision_prompt(
    date: NaiveDate,
    quants: &Prediction,
    signals: &Prediction,
    portfolio_value: f64,
    upstream: &[Allocation],
    feedback: &InjectedFeedback,
) -> PromptBundle {
    let system_text = format!(
        "You are the Decision agent on a Bitcoin trading desk. Two analysts report to you: Quants \
         (technical view) and Signals (news and sentiment view). You receive only their predictions \
         and reasoning, never their portfolio recommendations. Weigh the two views, resolve any \
         conflict between them, and set the portfolio's BTC/cash allocation for tomorrow. Treat daily \
         market inputs as the primary basis for decision-making. You compete with the baseline \
         performance of a static 50/50 BTC/cash portfolio; aim to beat it.\n\n{OUTPUT_CONTRACT}"
    );
    let clean = |t: &str| redact_allocations(t, upstream);
    let mut user = format!("Date: {date}\nCurrent portfolio value (USD): {portfolio_value:.2}\n");
    for (name, p) in [("Quants", quants), ("Signals", signals)] {
        let _ = write!(
            user,
            "\n#### {name} analyst\nPrediction: {}\nReasoning: {}\n",
            p.state,
            clean(&p.reasoning)
        );
    }
    push_feedback(&mut user, feedback, clean);
    PromptBundle {
        role: Role::Decision,
        date,
        system_text,
        user_text: user,
    }
}

/// Regex for `x` written with any number of trailing zeros.
fn number_re(x: f64) -> String {
    let x = (x * 1e6).round() / 1e6;
    let s = regex::escape(&format!("{x}"));
    if s.contains('.') {
        format!("{s}0*")
    } else {
        format!(r"{s}(?:\.0+)?")
    }
}

/// Patterns matching any digit-bearing rendering of `alloc`: its percentage,
/// its fraction and the cash complement. Each pattern has `pre`/`tok`/`post`
/// groups so callers can replace only the token.
pub fn allocation_token_patterns(alloc: Allocation) -> Vec<Regex> {
    static CACHE: LazyLock<Mutex<HashMap<u64, Vec<Regex>>>> = LazyLock::new(Default::default);
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(alloc.btc_fraction().to_bits())
        .or_insert_with(|| compile_token_patterns(alloc))
        .clone()
}

fn compile_token_patterns(alloc: Allocation) -> Vec<Regex> {
    let pct = alloc.btc_fraction() * 100.0;
    let btc = number_re(pct);
    let cash = number_re(100.0 - pct);
    let mut patterns = vec![
        format!(r"(?i)(?P<pre>^|[^\d.])(?P<tok>(?:{btc}|{cash})\s*(?:%|percent\b|pct\b))(?P<post>)"),
        format!(r"(?P<pre>^|[^\d.])(?P<tok>(?:{btc})\s*/\s*(?:{cash}))(?P<post>$|[^\d.])"),
    ];
    let frac = alloc.btc_fraction();
    // A bare 0 or 1 is no evidence of an allocation.
    if frac > 0.0 && frac < 1.0 {
        let digits = number_re(frac);
        let digits = digits.strip_prefix('0').unwrap_or(&digits);
        patterns.push(format!(r"(?P<pre>^|[^\d.])(?P<tok>0?{digits})(?P<post>$|[^\d])"));
    }
    patterns
        .iter()
        .map(|p| Regex::new(p).expect("allocation pattern"))
        .collect()
}

static GENERIC: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"(?i)(?P<pre>^|[^\d.])(?P<tok>\d+(?:\.\d+)?\s*%\s*(?:(?:in|of|to|into)\s+)?(?:btc|bitcoin|cash))(?P<post>)",
        r#"(?i)(?P<pre>)(?P<tok>allocation_btc_pct"?\s*[:=]?\s*"?\d+(?:\.\d+)?)(?P<post>)"#,
    ]
    .iter()
    .map(|p| Regex::new(p).expect("generic pattern"))
    .collect()
});

/// Replaces explicit BTC/cash split figures with a placeholder.
pub fn redact_allocations(text: &str, upstream: &[Allocation]) -> String {
    let mut patterns = GENERIC.clone();
    for a in upstream {
        patterns.extend(allocation_token_patterns(*a));
    }
    let mut out = text.to_string();
    for re in &patterns {
        // Adjacent matches share boundary characters, so repeat until stable.
        loop {
            let next = re.replace_all(&out, format!("${{pre}}{REDACTED}${{post}}").as_str()).into_owned();
            if next == out {
                break;
            }
            out = next;
        }
    }
    out
}
