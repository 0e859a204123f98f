#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use verbal_trader::agents::{Role, ScriptedResponder};
use verbal_trader::market_data::{align, GapPolicies};
use verbal_trader::orchestrator::RunConfig;
use verbal_trader::{Bar, MarketDataset, NewsItem, OnChainDaily, SentimentDaily};

pub mod oracles;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn case_study_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case_study")
}

pub fn case_study() -> (RunConfig, MarketDataset, ScriptedResponder) {
    let dir = case_study_dir();
    let cfg = RunConfig::load(&dir.join("run.toml")).unwrap();
    let data = cfg.data.as_ref().unwrap().load().unwrap();
    let script = ScriptedResponder::load(&dir.join("fx.json")).unwrap();
    (cfg, data, script)
}

/// Bars following `daily_returns`, each with a positive range and volume.
pub fn bars_from_returns(start: NaiveDate, first_close: f64, daily_returns: &[f64], rng: &mut ChaCha8Rng) -> Vec<Bar> {
    let mut out = Vec::with_capacity(daily_returns.len() + 1);
    let mut prev = first_close;
    let mut d = start;
    for (i, r) in std::iter::once(0.0).chain(daily_returns.iter().copied()).enumerate() {
        let close = prev * (1.0 + r);
        let open = if i == 0 { close } else { prev };
        let wiggle = 1.0 + rng.random_range(0.001..0.02);
        out.push(Bar {
            date: d,
            open,
            high: open.max(close) * wiggle,
            low: open.min(close) / wiggle,
            close,
            volume: rng.random_range(1_000.0..50_000.0),
        });
        prev = close;
        d = d.checked_add_days(Days::new(1)).unwrap();
    }
    out
}

const HEADLINES: [&str; 6] = [
    "ETF inflows accelerate",
    "Exchange outage rattles traders",
    "Regulator signals clearer crypto rules",
    "Large holder moves coins to exchange",
    "Miners expand hosting deals",
    "Macro data lifts risk assets",
];

/// Dataset over the given bars with sentiment and on-chain rows every day
/// and news on roughly half the days.
pub fn dataset_for(bars: &[Bar], rng: &mut ChaCha8Rng) -> MarketDataset {
    let mut onchain = Vec::new();
    let mut sentiment = Vec::new();
    let mut news = Vec::new();
    for b in bars {
        onchain.push(OnChainDaily {
            date: b.date,
            tx_count: rng.random_range(200_000..600_000),
            active_addresses: rng.random_range(400_000..900_000),
            transfer_volume_usd: rng.random_range(1e9..6e10),
        });
        let fgi = rng.random_range(5u8..96);
        sentiment.push(SentimentDaily {
            date: b.date,
            social_score_mean: rng.random_range(-0.5..0.5),
            fgi_value: fgi,
            fgi_label: if fgi < 45 { "Fear".into() } else { "Greed".into() },
        });
        if rng.random_bool(0.5) {
            let h = HEADLINES[rng.random_range(0..HEADLINES.len())];
            news.push(NewsItem {
                date: b.date,
                source: "wire".into(),
                headline: h.into(),
                summary: format!("{h} on {}", b.date),
            });
        }
    }
    align(bars, &onchain, &sentiment, &news, GapPolicies::default()).unwrap()
}

pub fn agent_reply(state: &str, pct: u32, reasoning: &str) -> String {
    serde_json::json!({"state": state, "allocation_btc_pct": pct, "reasoning": reasoning}).to_string()
}

pub fn reflect_reply(quants: &str, signals: &str, decision: &str) -> String {
    serde_json::json!({"quants": quants, "signals": signals, "decision": decision}).to_string()
}

pub fn daily_marker(date: NaiveDate, role: Role) -> String {
    format!("critique-{date}-{role}")
}

/// Run-ready fixture: `days` decision days after a full lookback window,
/// every role scripted with `alloc(day_index, role)`.
pub struct Fixture {
    pub config: RunConfig,
    pub dataset: MarketDataset,
    pub script: ScriptedResponder,
}

pub fn fixture(
    seed: u64,
    days: usize,
    daily_returns: impl Fn(usize) -> f64,
    alloc: impl Fn(usize, Role) -> u32,
) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lookback = 30;
    let first = date(2024, 6, 1);
    let returns: Vec<f64> = (0..lookback + days).map(|i| daily_returns(i)).collect();
    let bars = bars_from_returns(first, 60_000.0, &returns, &mut rng);
    let dataset = dataset_for(&bars, &mut rng);
    let start = bars[lookback - 1].date;
    let end = start.checked_add_days(Days::new(days as u64 - 1)).unwrap();
    let mut config = RunConfig::new(start, end);
    config.lookback_days = lookback;

    let mut script = ScriptedResponder::new();
    for (i, d) in start.iter_days().take(days).enumerate() {
        for role in Role::TRADING {
            let pct = alloc(i, role);
            let state = if pct > 50 { "bullish" } else if pct < 50 { "bearish" } else { "neutral" };
            script.insert(role, d, vec![agent_reply(state, pct, &format!("{role} view for {d}"))]);
        }
        script.insert(
            Role::Reflect,
            d,
            vec![reflect_reply(
                &daily_marker(d, Role::Quants),
                &daily_marker(d, Role::Signals),
                &daily_marker(d, Role::Decision),
            )],
        );
    }
    Fixture { config, dataset, script }
}

/// Removes the weekly guidance section from a rendered prompt.
pub fn strip_weekly(text: &str) -> String {
    let heading = format!("\n\n{}\n", verbal_trader::agents::WEEKLY_FEEDBACK_HEADING);
    match text.find(&heading) {
        Some(i) => text[..i].to_string(),
        None => text.to_string(),
    }
}

/// Text of the weekly section of a prompt, if present.
pub fn weekly_section(text: &str) -> Option<&str> {
    let heading = format!("\n\n{}\n", verbal_trader::agents::WEEKLY_FEEDBACK_HEADING);
    text.find(&heading).map(|i| &text[i + heading.len()..])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
