//! Deterministic inputs for the pipeline benchmarks.

use chrono::{Days, NaiveDate};
use verbal_trader::agents::{Role, ScriptedResponder};
use verbal_trader::market_data::{align, GapPolicies};
use verbal_trader::orchestrator::RunConfig;
use verbal_trader::{Bar, MarketDataset, NewsItem, OnChainDaily, SentimentDaily};

pub const LOOKBACK: usize = 30;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1)
        .unwrap()
        .checked_add_days(Days::new(i as u64))
        .unwrap()
}

/// `n` daily bars on a wavy path with a slow drift.
pub fn bars(n: usize) -> Vec<Bar> {
    let mut close = 30_000.0;
    (0..n)
        .map(|i| {
            let x = i as f64;
            let open = close;
            close = open * (1.0 + 0.02 * (x * 0.37).sin() + 0.0004);
            let spread = 1.005 + 0.01 * (x * 0.11).cos().abs();
            Bar {
                date: day(i),
                open,
                high: open.max(close) * spread,
                low: open.min(close) / spread,
                close,
                volume: 20_000.0 + 5_000.0 * (x * 0.23).sin(),
            }
        })
        .collect()
}

pub fn dataset(n: usize) -> MarketDataset {
    let bars = bars(n);
    let onchain: Vec<_> = bars
        .iter()
        .enumerate()
        .map(|(i, b)| OnChainDaily {
            date: b.date,
            tx_count: 300_000 + (i as u64 * 7919) % 100_000,
            active_addresses: 600_000 + (i as u64 * 104_729) % 200_000,
            transfer_volume_usd: 2e10 + 1e8 * (i % 50) as f64,
        })
        .collect();
    let sentiment: Vec<_> = bars
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let fgi = (20 + (i * 13) % 70) as u8;
            SentimentDaily {
                date: b.date,
                social_score_mean: 0.3 * (i as f64 * 0.5).sin(),
                fgi_value: fgi,
                fgi_label: if fgi < 45 { "Fear".into() } else { "Greed".into() },
            }
        })
        .collect();
    let news: Vec<_> = bars
        .iter()
        .step_by(2)
        .map(|b| NewsItem {
            date: b.date,
            source: "wire".into(),
            headline: "ETF inflows accelerate".into(),
            summary: format!("Spot fund inflows continued on {}", b.date),
        })
        .collect();
    align(&bars, &onchain, &sentiment, &news, GapPolicies::default()).expect("aligned fixture")
}

fn reply(pct: u32, reasoning: &str) -> String {
    let state = match pct {
        0..=49 => "bearish",
        50 => "neutral",
        _ => "bullish",
    };
    format!(r#"{{"state":"{state}","allocation_btc_pct":{pct},"reasoning":"{reasoning}"}}"#)
}

/// A `days`-day run over [`dataset`] with every reply scripted.
pub fn scripted_run(days: usize) -> (RunConfig, MarketDataset, ScriptedResponder) {
    let data = dataset(LOOKBACK + days + 1);
    let start = day(LOOKBACK - 1);
    let end = day(LOOKBACK + days - 2);
    let mut config = RunConfig::new(start, end);
    config.lookback_days = LOOKBACK;
    let mut script = ScriptedResponder::new();
    for (i, d) in start.iter_days().take(days).enumerate() {
        for (k, role) in Role::TRADING.into_iter().enumerate() {
            let pct = ((i * 17 + k * 29) % 101) as u32;
            script.insert(role, d, vec![reply(pct, &format!("Momentum view with {pct}% in BTC."))]);
        }
        script.insert(
            Role::Reflect,
            d,
            vec![r#"{"quants":"Weigh RSI against the trend.","signals":"Separate noise from flows.","decision":"Stay closer to the stronger analyst."}"#.into()],
        );
    }
    (config, data, script)
}
