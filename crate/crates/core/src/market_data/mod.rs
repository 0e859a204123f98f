//! Per-date market, on-chain, sentiment and news inputs.
//!
//! Loading is CSV-only (one file per series). The optional HTTP fetchers in
//! [`fetch`] produce the same record types and cache every raw response so a
//! run can be rebuilt offline.

mod align;
mod csv_io;
pub mod fetch;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align, slice, GapPolicy, GapPolicies, MarketDataset, MarketRecord};
pub use csv_io::{load_bars, load_news, load_onchain, load_sentiment, save_news, save_sentiment};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed row at line {line}: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: invariant violated at line {line}: {message}")]
    InvariantViolation {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: duplicate date {date}")]
    DuplicateDate { path: String, date: NaiveDate },
    #[error("gap in {series} series at {date}")]
    Gap { series: &'static str, date: NaiveDate },
    #[error("no bars supplied")]
    NoBars,
    #[error("date {0} not in dataset")]
    DateNotFound(NaiveDate),
    #[error("window ending {date} needs {needed} records, only {available} available")]
    InsufficientHistory {
        date: NaiveDate,
        needed: usize,
        available: usize,
    },
}

/// Daily OHLCV bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Returns a description of the first violated invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be a positive price, got {v}"));
            }
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("volume must be >= 0, got {}", self.volume));
        }
        if self.low > self.high {
            return Err(format!("low {} above high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }

    pub fn typical_price(&self) -> f64 {
        (self.high + self.low + self.close) / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnChainDaily {
    pub date: NaiveDate,
    pub tx_count: u64,
    pub active_addresses: u64,
    pub transfer_volume_usd: f64,
}

impl OnChainDaily {
    pub fn check(&self) -> Result<(), String> {
        if !(self.transfer_volume_usd.is_finite() && self.transfer_volume_usd >= 0.0) {
            return Err(format!(
                "transfer_volume_usd must be >= 0, got {}",
                self.transfer_volume_usd
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentDaily {
    pub date: NaiveDate,
    pub social_score_mean: f64,
    pub fgi_value: u8,
    pub fgi_label: String,
}

impl SentimentDaily {
    pub fn check(&self) -> Result<(), String> {
        if !(-1.0..=1.0).contains(&self.social_score_mean) {
            return Err(format!(
                "social_score_mean must lie in [-1, 1], got {}",
                self.social_score_mean
            ));
        }
        if self.fgi_value > 100 {
            return Err(format!("fgi_value must lie in [0, 100], got {}", self.fgi_value));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NewsItem {
    pub date: NaiveDate,
    pub source: String,
    pub headline: String,
    pub summary: String,
}

impl NewsItem {
    pub fn check(&self) -> Result<(), String> {
        if self.headline.trim().is_empty() {
            return Err("headline must not be empty".into());
        }
        Ok(())
    }
}
