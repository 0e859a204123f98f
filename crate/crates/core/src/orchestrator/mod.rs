//! Day loop, run journal, replay and reporting.

mod config;
mod journal;
mod report;
mod run;

use chrono::NaiveDate;
use thiserror::Error;

pub use config::{DataPaths, FeedbackConfig, RunConfig};
pub use journal::{
    digest_of, sha256_hex, AgentRecord, BaselineValues, DayRecord, JournalHeader, RunJournal, WeeklyRecord,
    SCHEMA_VERSION,
};
pub use report::{replay, report, ReportOptions, ReportOutput, BASELINE_COLUMN, BUY_HOLD_COLUMN};
pub use run::{run_backtest, run_segmentation};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::market_data::DataError),
    #[error(transparent)]
    Indicator(#[from] crate::indicators::IndicatorError),
    #[error(transparent)]
    Regime(#[from] crate::regime::RegimeError),
    #[error(transparent)]
    Portfolio(#[from] crate::portfolio::PortfolioError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Reflection(#[from] crate::reflection::ReflectionError),
    #[error("dataset has no bar for {0}")]
    Coverage(NaiveDate),
    #[error("{series} missing on {date}")]
    MissingInput { date: NaiveDate, series: &'static str },
    #[error("journal corrupt at line {line}: {reason}")]
    JournalCorrupt { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}
