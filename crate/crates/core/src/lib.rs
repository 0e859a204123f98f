//! Deterministic multi-agent BTC/cash backtesting: data alignment, technical
//! indicators, regime labelling, portfolio accounting, metrics, LLM agent
//! prompting, verbal feedback and the day-loop orchestrator.

pub mod agents;
pub mod indicators;
pub mod market_data;
pub mod metrics;
pub mod orchestrator;
pub mod portfolio;
pub mod reflection;
pub mod regime;

#[cfg(test)]
mod testutil;

pub use agents::{AgentDecision, MarketState, Prediction, PromptBundle, Role};
pub use indicators::{IndicatorParams, IndicatorSnapshot};
pub use market_data::{Bar, MarketDataset, NewsItem, OnChainDaily, SentimentDaily};
pub use metrics::MetricsReport;
pub use portfolio::{Allocation, FeeModel, PortfolioState};
pub use regime::{RegimeLabel, RegimeParams, RegimeSegmentation};
