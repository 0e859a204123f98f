use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::agents::{ChatClientConfig, Role};
use crate::indicators::IndicatorParams;
use crate::market_data::{self, align, GapPolicies, MarketDataset};
use crate::portfolio::FeeModel;
use crate::reflection::{ScopeRules, TemplatePool, TemplateThresholds};
use crate::regime::{RegimeParams, RegimeSegmentation};

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub bars: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onchain: Option<PathBuf>,
    pub sentiment: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news: Option<PathBuf>,
    /// Precomputed regime spans (`start_date,end_date,label`); derived from
    /// the bars when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<PathBuf>,
    #[serde(default)]
    pub gaps: GapPolicies,
}

impl DataPaths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.bars);
        fix(&mut self.sentiment);
        for p in [&mut self.onchain, &mut self.news, &mut self.regimes].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn load(&self) -> Result<MarketDataset, RunError> {
        let bars = market_data::load_bars(&self.bars)?;
        let onchain = match &self.onchain {
            Some(p) => market_data::load_onchain(p)?,
            None => Vec::new(),
        };
        let sentiment = market_data::load_sentiment(&self.sentiment)?;
        let news = match &self.news {
            Some(p) => market_data::load_news(p)?,
            None => Vec::new(),
        };
        Ok(align(&bars, &onchain, &sentiment, &news, self.gaps)?)
    }

    pub fn load_regimes(&self) -> Result<Option<RegimeSegmentation>, RunError> {
        self.regimes
            .as_ref()
            .map(|p| RegimeSegmentation::load_csv(p).map_err(RunError::from))
            .transpose()
    }
}

fn yes() -> bool {
    true
}

fn all_roles() -> Vec<Role> {
    Role::TRADING.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    #[serde(default = "yes")]
    pub daily: bool,
    #[serde(default = "yes")]
    pub weekly: bool,
    /// Roles that receive weekly templates.
    #[serde(default = "all_roles")]
    pub weekly_roles: Vec<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_file: Option<PathBuf>,
    #[serde(default)]
    pub templates: TemplatePool,
    #[serde(default)]
    pub thresholds: TemplateThresholds,
    #[serde(default)]
    pub scope: ScopeRules,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            daily: true,
            weekly: true,
            weekly_roles: all_roles(),
            templates_file: None,
            templates: TemplatePool::default(),
            thresholds: TemplateThresholds::default(),
            scope: ScopeRules::default(),
        }
    }
}

fn default_initial() -> f64 {
    10_000.0
}

fn default_lookback() -> usize {
    30
}

fn default_band() -> f64 {
    0.005
}

fn default_retry() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// First decision day.
    pub start: NaiveDate,
    /// Last decision day; the data must extend one day past it.
    pub end: NaiveDate,
    #[serde(default = "default_initial")]
    pub initial_value_usd: f64,
    #[serde(default = "default_lookback")]
    pub lookback_days: usize,
    #[serde(default = "default_band")]
    pub neutral_band: f64,
    /// Re-invocations allowed after an unusable reply.
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataPaths>,
    #[serde(default)]
    pub indicators: IndicatorParams,
    #[serde(default)]
    pub regime: RegimeParams,
    #[serde(default)]
    pub fees: FeeModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<ChatClientConfig>,
    #[serde(default)]
    pub feedback: FeedbackConfig,
}

impl RunConfig {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            start,
            end,
            initial_value_usd: default_initial(),
            lookback_days: default_lookback(),
            neutral_band: default_band(),
            retry_limit: default_retry(),
            data: None,
            indicators: IndicatorParams::default(),
            regime: RegimeParams::default(),
            fees: FeeModel::default(),
            llm: None,
            feedback: FeedbackConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, resolving relative paths and inlining the
    /// template file so the resulting value is self-contained.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = &mut cfg.data {
            data.resolve(base);
        }
        if let Some(file) = cfg.feedback.templates_file.take() {
            let file = if file.is_relative() { base.join(file) } else { file };
            cfg.feedback.templates = TemplatePool::load(&file)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.end < self.start {
            return bad(format!("end {} precedes start {}", self.end, self.start));
        }
        if !(self.initial_value_usd.is_finite() && self.initial_value_usd > 0.0) {
            return bad(format!("initial_value_usd must be positive, got {}", self.initial_value_usd));
        }
        if !(self.neutral_band.is_finite() && self.neutral_band >= 0.0) {
            return bad(format!("neutral_band must be >= 0, got {}", self.neutral_band));
        }
        self.indicators.validate()?;
        self.regime.validate()?;
        FeeModel::new(self.fees.fee_bps)?;
        let needed = self.indicators.required_len();
        if self.lookback_days < needed {
            return bad(format!(
                "lookback_days {} is shorter than the {needed} bars the indicators need",
                self.lookback_days
            ));
        }
        Ok(())
    }
}
