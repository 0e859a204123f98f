//! Optional HTTP adapters for the sentiment and news feeds.
//!
//! Every raw body is written to `<cache_dir>/<source>/<key>.json` before it is
//! parsed. A cached body is always preferred over the network, so re-running a
//! fetch with `offline = true` reproduces the original parse exactly. The
//! backtest itself never calls into this module.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{NewsItem, SentimentDaily};

pub const FGI_SOURCE: &str = "fgi";
pub const SOCIAL_SOURCE: &str = "senticrypt";
pub const NEWS_SOURCE: &str = "gnews";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network error fetching {url} after {attempts} attempt(s): {message}")]
    Network {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("unexpected response schema from {source_name}: {message}")]
    Schema { source_name: String, message: String },
    #[error("cache io error on {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("offline mode and no cached response at {0}")]
    CacheMiss(PathBuf),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key, if the feed needs one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub backoff_ms: u64,
    pub cache_dir: PathBuf,
    /// Never touch the network; every request must be served from the cache.
    #[serde(default)]
    pub offline: bool,
}

fn default_attempts() -> u32 {
    3
}

fn default_timeout() -> u64 {
    30
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: None,
            max_attempts: default_attempts(),
            timeout_secs: default_timeout(),
            backoff_ms: 0,
            cache_dir: cache_dir.into(),
            offline: false,
        }
    }

    fn api_key(&self) -> Result<Option<String>, FetchError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| FetchError::MissingApiKey(var.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgiReading {
    pub date: NaiveDate,
    pub value: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialReading {
    pub date: NaiveDate,
    pub mean: f64,
}

pub fn cache_path(cache_dir: &Path, source: &str, key: &str) -> PathBuf {
    cache_dir.join(source).join(format!("{key}.json"))
}

fn get_cached(
    cfg: &EndpointConfig,
    source: &str,
    key: &str,
    query: &[(&str, String)],
) -> Result<String, FetchError> {
    let path = cache_path(&cfg.cache_dir, source, key);
    if path.exists() {
        return fs::read_to_string(&path).map_err(|source| FetchError::Cache { path, source });
    }
    if cfg.offline {
        return Err(FetchError::CacheMiss(path));
    }
    let body = http_get(cfg, query)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| FetchError::Cache {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, &body).map_err(|source| FetchError::Cache { path, source })?;
    Ok(body)
}

fn http_get(cfg: &EndpointConfig, query: &[(&str, String)]) -> Result<String, FetchError> {
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build();
    let attempts = cfg.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let mut req = agent.get(&cfg.base_url);
        for (k, v) in query {
            req = req.query(k, v);
        }
        match req.call() {
            Ok(resp) => {
                return resp.into_string().map_err(|e| FetchError::Network {
                    url: cfg.base_url.clone(),
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
            Err(ureq::Error::Status(code, _)) if code != 429 && code < 500 => {
                return Err(FetchError::Network {
                    url: cfg.base_url.clone(),
                    attempts: attempt,
                    message: format!("HTTP {code}"),
                });
            }
            Err(e) => {
                log::warn!("fetch attempt {attempt}/{attempts} for {} failed: {e}", cfg.base_url);
                last = e.to_string();
                if attempt < attempts && cfg.backoff_ms > 0 {
                    thread::sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1)));
                }
            }
        }
    }
    Err(FetchError::Network {
        url: cfg.base_url.clone(),
        attempts,
        message: last,
    })
}

fn schema(source: &str, message: impl Into<String>, body: &str) -> FetchError {
    let message = message.into();
    log::error!("{source} schema error: {message}; body: {body}");
    FetchError::Schema {
        source_name: source.to_string(),
        message,
    }
}

fn unix_date(source: &str, v: &Value, body: &str) -> Result<NaiveDate, FetchError> {
    let secs: i64 = match v {
        Value::String(s) => s
            .parse()
            .map_err(|_| schema(source, format!("timestamp {s:?} is not an integer"), body))?,
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| schema(source, "timestamp is not an integer", body))?,
        _ => return Err(schema(source, "missing timestamp", body)),
    };
    DateTime::from_timestamp(secs, 0)
        .map(|dt| dt.date_naive())
        .ok_or_else(|| schema(source, format!("timestamp {secs} out of range"), body))
}

/// Parses an Alternative.me `/fng/` body: `{"data":[{"value":"70","value_classification":"Greed","timestamp":"1730678400"}]}`.
pub fn parse_fgi(body: &str) -> Result<Vec<FgiReading>, FetchError> {
    let root: Value =
        serde_json::from_str(body).map_err(|e| schema(FGI_SOURCE, e.to_string(), body))?;
    let data = root
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(FGI_SOURCE, "missing data array", body))?;
    let mut out = Vec::with_capacity(data.len());
    for entry in data {
        let value = match entry.get("value") {
            Some(Value::String(s)) => s.trim().parse::<u8>().ok(),
            Some(Value::Number(n)) => n.as_u64().and_then(|v| u8::try_from(v).ok()),
            _ => None,
        }
        .filter(|v| *v <= 100)
        .ok_or_else(|| schema(FGI_SOURCE, format!("bad value field in {entry}"), body))?;
        let label = entry
            .get("value_classification")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(FGI_SOURCE, "missing value_classification", body))?
            .to_string();
        let date = unix_date(FGI_SOURCE, entry.get("timestamp").unwrap_or(&Value::Null), body)?;
        out.push(FgiReading { date, value, label });
    }
    out.sort_by_key(|r| r.date);
    Ok(out)
}

/// Parses a Senticrypt-style body: `[{"date":"2024-11-04","mean":0.1164, ...}]`.
pub fn parse_social(body: &str) -> Result<Vec<SocialReading>, FetchError> {
    let root: Value =
        serde_json::from_str(body).map_err(|e| schema(SOCIAL_SOURCE, e.to_string(), body))?;
    let rows = root
        .as_array()
        .ok_or_else(|| schema(SOCIAL_SOURCE, "expected a JSON array", body))?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let date = row
            .get("date")
            .and_then(Value::as_str)
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(|| schema(SOCIAL_SOURCE, format!("bad date in {row}"), body))?;
        let mean = row
            .get("mean")
            .and_then(Value::as_f64)
            .filter(|m| (-1.0..=1.0).contains(m))
            .ok_or_else(|| schema(SOCIAL_SOURCE, format!("bad mean in {row}"), body))?;
        out.push(SocialReading { date, mean });
    }
    out.sort_by_key(|r| r.date);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsPage {
    pub total_articles: u64,
    pub items: Vec<NewsItem>,
}

#[derive(Deserialize)]
struct GnewsBody {
    #[serde(rename = "totalArticles", default)]
    total_articles: u64,
    articles: Vec<GnewsArticle>,
}

#[derive(Deserialize)]
struct GnewsArticle {
    title: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(rename = "publishedAt")]
    published_at: String,
    source: GnewsSource,
}

#[derive(Deserialize)]
struct GnewsSource {
    name: String,
}

/// Parses one GNews search page.
pub fn parse_news_page(body: &str) -> Result<NewsPage, FetchError> {
    let parsed: GnewsBody =
        serde_json::from_str(body).map_err(|e| schema(NEWS_SOURCE, e.to_string(), body))?;
    let mut items = Vec::with_capacity(parsed.articles.len());
    for a in parsed.articles {
        let date = DateTime::parse_from_rfc3339(&a.published_at)
            .map(|dt| dt.date_naive())
            .map_err(|e| schema(NEWS_SOURCE, format!("publishedAt {:?}: {e}", a.published_at), body))?;
        if a.title.trim().is_empty() {
            continue;
        }
        items.push(NewsItem {
            date,
            source: a.source.name,
            headline: a.title,
            summary: a.description.unwrap_or_default(),
        });
    }
    Ok(NewsPage {
        total_articles: parsed.total_articles,
        items,
    })
}

fn in_range(d: NaiveDate, from: NaiveDate, to: NaiveDate) -> bool {
    d >= from && d <= to
}

/// Fear & Greed readings for `[from, to]`. The whole history is requested in
/// one call and cached under the range end date.
pub fn fetch_fgi(cfg: &EndpointConfig, from: NaiveDate, to: NaiveDate) -> Result<Vec<FgiReading>, FetchError> {
    let query = [("limit", "0".to_string()), ("format", "json".to_string())];
    let body = get_cached(cfg, FGI_SOURCE, &to.to_string(), &query)?;
    Ok(parse_fgi(&body)?
        .into_iter()
        .filter(|r| in_range(r.date, from, to))
        .collect())
}

/// Daily social-sentiment means for `[from, to]`.
pub fn fetch_social(cfg: &EndpointConfig, from: NaiveDate, to: NaiveDate) -> Result<Vec<SocialReading>, FetchError> {
    let body = get_cached(cfg, SOCIAL_SOURCE, &to.to_string(), &[])?;
    Ok(parse_social(&body)?
        .into_iter()
        .filter(|r| in_range(r.date, from, to))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsQuery {
    pub query: String,
    /// Keep only items whose source name matches one of these (case-insensitive).
    /// Empty keeps everything.
    #[serde(default)]
    pub sources: Vec<String>,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
    #[serde(default = "default_max_pages")]
    pub max_pages: u32,
}

fn default_page_size() -> u32 {
    10
}

fn default_max_pages() -> u32 {
    5
}

impl NewsQuery {
    pub fn keeps(&self, item: &NewsItem) -> bool {
        self.sources.is_empty() || self.sources.iter().any(|s| s.eq_ignore_ascii_case(&item.source))
    }
}

/// News for each day in `[from, to]`, one paginated search per day.
/// Page 1 is cached as `<date>.json`, later pages as `<date>-p<n>.json`.
pub fn fetch_news(
    cfg: &EndpointConfig,
    query: &NewsQuery,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<NewsItem>, FetchError> {
    let key = if cfg.offline { None } else { cfg.api_key()? };
    let mut out = Vec::new();
    for day in from.iter_days().take_while(|d| *d <= to) {
        let mut seen = 0u64;
        for page in 1..=query.max_pages.max(1) {
            let mut params = vec![
                ("q", query.query.clone()),
                ("lang", "en".to_string()),
                ("from", format!("{day}T00:00:00Z")),
                ("to", format!("{day}T23:59:59Z")),
                ("max", query.page_size.to_string()),
                ("page", page.to_string()),
            ];
            if let Some(k) = &key {
                params.push(("apikey", k.clone()));
            }
            let cache_key = if page == 1 {
                day.to_string()
            } else {
                format!("{day}-p{page}")
            };
            let body = get_cached(cfg, NEWS_SOURCE, &cache_key, &params)?;
            let parsed = parse_news_page(&body)?;
            let n = parsed.items.len() as u64;
            out.extend(parsed.items.into_iter().filter(|i| query.keeps(i)));
            seen += n;
            if n == 0 || seen >= parsed.total_articles {
                break;
            }
        }
    }
    Ok(super::csv_io::dedup_news(out))
}

/// Joins FGI and social readings on date; dates missing either side are dropped.
pub fn merge_sentiment(fgi: &[FgiReading], social: &[SocialReading]) -> Vec<SentimentDaily> {
    let social: std::collections::HashMap<NaiveDate, f64> =
        social.iter().map(|s| (s.date, s.mean)).collect();
    let mut out: Vec<SentimentDaily> = fgi
        .iter()
        .filter_map(|f| {
            social.get(&f.date).map(|mean| SentimentDaily {
                date: f.date,
                social_score_mean: *mean,
                fgi_value: f.value,
                fgi_label: f.label.clone(),
            })
        })
        .collect();
    out.sort_by_key(|s| s.date);
    out
}
