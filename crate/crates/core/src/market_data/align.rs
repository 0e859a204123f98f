use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Bar, DataError, NewsItem, OnChainDaily, SentimentDaily};

/// How a missing date in a non-bar series is handled.
///
/// Dates before a series' first observation are always left empty (indicator
/// warm-up usually predates the sentiment feeds); the policy governs gaps
/// after that point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPolicy {
    #[default]
    CarryForward,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GapPolicies {
    #[serde(default)]
    pub onchain: GapPolicy,
    #[serde(default)]
    pub sentiment: GapPolicy,
}

impl GapPolicies {
    pub fn strict() -> Self {
        Self {
            onchain: GapPolicy::Strict,
            sentiment: GapPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub bar: Bar,
    pub onchain: Option<OnChainDaily>,
    pub sentiment: Option<SentimentDaily>,
    pub news: Vec<NewsItem>,
    /// Set when `onchain` was carried forward from an earlier date.
    pub onchain_carried: bool,
    /// Set when `sentiment` was carried forward from an earlier date.
    pub sentiment_carried: bool,
}

impl MarketRecord {
    pub fn date(&self) -> NaiveDate {
        self.bar.date
    }
}

/// One record per calendar day, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDataset {
    records: Vec<MarketRecord>,
}

impl MarketDataset {
    pub fn records(&self) -> &[MarketRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.records[0].date()
    }

    pub fn last_date(&self) -> NaiveDate {
        self.records[self.records.len() - 1].date()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let first = self.first_date();
        let offset = (date - first).num_days();
        if offset < 0 || offset as usize >= self.records.len() {
            None
        } else {
            Some(offset as usize)
        }
    }

    pub fn get(&self, date: NaiveDate) -> Option<&MarketRecord> {
        self.index_of(date).map(|i| &self.records[i])
    }

    pub fn closes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.bar.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.date()).collect()
    }

    /// The observed (non-carried) series this dataset was built from.
    pub fn series(&self) -> (Vec<Bar>, Vec<OnChainDaily>, Vec<SentimentDaily>, Vec<NewsItem>) {
        let bars = self.records.iter().map(|r| r.bar).collect();
        let onchain = self
            .records
            .iter()
            .filter(|r| !r.onchain_carried)
            .filter_map(|r| r.onchain)
            .collect();
        let sentiment = self
            .records
            .iter()
            .filter(|r| !r.sentiment_carried)
            .filter_map(|r| r.sentiment.clone())
            .collect();
        let news = self.records.iter().flat_map(|r| r.news.iter().cloned()).collect();
        (bars, onchain, sentiment, news)
    }
}

fn fill<T: Clone>(
    dates: &[NaiveDate],
    observed: BTreeMap<NaiveDate, T>,
    policy: GapPolicy,
    series: &'static str,
    redate: impl Fn(&mut T, NaiveDate),
) -> Result<Vec<(Option<T>, bool)>, DataError> {
    let mut out = Vec::with_capacity(dates.len());
    let mut last: Option<T> = None;
    for &date in dates {
        match observed.get(&date) {
            Some(v) => {
                last = Some(v.clone());
                out.push((Some(v.clone()), false));
            }
            None => match (&last, policy) {
                (None, _) => out.push((None, false)),
                (Some(_), GapPolicy::Strict) => return Err(DataError::Gap { series, date }),
                (Some(prev), GapPolicy::CarryForward) => {
                    let mut carried = prev.clone();
                    redate(&mut carried, date);
                    out.push((Some(carried), true));
                }
            },
        }
    }
    Ok(out)
}

/// Joins the four series onto the bar calendar.
///
/// Bars must form a contiguous daily calendar. Sorting is not assumed.
pub fn align(
    bars: &[Bar],
    onchain: &[OnChainDaily],
    sentiment: &[SentimentDaily],
    news: &[NewsItem],
    gaps: GapPolicies,
) -> Result<MarketDataset, DataError> {
    if bars.is_empty() {
        return Err(DataError::NoBars);
    }
    let mut bars = bars.to_vec();
    bars.sort_by_key(|b| b.date);
    for w in bars.windows(2) {
        let step = (w[1].date - w[0].date).num_days();
        if step == 0 {
            return Err(DataError::DuplicateDate {
                path: "<bars>".into(),
                date: w[1].date,
            });
        }
        if step != 1 {
            return Err(DataError::Gap {
                series: "bars",
                date: w[0].date.succ_opt().expect("date overflow"),
            });
        }
    }
    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();

    let onchain_map = onchain.iter().map(|r| (r.date, *r)).collect();
    let sentiment_map = sentiment.iter().map(|r| (r.date, r.clone())).collect();
    let onchain = fill(&dates, onchain_map, gaps.onchain, "onchain", |r, d| r.date = d)?;
    let sentiment = fill(&dates, sentiment_map, gaps.sentiment, "sentiment", |r, d| r.date = d)?;

    let mut news_by_date: BTreeMap<NaiveDate, Vec<NewsItem>> = BTreeMap::new();
    for item in super::csv_io::dedup_news(news.to_vec()) {
        news_by_date.entry(item.date).or_default().push(item);
    }

    let records = bars
        .into_iter()
        .zip(onchain)
        .zip(sentiment)
        .map(|((bar, (onchain, onchain_carried)), (sentiment, sentiment_carried))| MarketRecord {
            news: news_by_date.remove(&bar.date).unwrap_or_default(),
            bar,
            onchain,
            sentiment,
            onchain_carried,
            sentiment_carried,
        })
        .collect();
    Ok(MarketDataset { records })
}

/// Window of at most `lookback` records ending at `date` (inclusive).
///
/// With `allow_partial` the window is truncated at the start of the dataset;
/// otherwise a short history is an error.
pub fn slice(
    dataset: &MarketDataset,
    date: NaiveDate,
    lookback: usize,
    allow_partial: bool,
) -> Result<&[MarketRecord], DataError> {
    let end = dataset.index_of(date).ok_or(DataError::DateNotFound(date))?;
    let lookback = lookback.max(1);
    let available = end + 1;
    if available < lookback && !allow_partial {
        return Err(DataError::InsufficientHistory {
            date,
            needed: lookback,
            available,
        });
    }
    let start = available.saturating_sub(lookback);
    Ok(&dataset.records[start..=end])
}
