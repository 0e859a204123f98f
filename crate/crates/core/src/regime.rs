//! Ex-post bullish / bearish / sideways segmentation from moving-average trends.
//!
//! Labels are only used to bucket performance in reports; agents never see them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegimeError {
    #[error("regime classification needs {needed} closes, got {got}")]
    WindowTooShort { needed: usize, got: usize },
    #[error("invalid regime parameters: {0}")]
    InvalidParams(String),
    #[error("closes and dates differ in length ({closes} vs {dates})")]
    LengthMismatch { closes: usize, dates: usize },
    #[error("segmentation file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeParams {
    pub ma_window: usize,
    pub slope_lookback: usize,
    /// Minimum normalized MA slope per day for a trend label.
    pub slope_threshold: f64,
    pub min_span_days: usize,
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self {
            ma_window: 50,
            slope_lookback: 10,
            slope_threshold: 0.001,
            min_span_days: 14,
        }
    }
}

impl RegimeParams {
    pub fn validate(&self) -> Result<(), RegimeError> {
        if self.ma_window < 2 {
            return Err(RegimeError::InvalidParams("ma_window must be >= 2".into()));
        }
        if self.slope_lookback < 1 || self.min_span_days < 1 {
            return Err(RegimeError::InvalidParams(
                "slope_lookback and min_span_days must be >= 1".into(),
            ));
        }
        if !(self.slope_threshold.is_finite() && self.slope_threshold >= 0.0) {
            return Err(RegimeError::InvalidParams("slope_threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// Closes needed before the first day can be classified.
    pub fn warm_up(&self) -> usize {
        self.ma_window + self.slope_lookback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeLabel {
    Bullish,
    Bearish,
    Sideways,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Bullish => "Bullish",
            RegimeLabel::Bearish => "Bearish",
            RegimeLabel::Sideways => "Sideways",
        })
    }
}

impl FromStr for RegimeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bullish" | "bull" => Ok(RegimeLabel::Bullish),
            "bearish" | "bear" => Ok(RegimeLabel::Bearish),
            "sideways" | "flat" => Ok(RegimeLabel::Sideways),
            other => Err(format!("unknown regime label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: RegimeLabel,
}

impl RegimeSpan {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSegmentation {
    pub spans: Vec<RegimeSpan>,
}

impl RegimeSegmentation {
    pub fn label_on(&self, date: NaiveDate) -> Option<RegimeLabel> {
        self.spans.iter().find(|s| s.contains(date)).map(|s| s.label)
    }

    /// Labels in order of first appearance.
    pub fn labels(&self) -> Vec<RegimeLabel> {
        let mut out = Vec::new();
        for s in &self.spans {
            if !out.contains(&s.label) {
                out.push(s.label);
            }
        }
        out
    }

    /// Restricts the spans to `[from, to]`, dropping spans outside it.
    pub fn clip(&self, from: NaiveDate, to: NaiveDate) -> Self {
        let spans = self
            .spans
            .iter()
            .filter(|s| s.end >= from && s.start <= to)
            .map(|s| RegimeSpan {
                start: s.start.max(from),
                end: s.end.min(to),
                label: s.label,
            })
            .collect();
        Self { spans }
    }

    /// Reads a `start_date,end_date,label` override file.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, RegimeError> {
        let path = path.as_ref();
        let err = |message: String| RegimeError::File {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| err(e.to_string()))?;
        let mut spans = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| err(e.to_string()))?;
            if row.len() != 3 {
                return Err(err(format!("expected 3 columns, got {}", row.len())));
            }
            let date = |i: usize| {
                NaiveDate::parse_from_str(&row[i], "%Y-%m-%d").map_err(|e| err(format!("{:?}: {e}", &row[i])))
            };
            let span = RegimeSpan {
                start: date(0)?,
                end: date(1)?,
                label: row[2].parse().map_err(err)?,
            };
            if span.end < span.start {
                return Err(err(format!("span {} ends before it starts", span.start)));
            }
            spans.push(span);
        }
        spans.sort_by_key(|s| s.start);
        if let Some(w) = spans.windows(2).find(|w| w[1].start <= w[0].end) {
            return Err(err(format!("spans overlap at {}", w[1].start)));
        }
        Ok(Self { spans })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("start_date,end_date,label\n");
        for s in &self.spans {
            out.push_str(&format!("{},{},{}\n", s.start, s.end, s.label));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Label for the last close in `closes`.
pub fn classify_day(closes: &[f64], params: &RegimeParams) -> Result<RegimeLabel, RegimeError> {
    params.validate()?;
    let needed = params.warm_up();
    if closes.len() < needed {
        return Err(RegimeError::WindowTooShort {
            needed,
            got: closes.len(),
        });
    }
    let n = closes.len();
    let lag = params.slope_lookback;
    let ma_now = mean(&closes[n - params.ma_window..]);
    let ma_then = mean(&closes[n - lag - params.ma_window..n - lag]);
    let slope = (ma_now - ma_then) / (lag as f64 * ma_then);
    let close = closes[n - 1];
    Ok(if close > ma_now && slope > params.slope_threshold {
        RegimeLabel::Bullish
    } else if close < ma_now && slope < -params.slope_threshold {
        RegimeLabel::Bearish
    } else {
        RegimeLabel::Sideways
    })
}

/// Per-day labels for the full range, warm-up days back-filled with the
/// first computable label.
pub fn daily_labels(closes: &[f64], params: &RegimeParams) -> Result<Vec<RegimeLabel>, RegimeError> {
    params.validate()?;
    let warm = params.warm_up();
    if closes.len() < warm {
        return Err(RegimeError::WindowTooShort {
            needed: warm,
            got: closes.len(),
        });
    }
    let computed = (warm..=closes.len())
        .map(|end| classify_day(&closes[..end], params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut labels = vec![computed[0]; warm - 1];
    labels.extend(computed);
    Ok(labels)
}

/// Run-length spans `(start_index, end_index, label)` after merging runs
/// shorter than `min_span` into their predecessor. A short leading run is
/// merged into the run that follows it.
pub fn merge_short_runs(labels: &[RegimeLabel], min_span: usize) -> Vec<(usize, usize, RegimeLabel)> {
    let mut runs: Vec<(usize, usize, RegimeLabel)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == l => r.1 = i,
            _ => runs.push((i, i, l)),
        }
    }
    let mut merged: Vec<(usize, usize, RegimeLabel)> = Vec::new();
    for run in runs {
        let len = run.1 - run.0 + 1;
        match merged.last_mut() {
            Some(prev) if len < min_span || prev.2 == run.2 => prev.1 = run.1,
            _ => merged.push(run),
        }
    }
    if merged.len() > 1 && merged[0].1 - merged[0].0 + 1 < min_span {
        let first = merged.remove(0);
        merged[0].0 = first.0;
    }
    merged
}

/// Segments a contiguous daily close series into regime spans.
pub fn segment(dates: &[NaiveDate], closes: &[f64], params: &RegimeParams) -> Result<RegimeSegmentation, RegimeError> {
    if dates.len() != closes.len() {
        return Err(RegimeError::LengthMismatch {
            closes: closes.len(),
            dates: dates.len(),
        });
    }
    let labels = daily_labels(closes, params)?;
    let spans = merge_short_runs(&labels, params.min_span_days)
        .into_iter()
        .map(|(a, b, label)| RegimeSpan {
            start: dates[a],
            end: dates[b],
            label,
        })
        .collect();
    Ok(RegimeSegmentation { spans })
}
