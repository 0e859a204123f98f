//! Returns, Sharpe, directional accuracy, regret, and regime-bucketed reports.
//!
//! Sharpe follows the convention of mean over sample standard deviation of
//! daily returns, zero risk-free rate, not annualized.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::MarketState;
use crate::regime::{RegimeLabel, RegimeSegmentation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("value {value} at index {index} is not positive")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("returns have zero dispersion")]
    ZeroDispersion,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series dates differ at index {0}")]
    DateMismatch(usize),
    #[error("no regime covers {0}")]
    Coverage(NaiveDate),
}

/// Dated portfolio values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ValueSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self, MetricsError> {
        if dates.len() != values.len() {
            return Err(MetricsError::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Daily returns dated by the end of each holding period.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

/// `r_t = V_t / V_{t-1} - 1`.
pub fn daily_returns(series: &ValueSeries) -> Result<ReturnSeries, MetricsError> {
    if series.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: series.len(),
        });
    }
    if let Some((index, &value)) = series.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(MetricsError::NonPositiveValue { index, value });
    }
    let returns = series.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    Ok(ReturnSeries {
        dates: series.dates[1..].to_vec(),
        returns,
    })
}

/// `prod(1 + r) - 1`.
pub fn total_return(returns: &[f64]) -> f64 {
    returns.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn sharpe(returns: &[f64]) -> Result<f64, MetricsError> {
    if returns.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: returns.len(),
        });
    }
    let sd = sample_std(returns);
    if returns.iter().all(|r| *r == returns[0]) || sd == 0.0 {
        return Err(MetricsError::ZeroDispersion);
    }
    Ok(mean(returns) / sd)
}

/// Whether `state` called the realized move `r` correctly given the neutral band.
pub fn prediction_correct(state: MarketState, r: f64, neutral_band: f64) -> bool {
    match state {
        MarketState::Bullish => r > neutral_band,
        MarketState::Bearish => r < -neutral_band,
        MarketState::Neutral => r.abs() <= neutral_band,
    }
}

pub fn accuracy(predictions: &[MarketState], realized: &[f64], neutral_band: f64) -> Result<f64, MetricsError> {
    if predictions.len() != realized.len() {
        return Err(MetricsError::LengthMismatch {
            left: predictions.len(),
            right: realized.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    let correct = predictions
        .iter()
        .zip(realized)
        .filter(|(p, r)| prediction_correct(**p, **r, neutral_band))
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Shortfall of the agent's cumulative return against the baseline's, floored at 0.
pub fn regret_from_totals(agent_total: f64, baseline_total: f64) -> f64 {
    (baseline_total - agent_total).max(0.0)
}

pub fn regret(agent: &ValueSeries, baseline: &ValueSeries) -> Result<f64, MetricsError> {
    if agent.len() != baseline.len() {
        return Err(MetricsError::LengthMismatch {
            left: agent.len(),
            right: baseline.len(),
        });
    }
    if let Some(i) = agent.dates.iter().zip(&baseline.dates).position(|(a, b)| a != b) {
        return Err(MetricsError::DateMismatch(i));
    }
    let a = total_return(&daily_returns(agent)?.returns);
    let b = total_return(&daily_returns(baseline)?.returns);
    Ok(regret_from_totals(a, b))
}

/// One cell block of the report: the metrics of one portfolio over one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub days: usize,
    pub total_return: f64,
    /// Percent.
    pub mean_daily: f64,
    /// Percent.
    pub std_daily: f64,
    pub sharpe: Option<f64>,
    pub accuracy: Option<f64>,
    pub regret: Option<f64>,
}

/// A portfolio column: its value path and, for agents, the prediction made at
/// the start of each holding period.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    pub values: ValueSeries,
    pub predictions: Option<Vec<MarketState>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bucket {
    All,
    Regime(RegimeLabel),
}

impl Bucket {
    pub fn title(&self) -> String {
        match self {
            Bucket::All => "All Periods".into(),
            Bucket::Regime(l) => l.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSection {
    pub bucket: Bucket,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub columns: Vec<String>,
    pub sections: Vec<ReportSection>,
}

/// Metrics over the returns selected by `mask`.
fn bucket_row(
    returns: &[f64],
    predictions: Option<&[MarketState]>,
    realized: &[f64],
    baseline: Option<&[f64]>,
    mask: &[bool],
    neutral_band: f64,
) -> MetricsRow {
    let pick = |xs: &[f64]| -> Vec<f64> { xs.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect() };
    let rs = pick(returns);
    let total = total_return(&rs);
    let accuracy = predictions.and_then(|p| {
        let preds: Vec<MarketState> = p.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect();
        accuracy(&preds, &pick(realized), neutral_band).ok()
    });
    let regret = baseline.map(|b| regret_from_totals(total, total_return(&pick(b))));
    MetricsRow {
        days: rs.len(),
        total_return: total,
        mean_daily: mean(&rs) * 100.0,
        std_daily: sample_std(&rs) * 100.0,
        sharpe: sharpe(&rs).ok(),
        accuracy,
        regret,
    }
}

/// Table of metrics per portfolio, for all periods and for each regime label.
///
/// Returns of spans sharing a label are concatenated. `realized` holds the
/// BTC return of each holding period (scored against predictions); the
/// `regret_baseline` column index, when given, is the reference for regret.
pub fn regime_report(
    tracks: &[Track],
    realized: &ReturnSeries,
    segmentation: Option<&RegimeSegmentation>,
    regret_baseline: Option<usize>,
    neutral_band: f64,
) -> Result<MetricsReport, MetricsError> {
    let mut returns = Vec::with_capacity(tracks.len());
    for t in tracks {
        let r = daily_returns(&t.values)?;
        if r.dates != realized.dates {
            let i = r.dates.iter().zip(&realized.dates).position(|(a, b)| a != b).unwrap_or(r.dates.len().min(realized.dates.len()));
            return Err(MetricsError::DateMismatch(i));
        }
        if let Some(p) = &t.predictions {
            if p.len() != r.returns.len() {
                return Err(MetricsError::LengthMismatch {
                    left: p.len(),
                    right: r.returns.len(),
                });
            }
        }
        returns.push(r.returns);
    }
    let baseline = regret_baseline.map(|i| returns[i].clone());

    let mut buckets = vec![(Bucket::All, vec![true; realized.dates.len()])];
    if let Some(seg) = segmentation {
        let labels = realized
            .dates
            .iter()
            .map(|d| seg.label_on(*d).ok_or(MetricsError::Coverage(*d)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut order: Vec<RegimeLabel> = Vec::new();
        for l in &labels {
            if !order.contains(l) {
                order.push(*l);
            }
        }
        for label in order {
            buckets.push((Bucket::Regime(label), labels.iter().map(|l| *l == label).collect()));
        }
    }

    let sections = buckets
        .into_iter()
        .map(|(bucket, mask)| ReportSection {
            bucket,
            rows: tracks
                .iter()
                .zip(&returns)
                .enumerate()
                .map(|(i, (t, r))| {
                    let base = match (baseline.as_deref(), regret_baseline) {
                        (Some(b), Some(bi)) if bi != i => Some(b),
                        _ => None,
                    };
                    bucket_row(r, t.predictions.as_deref(), &realized.returns, base, &mask, neutral_band)
                })
                .collect(),
        })
        .collect();
    Ok(MetricsReport {
        columns: tracks.iter().map(|t| t.name.clone()).collect(),
        sections,
    })
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_else(|| "--".into())
}

const METRICS: [&str; 5] = [
    "Total Return (%)",
    "Daily Return (mean ± std)",
    "Sharpe Ratio",
    "Accuracy",
    "Regret (%)",
];

fn cells(row: &MetricsRow) -> [String; 5] {
    [
        format!("{:.2}", row.total_return * 100.0),
        format!("{:.3} ± {:.3}", row.mean_daily, row.std_daily),
        opt(row.sharpe, |v| format!("{v:.4}")),
        opt(row.accuracy, |v| format!("{v:.4}")),
        opt(row.regret, |v| format!("{:.2}", v * 100.0)),
    ]
}

impl MetricsReport {
    pub fn section(&self, bucket: Bucket) -> Option<&ReportSection> {
        self.sections.iter().find(|s| s.bucket == bucket)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Aligned plain-text table, one block of metric rows per bucket.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Regime".to_string(), "Metric".to_string()];
        header.extend(self.columns.iter().cloned());
        grid.push(header);
        for section in &self.sections {
            let per_col: Vec<[String; 5]> = section.rows.iter().map(cells).collect();
            for (m, metric) in METRICS.iter().enumerate() {
                let mut line = vec![
                    if m == 0 { section.bucket.title() } else { String::new() },
                    metric.to_string(),
                ];
                line.extend(per_col.iter().map(|c| c[m].clone()));
                grid.push(line);
            }
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    let pad = widths[c] - cell.chars().count();
                    if c < 2 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        out
    }

    /// `regime,metric,<column>...` with the same cell formatting as the text table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["regime".to_string(), "metric".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for section in &self.sections {
            let per_col: Vec<[String; 5]> = section.rows.iter().map(cells).collect();
            for (m, metric) in METRICS.iter().enumerate() {
                let mut line = vec![section.bucket.title(), metric.to_string()];
                line.extend(per_col.iter().map(|c| c[m].clone()));
                w.write_record(&line).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::RegimeSpan;
    use proptest::prelude::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        NaiveDate::from_ymd_opt(2024, 7, 1).unwrap().iter_days().take(n).collect()
    }

    #[test]
    fn daily_returns_examples() {
        let v = ValueSeries::new(dates(2), vec![100.0, 110.0]).unwrap();
        let r = daily_returns(&v).unwrap();
        assert!((r.returns[0] - 0.10).abs() < 1e-15);
        assert_eq!(r.dates, vec![dates(2)[1]]);
        let flat = ValueSeries::new(dates(4), vec![5.0; 4]).unwrap();
        assert!(daily_returns(&flat).unwrap().returns.iter().all(|r| *r == 0.0));
        let bad = ValueSeries::new(dates(2), vec![1.0, 0.0]).unwrap();
        assert!(matches!(daily_returns(&bad), Err(MetricsError::NonPositiveValue { index: 1, .. })));
    }

    #[test]
    fn sharpe_hand_series() {
        let r = [0.01, -0.02, 0.03, 0.0, 0.015];
        // mean 0.007, squared deviations sum 0.00138, sample var 0.000345
        let expected = 0.007 / 0.000345f64.sqrt();
        assert!((sharpe(&r).unwrap() - expected).abs() < 1e-12);
        assert_eq!(sharpe(&[0.01; 5]), Err(MetricsError::ZeroDispersion));
        assert!(matches!(sharpe(&[0.01]), Err(MetricsError::TooFew { .. })));
    }

    #[test]
    fn accuracy_examples() {
        use MarketState::*;
        assert_eq!(accuracy(&[Bullish; 4], &[0.01; 4], 0.005).unwrap(), 1.0);
        assert_eq!(accuracy(&[Neutral; 3], &[0.0; 3], 0.005).unwrap(), 1.0);
        assert_eq!(accuracy(&[Bearish, Bullish], &[0.01, 0.01], 0.005).unwrap(), 0.5);
        assert!(matches!(accuracy(&[Bullish], &[], 0.0), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn regret_examples() {
        let d = dates(2);
        let mk = |end: f64| ValueSeries::new(d.clone(), vec![100.0, end]).unwrap();
        assert_eq!(regret(&mk(105.0), &mk(105.0)).unwrap(), 0.0);
        assert!((regret(&mk(105.0), &mk(108.0)).unwrap() - 0.03).abs() < 1e-12);
        assert_eq!(regret(&mk(110.0), &mk(102.0)).unwrap(), 0.0);
        let short = ValueSeries::new(vec![d[0]], vec![100.0]).unwrap();
        assert!(matches!(regret(&short, &mk(1.0)), Err(MetricsError::LengthMismatch { .. })));
    }

    fn track(name: &str, values: Vec<f64>, preds: Option<Vec<MarketState>>) -> Track {
        Track {
            name: name.into(),
            values: ValueSeries::new(dates(values.len()), values).unwrap(),
            predictions: preds,
        }
    }

    #[test]
    fn single_regime_matches_all_periods() {
        let t = track("a", vec![100.0, 101.0, 99.0, 102.0], Some(vec![MarketState::Bullish; 3]));
        let realized = daily_returns(&t.values).unwrap();
        let d = dates(4);
        let seg = RegimeSegmentation {
            spans: vec![RegimeSpan { start: d[0], end: d[3], label: RegimeLabel::Bullish }],
        };
        let rep = regime_report(&[t], &realized, Some(&seg), None, 0.005).unwrap();
        assert_eq!(rep.sections.len(), 2);
        assert_eq!(rep.sections[0].rows, rep.sections[1].rows);
    }

    #[test]
    fn flat_second_span_totals_zero() {
        let t = track("a", vec![100.0, 110.0, 121.0, 121.0, 121.0], None);
        let realized = daily_returns(&t.values).unwrap();
        let d = dates(5);
        let seg = RegimeSegmentation {
            spans: vec![
                RegimeSpan { start: d[0], end: d[2], label: RegimeLabel::Bullish },
                RegimeSpan { start: d[3], end: d[4], label: RegimeLabel::Sideways },
            ],
        };
        let rep = regime_report(&[t], &realized, Some(&seg), None, 0.005).unwrap();
        let side = rep.section(Bucket::Regime(RegimeLabel::Sideways)).unwrap();
        assert_eq!(side.rows[0].total_return, 0.0);
        assert_eq!(side.rows[0].days, 2);
        assert_eq!(side.rows[0].accuracy, None);
    }

    #[test]
    fn uncovered_date_is_an_error() {
        let t = track("a", vec![100.0, 110.0, 121.0], None);
        let realized = daily_returns(&t.values).unwrap();
        let d = dates(3);
        let seg = RegimeSegmentation {
            spans: vec![RegimeSpan { start: d[0], end: d[1], label: RegimeLabel::Bullish }],
        };
        assert_eq!(
            regime_report(&[t], &realized, Some(&seg), None, 0.0),
            Err(MetricsError::Coverage(d[2]))
        );
    }

    #[test]
    fn text_and_csv_render() {
        let a = track("Quants", vec![100.0, 101.0, 100.5], Some(vec![MarketState::Bullish, MarketState::Bearish]));
        let b = track("Baseline", vec![100.0, 100.5, 100.2], None);
        let realized = daily_returns(&b.values).unwrap();
        let rep = regime_report(&[a, b], &realized, None, Some(1), 0.005).unwrap();
        let text = rep.to_text();
        assert!(text.contains("All Periods"));
        assert!(text.contains("Sharpe Ratio"));
        assert!(text.contains("--"));
        let csv = rep.to_csv();
        assert!(csv.starts_with("regime,metric,Quants,Baseline\n"));
        assert_eq!(csv.lines().count(), 1 + METRICS.len());
    }

    proptest! {
        #[test]
        fn total_return_composes(rs in prop::collection::vec(-0.2f64..0.2, 2..60), cut in 0usize..60) {
            let cut = cut.min(rs.len());
            let lhs = (1.0 + total_return(&rs[..cut])) * (1.0 + total_return(&rs[cut..]));
            prop_assert!((lhs - (1.0 + total_return(&rs))).abs() < 1e-9);
        }

        #[test]
        fn sharpe_scale_invariant(rs in prop::collection::vec(-0.1f64..0.1, 3..40), c in 0.01f64..100.0) {
            if let Ok(s) = sharpe(&rs) {
                let scaled: Vec<f64> = rs.iter().map(|r| r * c).collect();
                prop_assert!((sharpe(&scaled).unwrap() - s).abs() < 1e-9 * s.abs().max(1.0));
            }
        }

        #[test]
        fn accuracy_permutation_equivariant(
            pairs in prop::collection::vec((0u8..3, -0.03f64..0.03), 1..50),
            seed in any::<u64>(),
        ) {
            let states = [MarketState::Bullish, MarketState::Bearish, MarketState::Neutral];
            let preds: Vec<_> = pairs.iter().map(|(s, _)| states[*s as usize]).collect();
            let rets: Vec<_> = pairs.iter().map(|(_, r)| *r).collect();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            let mut x = seed;
            for i in (1..idx.len()).rev() {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (x >> 33) as usize % (i + 1));
            }
            let p2: Vec<_> = idx.iter().map(|&i| preds[i]).collect();
            let r2: Vec<_> = idx.iter().map(|&i| rets[i]).collect();
            prop_assert_eq!(accuracy(&preds, &rets, 0.005).unwrap(), accuracy(&p2, &r2, 0.005).unwrap());
        }

        #[test]
        fn regret_nonnegative(a in 50.0f64..200.0, b in 50.0f64..200.0) {
            let d = dates(2);
            let r = regret(
                &ValueSeries::new(d.clone(), vec![100.0, a]).unwrap(),
                &ValueSeries::new(d, vec![100.0, b]).unwrap(),
            ).unwrap();
            prop_assert!(r >= 0.0);
            if a >= b { prop_assert_eq!(r, 0.0); }
        }
    }
}
