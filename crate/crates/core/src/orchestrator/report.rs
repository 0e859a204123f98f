use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::journal::{DayRecord, RunJournal};
use super::RunError;
use crate::agents::{resolve_attempts, Role};
use crate::metrics::{regime_report, MetricsReport, ReturnSeries, Track, ValueSeries};
use crate::portfolio::{baseline_buy_and_hold, baseline_static_5050, Allocation, PortfolioState};
use crate::regime::RegimeSegmentation;

pub const BASELINE_COLUMN: &str = "Baseline (50/50)";
pub const BUY_HOLD_COLUMN: &str = "Buy & Hold";

/// Everything `report` emits: the metrics table plus plot-ready CSV text.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub metrics: MetricsReport,
    /// `date,quants,signals,decision,baseline` cumulative returns.
    pub cumrets_csv: String,
    /// Per-portfolio `date,value,btc_fraction` paths keyed by file stem.
    pub trajectories: BTreeMap<String, String>,
}

impl ReportOutput {
    pub fn write_to(&self, dir: &Path) -> Result<(), RunError> {
        let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.txt"), self.metrics.to_text()).map_err(io)?;
        std::fs::write(dir.join("report.csv"), self.metrics.to_csv()).map_err(io)?;
        std::fs::write(dir.join("cumrets.csv"), &self.cumrets_csv).map_err(io)?;
        for (name, csv) in &self.trajectories {
            std::fs::write(dir.join(format!("trajectory_{name}.csv")), csv).map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReportOptions {
    /// Overrides the journaled neutral band for accuracy scoring.
    pub neutral_band: Option<f64>,
}

fn role_column(role: Role) -> &'static str {
    match role {
        Role::Quants => "Quants",
        Role::Signals => "Signals",
        _ => "Decision",
    }
}

struct ValuePath {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    fractions: Vec<f64>,
}

fn agent_path(journal: &RunJournal, role: Role) -> Result<ValuePath, RunError> {
    let cfg = &journal.header.config;
    let mut p = ValuePath {
        dates: vec![cfg.start],
        values: vec![cfg.initial_value_usd],
        fractions: vec![0.0],
    };
    for d in &journal.days {
        let a = d.agent(role)?;
        p.dates.push(d.next_date);
        p.values.push(a.marked.value_usd);
        p.fractions.push(a.marked.btc_fraction());
    }
    Ok(p)
}

fn baseline_path(journal: &RunJournal, pick: impl Fn(&DayRecord) -> f64, weight: impl Fn(f64) -> f64) -> ValuePath {
    let cfg = &journal.header.config;
    let first_close = journal.days.first().map_or(1.0, |d| d.close);
    let mut p = ValuePath {
        dates: vec![cfg.start],
        values: vec![cfg.initial_value_usd],
        fractions: vec![weight(1.0)],
    };
    for d in &journal.days {
        p.dates.push(d.next_date);
        p.values.push(pick(d));
        p.fractions.push(weight(d.next_close / first_close));
    }
    p
}

fn trajectory_csv(p: &ValuePath) -> String {
    let mut out = String::from("date,value,btc_fraction\n");
    for ((d, v), f) in p.dates.iter().zip(&p.values).zip(&p.fractions) {
        let _ = writeln!(out, "{d},{v},{f}");
    }
    out
}

/// Per-regime metrics table plus plot data, computed from the
/// journaled portfolio states only.
pub fn report(
    journal: &RunJournal,
    segmentation: Option<&RegimeSegmentation>,
    options: ReportOptions,
) -> Result<ReportOutput, RunError> {
    if journal.days.is_empty() {
        return Err(RunError::Config("journal has no simulated days".into()));
    }
    let band = options.neutral_band.unwrap_or(journal.header.config.neutral_band);
    let segmentation = segmentation.or(journal.header.segmentation.as_ref());

    let mut tracks = Vec::new();
    let mut paths = Vec::new();
    for role in Role::TRADING {
        let p = agent_path(journal, role)?;
        let preds = journal
            .days
            .iter()
            .map(|d| d.agent(role).map(|a| a.decision.state()))
            .collect::<Result<Vec<_>, _>>()?;
        tracks.push(Track {
            name: role_column(role).into(),
            values: ValueSeries::new(p.dates.clone(), p.values.clone())?,
            predictions: Some(preds),
        });
        paths.push((role.as_str().to_string(), p));
    }
    let half = |r: f64| 0.5 * r / (0.5 + 0.5 * r);
    for (name, stem, p) in [
        (BASELINE_COLUMN, "baseline", baseline_path(journal, |d| d.baselines.static_5050, half)),
        (BUY_HOLD_COLUMN, "buy_and_hold", baseline_path(journal, |d| d.baselines.buy_and_hold, |_| 1.0)),
    ] {
        tracks.push(Track {
            name: name.into(),
            values: ValueSeries::new(p.dates.clone(), p.values.clone())?,
            predictions: None,
        });
        paths.push((stem.to_string(), p));
    }

    let realized = ReturnSeries {
        dates: journal.days.iter().map(|d| d.next_date).collect(),
        returns: journal.days.iter().map(|d| d.next_close / d.close - 1.0).collect(),
    };
    let metrics = regime_report(&tracks, &realized, segmentation, Some(3), band)?;

    let initial = journal.header.config.initial_value_usd;
    let mut cumrets = String::from("date,quants,signals,decision,baseline\n");
    for i in 0..paths[0].1.dates.len() {
        let _ = writeln!(
            cumrets,
            "{},{},{},{},{}",
            paths[0].1.dates[i],
            paths[0].1.values[i] / initial - 1.0,
            paths[1].1.values[i] / initial - 1.0,
            paths[2].1.values[i] / initial - 1.0,
            paths[3].1.values[i] / initial - 1.0
        );
    }
    Ok(ReportOutput {
        metrics,
        cumrets_csv: cumrets,
        trajectories: paths.iter().map(|(n, p)| (n.clone(), trajectory_csv(p))).collect(),
    })
}

/// Recomputes every decision and portfolio state from the recorded replies
/// and prices, checks them against the journal, then reports. No model is
/// contacted.
pub fn replay(
    journal: &RunJournal,
    segmentation: Option<&RegimeSegmentation>,
    options: ReportOptions,
) -> Result<ReportOutput, RunError> {
    let cfg = &journal.header.config;
    let corrupt = |day: &DayRecord, reason: String| RunError::JournalCorrupt {
        line: day.day + 1,
        reason: format!("{}: {reason}", day.date),
    };
    let first_close = journal.days.first().map_or(1.0, |d| d.close);
    let mut closes = vec![first_close];
    closes.extend(journal.days.iter().map(|d| d.next_close));
    let static_5050 = baseline_static_5050(cfg.initial_value_usd, &closes)?.values();
    let buy_hold = baseline_buy_and_hold(cfg.initial_value_usd, &closes)?.values();

    for role in Role::TRADING {
        let mut state = PortfolioState::all_cash(cfg.start, cfg.initial_value_usd, first_close)?;
        let mut previous = Allocation::HALF;
        for (i, day) in journal.days.iter().enumerate() {
            if i > 0 && day.close != journal.days[i - 1].next_close {
                return Err(corrupt(day, "close does not match the previous day's next close".into()));
            }
            let a = day.agent(role)?;
            let (decision, fallback) = resolve_attempts(&a.attempts, previous);
            if decision != a.decision || fallback != a.fallback {
                return Err(corrupt(day, format!("{role} decision does not follow from its recorded replies")));
            }
            let rebalanced = state.rebalance(day.date, decision.allocation, day.close, cfg.fees)?;
            let marked = rebalanced.mark(day.next_date, day.next_close)?;
            if rebalanced != a.rebalanced || marked != a.marked {
                return Err(corrupt(day, format!("{role} portfolio differs from recomputation")));
            }
            previous = decision.allocation;
            state = marked;
        }
    }
    for (i, day) in journal.days.iter().enumerate() {
        if day.baselines.static_5050 != static_5050[i + 1] || day.baselines.buy_and_hold != buy_hold[i + 1] {
            return Err(corrupt(day, "baseline values differ from recomputation".into()));
        }
    }
    report(journal, segmentation, options)
}
