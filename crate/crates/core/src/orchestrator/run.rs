use std::collections::BTreeMap;
use std::thread;

use chrono::{Days, NaiveDate};

use super::journal::{
    digest_of, AgentRecord, BaselineValues, DayRecord, JournalHeader, RunJournal, WeeklyRecord, SCHEMA_VERSION,
};
use super::{RunConfig, RunError};
use crate::agents::{
    build_decision_prompt, build_quants_prompt, build_signals_prompt, decide_with_retry, lint_bundle, ChatResponder,
    DecisionOutcome, InjectedFeedback, PromptBundle, Role,
};
use crate::indicators::snapshot;
use crate::market_data::{slice, MarketDataset, OnChainDaily};
use crate::portfolio::{baseline_buy_and_hold, baseline_static_5050, Allocation, PortfolioState};
use crate::reflection::{
    evaluate_day, reflect_day, weekly_feedback, AccuracyTally, AgentDay, DailyFeedback, DailyOutcomePacket,
    WeeklyFeedback, WEEK_DAYS,
};
use crate::regime::{segment, RegimeSegmentation};

/// Regime spans for the run window: a supplied segmentation wins, otherwise
/// the dataset's closes are segmented when there is enough history.
pub fn run_segmentation(
    config: &RunConfig,
    dataset: &MarketDataset,
    supplied: Option<&RegimeSegmentation>,
) -> Result<Option<RegimeSegmentation>, RunError> {
    let from = config.start.checked_add_days(Days::new(1)).expect("date overflow");
    let to = config.end.checked_add_days(Days::new(1)).expect("date overflow");
    if let Some(seg) = supplied {
        return Ok(Some(seg.clip(from, to)));
    }
    let through = dataset.index_of(to).map_or(dataset.len(), |i| i + 1);
    let records = &dataset.records()[..through];
    if records.len() < config.regime.warm_up() {
        log::info!("{} bars are too few for regime labels; reporting all periods only", records.len());
        return Ok(None);
    }
    let dates: Vec<NaiveDate> = records.iter().map(|r| r.date()).collect();
    let closes: Vec<f64> = records.iter().map(|r| r.bar.close).collect();
    Ok(Some(segment(&dates, &closes, &config.regime)?.clip(from, to)))
}

fn feedback_for(role: Role, daily: Option<&DailyFeedback>, weekly: Option<&WeeklyFeedback>) -> InjectedFeedback {
    InjectedFeedback {
        daily: daily.and_then(|f| f.text(role)).map(str::to_string),
        weekly: weekly.and_then(|w| w.text(role)).map(str::to_string),
    }
}

struct Analysts {
    quants: (PromptBundle, DecisionOutcome),
    signals: (PromptBundle, DecisionOutcome),
}

/// Simulates every decision day from `config.start` to `config.end`.
///
/// Only data problems abort the run; unusable model replies fall back to the
/// previous allocation and are flagged in the journal.
pub fn run_backtest(
    config: &RunConfig,
    dataset: &MarketDataset,
    client: &dyn ChatResponder,
    segmentation: Option<&RegimeSegmentation>,
) -> Result<RunJournal, RunError> {
    config.validate()?;
    let header = JournalHeader {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        dataset_digest: digest_of(&dataset.records()),
        segmentation: run_segmentation(config, dataset, segmentation)?,
    };

    let days: Vec<NaiveDate> = config.start.iter_days().take_while(|d| *d <= config.end).collect();
    let last_needed = config.end.checked_add_days(Days::new(1)).expect("date overflow");
    let end_idx = dataset.index_of(last_needed).ok_or(RunError::Coverage(last_needed))?;
    let start_idx = dataset.index_of(config.start).ok_or(RunError::Coverage(config.start))?;
    let closes: Vec<f64> = dataset.records()[start_idx..=end_idx].iter().map(|r| r.bar.close).collect();
    let static_5050 = baseline_static_5050(config.initial_value_usd, &closes)?.values();
    let buy_hold = baseline_buy_and_hold(config.initial_value_usd, &closes)?.values();

    let fb = &config.feedback;
    let mut states: BTreeMap<Role, PortfolioState> = Role::TRADING
        .iter()
        .map(|r| Ok((*r, PortfolioState::all_cash(config.start, config.initial_value_usd, closes[0])?)))
        .collect::<Result<_, RunError>>()?;
    let mut previous: BTreeMap<Role, Allocation> = Role::TRADING.iter().map(|r| (*r, Allocation::HALF)).collect();
    let mut tally = AccuracyTally::default();
    let mut daily: Option<DailyFeedback> = None;
    let mut weekly: Option<WeeklyFeedback> = None;
    let mut packets: Vec<DailyOutcomePacket> = Vec::new();
    let mut records = Vec::with_capacity(days.len());
    let mut weekly_records = Vec::new();

    for (i, &date) in days.iter().enumerate() {
        let window = slice(dataset, date, config.lookback_days, false)?;
        let record = &window[window.len() - 1];
        let bars: Vec<_> = window.iter().map(|r| r.bar).collect();
        let snap = snapshot(&bars, &config.indicators)?;
        let onchain: Vec<OnChainDaily> = window.iter().filter_map(|r| r.onchain).collect();
        let sentiment = record
            .sentiment
            .as_ref()
            .ok_or(RunError::MissingInput { date, series: "sentiment" })?;
        let inputs_digest = digest_of(&(window, &snap));

        let fq = feedback_for(Role::Quants, daily.as_ref(), weekly.as_ref());
        let fs = feedback_for(Role::Signals, daily.as_ref(), weekly.as_ref());
        let fd = feedback_for(Role::Decision, daily.as_ref(), weekly.as_ref());
        let quants_bundle = build_quants_prompt(&bars, &snap, &onchain, &fq);
        let signals_bundle = build_signals_prompt(date, &record.news, sentiment, &fs);

        // Quants and Signals see disjoint inputs and may run side by side.
        let analysts = thread::scope(|s| {
            let q = s.spawn(|| decide_with_retry(client, &quants_bundle, config.retry_limit, previous[&Role::Quants]));
            let sig = decide_with_retry(client, &signals_bundle, config.retry_limit, previous[&Role::Signals]);
            Analysts {
                quants: (quants_bundle.clone(), q.join().expect("quants worker panicked")),
                signals: (signals_bundle.clone(), sig),
            }
        });
        let upstream = [
            analysts.quants.1.decision.allocation,
            analysts.signals.1.decision.allocation,
        ];
        let price = record.bar.close;
        let decision_value = states[&Role::Decision].mark(date, price)?.value_usd;
        let decision_bundle = build_decision_prompt(
            date,
            &analysts.quants.1.decision.prediction,
            &analysts.signals.1.decision.prediction,
            decision_value,
            &upstream,
            &fd,
        );
        let decision = decide_with_retry(client, &decision_bundle, config.retry_limit, previous[&Role::Decision]);

        let next_date = days[i].checked_add_days(Days::new(1)).expect("date overflow");
        let next_close = closes[i + 1];
        let mut agents = BTreeMap::new();
        let mut agent_days = BTreeMap::new();
        for (role, (bundle, outcome), feedback) in [
            (Role::Quants, analysts.quants, fq),
            (Role::Signals, analysts.signals, fs),
            (Role::Decision, (decision_bundle, decision), fd),
        ] {
            let scope_issues = lint_bundle(&bundle, &upstream);
            for issue in &scope_issues {
                log::warn!("{date} {role} prompt carries out-of-scope token {:?}", issue.token);
            }
            let alloc = outcome.decision.allocation;
            let rebalanced = states[&role].rebalance(date, alloc, price, config.fees)?;
            let marked = rebalanced.mark(next_date, next_close)?;
            agent_days.insert(
                role,
                AgentDay {
                    prediction: outcome.decision.prediction.clone(),
                    allocation: alloc,
                    portfolio_return: marked.value_usd / rebalanced.value_usd - 1.0,
                },
            );
            states.insert(role, marked);
            previous.insert(role, alloc);
            agents.insert(
                role,
                AgentRecord {
                    bundle,
                    feedback,
                    attempts: outcome.attempts,
                    decision: outcome.decision,
                    fallback: outcome.fallback,
                    scope_issues,
                    rebalanced,
                    marked,
                },
            );
        }

        let btc_return = next_close / price - 1.0;
        let baseline_return = static_5050[i + 1] / static_5050[i] - 1.0;
        let packet = evaluate_day(date, btc_return, baseline_return, &agent_days, &tally, config.neutral_band)?;
        tally.record(&packet);

        let reflection = fb.daily.then(|| reflect_day(client, &packet, &fb.scope, config.retry_limit));
        daily = reflection.as_ref().map(|r| r.feedback.clone());

        packets.push(packet.clone());
        records.push(DayRecord {
            day: i + 1,
            date,
            next_date,
            close: price,
            next_close,
            inputs_digest,
            agents,
            baselines: BaselineValues {
                static_5050: static_5050[i + 1],
                buy_and_hold: buy_hold[i + 1],
            },
            outcome: packet,
            reflection,
        });

        if packets.len().is_multiple_of(WEEK_DAYS) {
            // A summary lives for exactly the following block of seven days.
            weekly = None;
            if fb.weekly {
                let w = weekly_feedback(
                    &packets[packets.len() - WEEK_DAYS..],
                    &fb.weekly_roles,
                    &fb.templates,
                    &fb.thresholds,
                )?;
                weekly_records.push(WeeklyRecord {
                    after_day: i + 1,
                    feedback: w.clone(),
                });
                weekly = Some(w);
            }
        }
    }

    Ok(RunJournal {
        header,
        days: records,
        weekly: weekly_records,
    })
}
