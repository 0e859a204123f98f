use chrono::NaiveDate;
use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use verbal_trader::agents::redact_allocations;
use verbal_trader::indicators::snapshot;
use verbal_trader::orchestrator::{replay, report, run_backtest, ReportOptions};
use verbal_trader::{Allocation, FeeModel, IndicatorParams, PortfolioState};
use verbal_trader_bench::{bars, scripted_run, LOOKBACK};

fn indicators(c: &mut Criterion) {
    let window = bars(LOOKBACK);
    let params = IndicatorParams::default();
    c.bench_function("indicator_snapshot_30", |b| b.iter(|| snapshot(black_box(&window), &params).unwrap()));
}

fn portfolio(c: &mut Criterion) {
    let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let start = PortfolioState::all_cash(d, 10_000.0, 42_000.0).unwrap();
    let target = Allocation::new(0.37).unwrap();
    for (name, fees) in [("rebalance_no_fee", 0.0), ("rebalance_10bps", 10.0)] {
        let fees = FeeModel::new(fees).unwrap();
        c.bench_function(name, |b| {
            b.iter(|| start.rebalance(d, black_box(target), black_box(43_117.5), fees).unwrap())
        });
    }
}

fn redaction(c: &mut Criterion) {
    let text = "Quants sees 35% BTC (0.35 of the book) with 65% cash; Signals prefers 70/30. \
                RSI at 61.2 and price near 69,523 keep the bias positive."
        .repeat(4);
    let upstream = [Allocation::new(0.35).unwrap(), Allocation::new(0.7).unwrap()];
    c.bench_function("redact_allocations", |b| b.iter(|| redact_allocations(black_box(&text), &upstream)));
}

fn run_and_report(c: &mut Criterion) {
    let (cfg, data, script) = scripted_run(60);
    let mut g = c.benchmark_group("run_60_days");
    g.sample_size(10);
    g.bench_function("backtest", |b| b.iter(|| run_backtest(&cfg, &data, &script, None).unwrap()));
    let journal = run_backtest(&cfg, &data, &script, None).unwrap();
    g.bench_function("report", |b| b.iter(|| report(&journal, None, ReportOptions::default()).unwrap()));
    g.bench_function("replay", |b| b.iter(|| replay(&journal, None, ReportOptions::default()).unwrap()));
    let text = journal.to_jsonl();
    g.bench_function("journal_parse", |b| {
        b.iter_batched(
            || text.clone(),
            |t| verbal_trader::orchestrator::RunJournal::from_jsonl(&t).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, indicators, portfolio, redaction, run_and_report);
criterion_main!(benches);
