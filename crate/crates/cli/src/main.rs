use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{CommandFactory, Parser, Subcommand};
use serde::Deserialize;
use verbal_trader::agents::{ChatResponder, HttpChatClient, ScriptedResponder};
use verbal_trader::market_data::fetch::{self, EndpointConfig, NewsQuery};
use verbal_trader::market_data::{save_news, save_sentiment};
use verbal_trader::orchestrator::{replay, report, run_backtest, ReportOptions, ReportOutput, RunConfig, RunError, RunJournal};
use verbal_trader::regime::RegimeSegmentation;

/// Multi-agent BTC/cash backtester with verbal feedback.
#[derive(Debug, Parser)]
#[command(name = "verbal-trader", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and align the data files named in a config.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Fetch plan (TOML) for sentiment and news feeds, run before validation.
        #[arg(long)]
        fetch: Option<PathBuf>,
        /// Write the aligned dataset as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a backtest and write its journal and report.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Scripted replies (JSON) used instead of the configured model endpoint.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Regime spans CSV overriding both the config and the derived labels.
        #[arg(long)]
        regimes: Option<PathBuf>,
    },
    /// Recompute every decision and portfolio from a journal, then report.
    Replay {
        #[arg(long)]
        journal: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Report from a journal's recorded portfolio states.
    Report {
        #[arg(long)]
        journal: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Debug, clap::Args)]
struct ReportArgs {
    /// Directory for report files; nothing is written when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score predictions with this neutral band instead of the journaled one.
    #[arg(long)]
    neutral_band: Option<f64>,
    #[arg(long)]
    regimes: Option<PathBuf>,
}

/// Bad invocation or configuration; exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    RunConfig::load(path).map_err(|e| anyhow!(Usage(e.to_string())))
}

fn load_regimes(path: &Option<PathBuf>) -> anyhow::Result<Option<RegimeSegmentation>> {
    path.as_ref()
        .map(|p| RegimeSegmentation::load_csv(p).with_context(|| format!("loading regimes {}", p.display())))
        .transpose()
}

fn read_journal(path: &Path) -> anyhow::Result<RunJournal> {
    let file = File::open(path).with_context(|| format!("opening journal {}", path.display()))?;
    Ok(RunJournal::read_jsonl(BufReader::new(file))?)
}

fn emit(out: &ReportOutput, dir: Option<&Path>) -> anyhow::Result<()> {
    print!("{}", out.metrics.to_text());
    if let Some(dir) = dir {
        out.write_to(dir)?;
        eprintln!("report written to {}", dir.display());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FetchPlan {
    from: NaiveDate,
    to: NaiveDate,
    sentiment_out: PathBuf,
    fgi: EndpointConfig,
    social: EndpointConfig,
    #[serde(default)]
    news: Option<NewsPlan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewsPlan {
    out: PathBuf,
    endpoint: EndpointConfig,
    query: NewsQuery,
}

fn run_fetch(plan_path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let plan: FetchPlan = toml::from_str(&text).map_err(|e| anyhow!(Usage(format!("{}: {e}", plan_path.display()))))?;
    let base = plan_path.parent().unwrap_or(Path::new("."));
    let fgi = fetch::fetch_fgi(&plan.fgi, plan.from, plan.to)?;
    let social = fetch::fetch_social(&plan.social, plan.from, plan.to)?;
    let merged = fetch::merge_sentiment(&fgi, &social);
    save_sentiment(base.join(&plan.sentiment_out), &merged)?;
    eprintln!("{} sentiment days written", merged.len());
    if let Some(news) = plan.news {
        let items = fetch::fetch_news(&news.endpoint, &news.query, plan.from, plan.to)?;
        save_news(base.join(&news.out), &items)?;
        eprintln!("{} news items written", items.len());
    }
    Ok(())
}

fn ingest(config: &Path, fetch: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    if let Some(plan) = fetch {
        run_fetch(plan)?;
    }
    let cfg = load_config(config)?;
    let paths = cfg.data.as_ref().ok_or_else(|| anyhow!(Usage("config has no [data] section".into())))?;
    let data = paths.load()?;
    let records = data.records();
    let carried = records.iter().filter(|r| r.sentiment_carried || r.onchain_carried).count();
    let news: usize = records.iter().map(|r| r.news.len()).sum();
    println!(
        "{} bars {}..{}, {} days with carried-forward inputs, {} news items",
        data.len(),
        data.first_date(),
        data.last_date(),
        carried,
        news
    );
    // the run needs its first day and one bar past its last
    let last = cfg.end.succ_opt().expect("date overflow");
    if let Some(missing) = [cfg.start, last].into_iter().find(|d| data.index_of(*d).is_none()) {
        return Err(RunError::Coverage(missing).into());
    }
    if let Some(out) = out {
        let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        serde_json::to_writer(file, &data)?;
    }
    Ok(())
}

fn backtest(config: &Path, fixtures: Option<&Path>, out: &Path, regimes: &Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let paths = cfg.data.as_ref().ok_or_else(|| anyhow!(Usage("config has no [data] section".into())))?;
    let data = paths.load()?;
    let supplied = match load_regimes(regimes)? {
        Some(s) => Some(s),
        None => paths.load_regimes()?,
    };
    let client: Box<dyn ChatResponder> = match (fixtures, &cfg.llm) {
        (Some(f), _) => Box::new(ScriptedResponder::load(f)?),
        (None, Some(llm)) => Box::new(HttpChatClient::new(llm.clone())?),
        (None, None) => return Err(anyhow!(Usage("no [llm] section in the config and no --fixtures given".into()))),
    };
    let journal = run_backtest(&cfg, &data, client.as_ref(), supplied.as_ref())?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("journal.jsonl");
    journal.write_jsonl(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    eprintln!("journal written to {}", path.display());
    emit(&report(&journal, None, ReportOptions::default())?, Some(out))
}

fn from_journal(journal: &Path, args: &ReportArgs, recompute: bool) -> anyhow::Result<()> {
    let j = read_journal(journal)?;
    let seg = load_regimes(&args.regimes)?;
    let opts = ReportOptions {
        neutral_band: args.neutral_band,
    };
    let out = if recompute {
        replay(&j, seg.as_ref(), opts)?
    } else {
        report(&j, seg.as_ref(), opts)?
    };
    emit(&out, args.out.as_deref())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.downcast_ref::<Usage>().is_some()
        || matches!(err.downcast_ref::<RunError>(), Some(RunError::Config(_)));
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Ingest { config, fetch, out } => ingest(config, fetch.as_deref(), out.as_deref()),
        Command::Backtest {
            config,
            fixtures,
            out,
            regimes,
        } => backtest(config, fixtures.as_deref(), out, regimes),
        Command::Replay { journal, report } => from_journal(journal, report, true),
        Command::Report { journal, report } => from_journal(journal, report, false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = exit_code(&err);
            if code == 2 {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(code)
        }
    }
}
