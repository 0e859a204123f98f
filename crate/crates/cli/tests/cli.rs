use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_verbal-trader"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case_study").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn backtest_into(dir: &std::path::Path) -> Output {
    let cfg = fixture("run.toml");
    let fx = fixture("fx.json");
    run(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--fixtures",
        fx.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn backtest_writes_journal_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = backtest_into(dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    for f in ["journal.jsonl", "report.txt", "report.csv", "cumrets.csv", "trajectory_decision.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let journal = std::fs::read_to_string(dir.path().join("journal.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 3);
    let cumrets = std::fs::read_to_string(dir.path().join("cumrets.csv")).unwrap();
    assert!(cumrets.starts_with("date,quants,signals,decision,baseline\n"));
    assert!(text(&out.stdout).contains("All Periods"));
}

#[test]
fn replay_and_report_match_backtest() {
    let dir = tempfile::tempdir().unwrap();
    let first = backtest_into(dir.path());
    assert!(first.status.success());
    let journal = dir.path().join("journal.jsonl");
    let original = std::fs::read(dir.path().join("report.txt")).unwrap();
    for cmd in ["replay", "report"] {
        let sub = dir.path().join(cmd);
        let out = run(&[cmd, "--journal", journal.to_str().unwrap(), "--out", sub.to_str().unwrap()]);
        assert!(out.status.success(), "{cmd}: {}", text(&out.stderr));
        assert_eq!(out.stdout, first.stdout, "{cmd} stdout");
        assert_eq!(std::fs::read(sub.join("report.txt")).unwrap(), original, "{cmd} report.txt");
        assert_eq!(
            std::fs::read(sub.join("cumrets.csv")).unwrap(),
            std::fs::read(dir.path().join("cumrets.csv")).unwrap()
        );
    }
}

#[test]
fn tampered_journal_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(backtest_into(dir.path()).status.success());
    let path = dir.path().join("journal.jsonl");
    let edited = std::fs::read_to_string(&path).unwrap().replacen("\"bearish\"", "\"bullish\"", 1);
    std::fs::write(&path, edited).unwrap();
    let out = run(&["replay", "--journal", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("journal corrupt"), "{}", text(&out.stderr));
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = run(&["backtest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"), "{}", text(&out.stderr));

    let out = run(&["backtest", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_endpoint_or_fixtures_required() {
    let cfg = fixture("run.toml");
    let out = run(&["backtest", "--config", cfg.to_str().unwrap(), "--out", "/tmp/unused-verbal-trader"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("--fixtures"));
}

#[test]
fn ingest_summarizes_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("dataset.json");
    let cfg = fixture("run.toml");
    let out = run(&["ingest", "--config", cfg.to_str().unwrap(), "--out", dataset.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("32 bars 2024-10-06..2024-11-06"), "{}", text(&out.stdout));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dataset).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 32);
}

#[test]
fn ingest_reports_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["onchain.csv", "sentiment.csv", "news.csv", "run.toml"] {
        std::fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    std::fs::write(
        dir.path().join("bars.csv"),
        "date,open,high,low,close,volume\n2024-11-04,100,90,95,97,1\n",
    )
    .unwrap();
    let out = run(&["ingest", "--config", dir.path().join("run.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("bars.csv"), "{}", text(&out.stderr));
}

#[test]
fn ingest_fetch_from_offline_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    std::fs::create_dir_all(cache.join("fgi")).unwrap();
    std::fs::create_dir_all(cache.join("senticrypt")).unwrap();
    // 2024-11-04 and 2024-11-05 at midnight UTC
    std::fs::write(
        cache.join("fgi/2024-11-05.json"),
        r#"{"data":[{"value":"70","value_classification":"Greed","timestamp":"1730764800"},
                    {"value":"68","value_classification":"Greed","timestamp":"1730678400"}]}"#,
    )
    .unwrap();
    std::fs::write(
        cache.join("senticrypt/2024-11-05.json"),
        r#"[{"date":"2024-11-04","mean":0.1164},{"date":"2024-11-05","mean":0.1302}]"#,
    )
    .unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(
        &plan,
        format!(
            r#"from = "2024-11-04"
to = "2024-11-05"
sentiment_out = "fetched.csv"

[fgi]
base_url = "http://127.0.0.1:9/fgi"
cache_dir = "{c}"
offline = true

[social]
base_url = "http://127.0.0.1:9/social"
cache_dir = "{c}"
offline = true
"#,
            c = cache.display()
        ),
    )
    .unwrap();
    let cfg = fixture("run.toml");
    let out = run(&["ingest", "--config", cfg.to_str().unwrap(), "--fetch", plan.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fetched.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.contains("2024-11-05") && csv.contains("0.1302") && csv.contains("70"), "{csv}");

    // a cache miss while offline is a runtime error, not a usage error
    std::fs::remove_file(cache.join("fgi/2024-11-05.json")).unwrap();
    let out = run(&["ingest", "--config", cfg.to_str().unwrap(), "--fetch", plan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("offline"), "{}", text(&out.stderr));
}
