use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Bar, DataError, NewsItem, OnChainDaily, SentimentDaily};

fn read_rows<T, F>(path: &Path, check: F) -> Result<Vec<T>, DataError>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for result in reader.deserialize::<T>() {
        match result {
            Ok(row) => {
                // header is line 1, so the first data row is line 2
                let line = out.len() as u64 + 2;
                check(&row).map_err(|message| DataError::InvariantViolation {
                    path: display.clone(),
                    line,
                    message,
                })?;
                out.push(row);
            }
            Err(err) => {
                let line = err
                    .position()
                    .map(|p| p.line())
                    .unwrap_or(out.len() as u64 + 2);
                return Err(DataError::MalformedRow {
                    path: display,
                    line,
                    message: err.to_string(),
                });
            }
        }
    }
    Ok(out)
}

fn sort_unique<T>(path: &Path, mut rows: Vec<T>, date: impl Fn(&T) -> NaiveDate) -> Result<Vec<T>, DataError> {
    rows.sort_by_key(&date);
    if let Some(w) = rows.windows(2).find(|w| date(&w[0]) == date(&w[1])) {
        return Err(DataError::DuplicateDate {
            path: path.display().to_string(),
            date: date(&w[0]),
        });
    }
    Ok(rows)
}

/// Loads a `date,open,high,low,close,volume` file, sorted ascending by date.
pub fn load_bars(path: impl AsRef<Path>) -> Result<Vec<Bar>, DataError> {
    let path = path.as_ref();
    let rows = read_rows(path, Bar::check)?;
    sort_unique(path, rows, |b| b.date)
}

/// Loads a `date,tx_count,active_addresses,transfer_volume_usd` file.
pub fn load_onchain(path: impl AsRef<Path>) -> Result<Vec<OnChainDaily>, DataError> {
    let path = path.as_ref();
    let rows = read_rows(path, OnChainDaily::check)?;
    sort_unique(path, rows, |r| r.date)
}

/// Loads a `date,social_score_mean,fgi_value,fgi_label` file.
pub fn load_sentiment(path: impl AsRef<Path>) -> Result<Vec<SentimentDaily>, DataError> {
    let path = path.as_ref();
    let rows = read_rows(path, SentimentDaily::check)?;
    sort_unique(path, rows, |r| r.date)
}

/// Loads a `date,source,headline,summary` file. Several items may share a
/// date; exact (date, source, headline) repeats are dropped.
pub fn load_news(path: impl AsRef<Path>) -> Result<Vec<NewsItem>, DataError> {
    let path = path.as_ref();
    let rows = read_rows(path, NewsItem::check)?;
    Ok(dedup_news(rows))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// Writes rows in the layout [`load_sentiment`] reads.
pub fn save_sentiment(path: impl AsRef<Path>, rows: &[SentimentDaily]) -> Result<(), DataError> {
    write_rows(path.as_ref(), rows)
}

/// Writes rows in the layout [`load_news`] reads.
pub fn save_news(path: impl AsRef<Path>, rows: &[NewsItem]) -> Result<(), DataError> {
    write_rows(path.as_ref(), rows)
}

pub(crate) fn dedup_news(rows: Vec<NewsItem>) -> Vec<NewsItem> {
    let mut seen = HashSet::new();
    let mut out: Vec<NewsItem> = rows
        .into_iter()
        .filter(|n| seen.insert((n.date, n.source.clone(), n.headline.clone())))
        .collect();
    out.sort_by_key(|n| n.date);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_bar_row() {
        let f = write_tmp("date,open,high,low,close,volume\n2024-07-01,60000,61000,59500,60500,12000\n");
        let bars = load_bars(f.path()).unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(bars[0].close, 60500.0);
        assert_eq!(bars[0].date, NaiveDate::from_ymd_opt(2024, 7, 1).unwrap());
    }

    #[test]
    fn high_below_low_is_rejected() {
        let f = write_tmp("date,open,high,low,close,volume\n2024-07-01,59600,59000,59500,59700,10\n");
        match load_bars(f.path()) {
            Err(DataError::InvariantViolation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn unsorted_rows_come_back_sorted() {
        let rows = [
            "2024-07-03,3,3,3,3,1",
            "2024-07-01,1,1,1,1,1",
            "2024-07-02,2,2,2,2,1",
        ];
        let f = write_tmp(&format!("date,open,high,low,close,volume\n{}\n", rows.join("\n")));
        let bars = load_bars(f.path()).unwrap();
        let mut oracle: Vec<String> = rows.iter().map(|r| r.split(',').next().unwrap().to_string()).collect();
        oracle.sort();
        let got: Vec<String> = bars.iter().map(|b| b.date.to_string()).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("date,open,high,low,close,volume\n2024-07-01,1,1,1,1,1\n2024-07-02,abc,1,1,1,1\n");
        match load_bars(f.path()) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed row, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_dates_rejected() {
        let f = write_tmp("date,open,high,low,close,volume\n2024-07-01,1,1,1,1,1\n2024-07-01,1,1,1,1,1\n");
        assert!(matches!(load_bars(f.path()), Err(DataError::DuplicateDate { .. })));
    }

    #[test]
    fn sentiment_fgi_bounds() {
        let f = write_tmp("date,social_score_mean,fgi_value,fgi_label\n2024-11-05,0.1164,70,Greed\n");
        let s = load_sentiment(f.path()).unwrap();
        assert_eq!(s[0].fgi_value, 70);
        assert_eq!(s[0].fgi_label, "Greed");

        let f = write_tmp("date,social_score_mean,fgi_value,fgi_label\n2024-11-05,0.1,101,Greed\n");
        assert!(matches!(load_sentiment(f.path()), Err(DataError::InvariantViolation { .. })));

        let f = write_tmp("date,social_score_mean,fgi_value,fgi_label\n2024-11-05,1.5,50,Neutral\n");
        assert!(matches!(load_sentiment(f.path()), Err(DataError::InvariantViolation { .. })));
    }

    #[test]
    fn empty_news_file() {
        let f = write_tmp("date,source,headline,summary\n");
        assert!(load_news(f.path()).unwrap().is_empty());
    }

    #[test]
    fn news_dedup_and_empty_headline() {
        let f = write_tmp(
            "date,source,headline,summary\n\
             2024-11-04,CNBC,Miners pivot to AI,a\n\
             2024-11-04,CNBC,Miners pivot to AI,b\n\
             2024-11-04,Forbes,Miners pivot to AI,c\n",
        );
        let news = load_news(f.path()).unwrap();
        assert_eq!(news.len(), 2);

        let f = write_tmp("date,source,headline,summary\n2024-11-04,CNBC,,x\n");
        assert!(matches!(load_news(f.path()), Err(DataError::InvariantViolation { .. })));
    }

    #[test]
    fn onchain_negative_count_is_malformed() {
        let f = write_tmp("date,tx_count,active_addresses,transfer_volume_usd\n2024-11-05,-3,528000,5.058e10\n");
        assert!(matches!(load_onchain(f.path()), Err(DataError::MalformedRow { .. })));
    }

    #[test]
    fn saved_rows_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let d = NaiveDate::from_ymd_opt(2024, 11, 5).unwrap();
        let sentiment = vec![SentimentDaily {
            date: d,
            social_score_mean: 0.13,
            fgi_value: 70,
            fgi_label: "Greed".into(),
        }];
        let news = vec![NewsItem {
            date: d,
            source: "wire".into(),
            headline: "Rally, again".into(),
            summary: "quoted \"text\"".into(),
        }];
        save_sentiment(dir.path().join("s.csv"), &sentiment).unwrap();
        save_news(dir.path().join("n.csv"), &news).unwrap();
        assert_eq!(load_sentiment(dir.path().join("s.csv")).unwrap(), sentiment);
        assert_eq!(load_news(dir.path().join("n.csv")).unwrap(), news);
    }
}
