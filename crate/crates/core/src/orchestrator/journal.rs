//! Append-only JSON-lines run journal with a per-line SHA-256 chain.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{RunConfig, RunError};
use crate::agents::{AgentDecision, AttemptRecord, InjectedFeedback, PromptBundle, Role, ScopeIssue};
use crate::portfolio::PortfolioState;
use crate::reflection::{DailyOutcomePacket, ReflectOutcome, WeeklyFeedback};
use crate::regime::RegimeSegmentation;

pub const SCHEMA_VERSION: u32 = 1;
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of any serializable value via its canonical (sorted-key) JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("journal values serialize");
    sha256_hex(v.to_string().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalHeader {
    pub schema_version: u32,
    pub config: RunConfig,
    pub dataset_digest: String,
    /// Regime spans clipped to the run; absent when history is too short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<RegimeSegmentation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub bundle: PromptBundle,
    pub feedback: InjectedFeedback,
    pub attempts: Vec<AttemptRecord>,
    pub decision: AgentDecision,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scope_issues: Vec<ScopeIssue>,
    /// State after trading at the decision day's close.
    pub rebalanced: PortfolioState,
    /// Same holdings marked at the next close.
    pub marked: PortfolioState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineValues {
    pub static_5050: f64,
    pub buy_and_hold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// 1-based position in the run.
    pub day: usize,
    pub date: NaiveDate,
    pub next_date: NaiveDate,
    pub close: f64,
    pub next_close: f64,
    pub inputs_digest: String,
    pub agents: BTreeMap<Role, AgentRecord>,
    /// Baseline values at `next_date`.
    pub baselines: BaselineValues,
    pub outcome: DailyOutcomePacket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectOutcome>,
}

impl DayRecord {
    pub fn agent(&self, role: Role) -> Result<&AgentRecord, RunError> {
        self.agents.get(&role).ok_or_else(|| RunError::JournalCorrupt {
            line: self.day + 1,
            reason: format!("day {} has no {role} record", self.date),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyRecord {
    /// Day number after which the summary was produced.
    pub after_day: usize,
    pub feedback: WeeklyFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(JournalHeader),
    Day(Box<DayRecord>),
    Weekly(WeeklyRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunJournal {
    pub header: JournalHeader,
    pub days: Vec<DayRecord>,
    pub weekly: Vec<WeeklyRecord>,
}

impl RunJournal {
    fn lines(&self) -> Vec<Line> {
        let mut out = vec![Line::Header(self.header.clone())];
        let mut weekly = self.weekly.iter().peekable();
        for d in &self.days {
            out.push(Line::Day(Box::new(d.clone())));
            while let Some(w) = weekly.next_if(|w| w.after_day == d.day) {
                out.push(Line::Weekly(w.clone()));
            }
        }
        out.extend(weekly.map(|w| Line::Weekly(w.clone())));
        out
    }

    /// Writes one JSON object per line, each carrying `prev_digest` and its
    /// own `digest` over the rest of the line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), RunError> {
        let mut prev = GENESIS.to_string();
        for line in self.lines() {
            let mut v = serde_json::to_value(&line).map_err(|e| RunError::Io(e.to_string()))?;
            let obj = v.as_object_mut().expect("tagged enum serializes to an object");
            obj.insert("prev_digest".into(), Value::String(prev.clone()));
            let digest = sha256_hex(v.to_string().as_bytes());
            v.as_object_mut().unwrap().insert("digest".into(), Value::String(digest.clone()));
            writeln!(w, "{v}").map_err(|e| RunError::Io(e.to_string()))?;
            prev = digest;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    /// Parses and verifies a journal. Any edit to a line breaks its digest.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, RunError> {
        let corrupt = |line: usize, reason: String| RunError::JournalCorrupt { line, reason };
        let mut prev = GENESIS.to_string();
        let mut header = None;
        let mut days: Vec<DayRecord> = Vec::new();
        let mut weekly = Vec::new();
        for (i, text) in r.lines().enumerate() {
            let n = i + 1;
            let text = text.map_err(|e| RunError::Io(e.to_string()))?;
            if text.trim().is_empty() {
                continue;
            }
            let mut v: Value = serde_json::from_str(&text).map_err(|e| corrupt(n, e.to_string()))?;
            let obj = v.as_object_mut().ok_or_else(|| corrupt(n, "line is not an object".into()))?;
            let digest = match obj.remove("digest") {
                Some(Value::String(s)) => s,
                _ => return Err(corrupt(n, "missing digest".into())),
            };
            match obj.get("prev_digest") {
                Some(Value::String(p)) if *p == prev => {}
                _ => return Err(corrupt(n, "digest chain broken".into())),
            }
            if sha256_hex(v.to_string().as_bytes()) != digest {
                return Err(corrupt(n, "digest mismatch".into()));
            }
            prev = digest;
            v.as_object_mut().unwrap().remove("prev_digest");
            match serde_json::from_value::<Line>(v).map_err(|e| corrupt(n, e.to_string()))? {
                Line::Header(h) if header.is_none() && n == 1 => {
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(corrupt(n, format!("unsupported schema version {}", h.schema_version)));
                    }
                    header = Some(h);
                }
                Line::Header(_) => return Err(corrupt(n, "unexpected header".into())),
                _ if header.is_none() => return Err(corrupt(n, "journal must start with a header".into())),
                Line::Day(d) => {
                    if d.day != days.len() + 1 {
                        return Err(corrupt(n, format!("day {} out of order", d.day)));
                    }
                    days.push(*d);
                }
                Line::Weekly(w) => weekly.push(w),
            }
        }
        let header = header.ok_or_else(|| corrupt(0, "empty journal".into()))?;
        Ok(Self { header, days, weekly })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RunError> {
        Self::read_jsonl(text.as_bytes())
    }

    /// Feedback each role saw on `day` (1-based), straight from the records.
    pub fn injected(&self, day: usize, role: Role) -> Option<&InjectedFeedback> {
        self.days.get(day.checked_sub(1)?)?.agents.get(&role).map(|a| &a.feedback)
    }
}
