use serde_json::{Map, Value};
use thiserror::Error;

use super::{AgentDecision, MarketState, Prediction};
use crate::portfolio::Allocation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutputError {
    #[error("no JSON object found in response")]
    Parse,
    #[error("response JSON does not match the schema: {0}")]
    Schema(String),
    #[error("allocation_btc_pct {0} outside [0, 100]")]
    Range(f64),
}

/// Every top-level-parsable JSON object embedded in `raw`, in order of their
/// opening brace.
pub fn extract_json_objects(raw: &str) -> Vec<Map<String, Value>> {
    raw.char_indices()
        .filter(|(_, c)| *c == '{')
        .filter_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
        .collect()
}

const FIELDS: [&str; 3] = ["state", "allocation_btc_pct", "reasoning"];

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse().ok(),
        _ => None,
    }
}

/// Extracts `{"state", "allocation_btc_pct", "reasoning"[, "confidence"]}`
/// from free-form model output. The first object carrying any of the schema
/// keys is the one validated.
pub fn parse_agent_output(raw: &str) -> Result<AgentDecision, OutputError> {
    let objects = extract_json_objects(raw);
    if objects.is_empty() {
        return Err(OutputError::Parse);
    }
    let obj = objects
        .iter()
        .find(|o| FIELDS.iter().any(|f| o.contains_key(*f)))
        .ok_or_else(|| OutputError::Schema("no object with state/allocation_btc_pct/reasoning".into()))?;

    let state: MarketState = obj
        .get("state")
        .and_then(Value::as_str)
        .ok_or_else(|| OutputError::Schema("missing string field \"state\"".into()))?
        .parse()
        .map_err(OutputError::Schema)?;
    let pct = obj
        .get("allocation_btc_pct")
        .ok_or_else(|| OutputError::Schema("missing field \"allocation_btc_pct\"".into()))
        .and_then(|v| number(v).ok_or_else(|| OutputError::Schema(format!("allocation_btc_pct {v} is not a number"))))?;
    if !(0.0..=100.0).contains(&pct) {
        return Err(OutputError::Range(pct));
    }
    let reasoning = obj
        .get("reasoning")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| OutputError::Schema("missing or empty \"reasoning\"".into()))?
        .to_string();
    let confidence = obj
        .get("confidence")
        .and_then(number)
        .filter(|c| (0.0..=1.0).contains(c));
    Ok(AgentDecision {
        prediction: Prediction { state, reasoning },
        allocation: Allocation::new(pct / 100.0).map_err(|e| OutputError::Schema(e.to_string()))?,
        confidence,
    })
}
