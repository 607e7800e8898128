//! Versioned JSON reports shared by the command line and the bindings.

use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::probsolve::ReturnTable;
use crate::pvpa::Pvpa;

pub const SCHEMA_VERSION: u32 = 1;

/// JSON schema every report validates against.
pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    /// Echo of the query's inputs and options.
    pub query: Json,
    pub result: Json,
    pub timing_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Report {
    pub fn new(command: &str, query: Json, result: Json, timing_ms: f64) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: Tool { name: "caretprob", version: env!("CARGO_PKG_VERSION") },
            command: command.to_string(),
            query,
            result,
            timing_ms,
            seed: None,
        }
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Return and divergence probabilities of `m` with state and stack names.
pub fn returns_json(m: &Pvpa, t: &ReturnTable) -> Json {
    let returns: Vec<Json> = t
        .entries()
        .into_iter()
        .map(|(q, z, r, v)| json!({ "from": m.states[q], "stack": m.stack[z], "to": m.states[r], "prob": v }))
        .collect();
    let diverge: Vec<Json> = (0..m.num_states())
        .map(|q| json!({ "state": m.states[q], "prob": t.div[q], "sign": t.div_sign[q] }))
        .collect();
    json!({ "returns": returns, "diverge": diverge, "exact": t.is_exact(), "stats": t.stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_parses_and_names_version() {
        let s: Json = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(s["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    }
}
