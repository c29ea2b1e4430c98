use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One line of the report stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub verdict: Verdict,
    /// Whether the checked property held, before `expect=fail` is applied.
    pub holds: Option<bool>,
    pub expected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<serde_json::Value>,
    pub stats: BTreeMap<String, u64>,
}

impl Report {
    pub fn emit(&self) {
        let line = serde_json::to_string(self).expect("reports serialize");
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        eprintln!("{:<12} {}", format!("{:?}", self.verdict).to_lowercase(), self.check);
    }
}

/// 0 when everything passed, 1 on any failure, otherwise 2 if anything
/// was inconclusive.
pub fn exit_code(reports: &[Report]) -> u8 {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        1
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        2
    } else {
        0
    }
}
