//! Stability report: the JSON document emitted by `certify`, and a text
//! renderer that walks the same JSON tree.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::harness::{InequalityViolation, StabilityModuli};
use crate::kkt::CqReport;
use crate::second_order::{PviPointwise, ScocProbe, SecondOrderReport};
use crate::solver::LocalizationTable;

pub const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    FullyStable,
    NotFullyStable,
    NotCertifiable,
    Undetermined,
    Inconsistent,
}

impl Status {
    /// CLI exit code: only a condition/harness disagreement is nonzero.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Inconsistent => 2,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CqSection {
    pub mfcq: CqReport,
    pub licq: CqReport,
    pub crcq: CqReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplierSection {
    /// 1-based active constraint indices.
    pub active: Vec<usize>,
    /// Exact vertices, one fraction string per constraint.
    pub vertices: Vec<Vec<String>>,
    pub dimension: usize,
    /// `I+` of each vertex (1-based).
    pub strict_complements: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Harness {
    pub single_valued: bool,
    pub reason: Option<String>,
    pub entries: usize,
    pub rho_v: f64,
    pub rho_p: f64,
    pub shrinks: usize,
    pub singular_faces: usize,
    pub clean: bool,
    pub violation_count: usize,
}

impl Harness {
    pub fn failed(reason: String) -> Self {
        Harness {
            single_valued: false,
            reason: Some(reason),
            entries: 0,
            rho_v: 0.0,
            rho_p: 0.0,
            shrinks: 0,
            singular_faces: 0,
            clean: false,
            violation_count: 0,
        }
    }

    pub fn from_table(t: &LocalizationTable, clean: bool, violation_count: usize) -> Self {
        Harness {
            single_valued: true,
            reason: None,
            entries: t.entries.len(),
            rho_v: t.rho_v,
            rho_p: t.rho_p,
            shrinks: t.shrinks,
            singular_faces: t.singular_faces,
            clean,
            violation_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub schema: u32,
    pub model_hash: String,
    pub fully_stable: bool,
    pub status: Status,
    pub verdict: String,
    pub config: RunConfig,
    pub cq: Option<CqSection>,
    pub multipliers: Option<MultiplierSection>,
    pub gssosc: Option<SecondOrderReport>,
    pub gusosc: Option<SecondOrderReport>,
    pub pvi_pointwise: Option<PviPointwise>,
    pub smooth_psd: Option<SecondOrderReport>,
    pub scoc_probe: Vec<ScocProbe>,
    pub harness: Option<Harness>,
    pub moduli: Option<StabilityModuli>,
    /// Worst violations at the fitted moduli (capped).
    pub violations: Vec<InequalityViolation>,
    pub notes: Vec<String>,
}

pub fn model_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl StabilityReport {
    pub fn new(model_text: &str) -> Self {
        StabilityReport {
            schema: SCHEMA,
            model_hash: model_hash(model_text),
            fully_stable: false,
            status: Status::Undetermined,
            verdict: String::new(),
            config: RunConfig::default(),
            cq: None,
            multipliers: None,
            gssosc: None,
            gusosc: None,
            pvi_pointwise: None,
            smooth_psd: None,
            scoc_probe: Vec::new(),
            harness: None,
            moduli: None,
            violations: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn set_status(&mut self, status: Status, verdict: &str) {
        self.status = status;
        self.fully_stable = status == Status::FullyStable;
        self.verdict = verdict.to_string();
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        render_text(&serde_json::to_value(self).expect("report serializes"))
    }
}

/// Indented `key: value` rendering of a JSON report.
pub fn render_text(v: &Value) -> String {
    let mut out = String::new();
    if let Some(verdict) = v.get("verdict").and_then(Value::as_str) {
        let _ = writeln!(out, "== {verdict} ==");
    }
    walk(v, 0, &mut out);
    out
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.iter().all(|x| !x.is_array() && !x.is_object()) => {
            Some(format!("[{}]", a.iter().map(|x| scalar(x).unwrap_or_default()).collect::<Vec<_>>().join(", ")))
        }
        _ => None,
    }
}

fn walk(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                match scalar(x) {
                    Some(s) => {
                        let _ = writeln!(out, "{pad}{k}: {s}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}{k}:");
                        walk(x, depth + 1, out);
                    }
                }
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                match scalar(x) {
                    Some(s) => {
                        let _ = writeln!(out, "{pad}- {s}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}- [{i}]");
                        walk(x, depth + 1, out);
                    }
                }
            }
        }
        other => {
            let _ = writeln!(out, "{pad}{}", scalar(other).unwrap_or_default());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(model_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn text_mirrors_every_scalar_field() {
        let mut r = StabilityReport::new("x");
        r.set_status(Status::NotFullyStable, "not fully stable");
        r.notes.push("a note".into());
        let text = r.to_text();
        assert!(text.starts_with("== not fully stable =="));
        assert!(text.contains("schema: 1"));
        assert!(text.contains("status: not-fully-stable"));
        assert!(text.contains("notes: [a note]"));
        assert!(text.contains("seed: 0"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Inconsistent.exit_code(), 2);
        assert_eq!(Status::NotFullyStable.exit_code(), 0);
    }
}
