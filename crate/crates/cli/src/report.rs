//! `report.json` and `confusion.csv`.

use std::collections::BTreeMap;

use dpage_core::metrics::{Assignment, LengthReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON schema every written report conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    /// Arguments after the program name, verbatim.
    pub invocation: Vec<String>,
    pub seed: Option<u64>,
    /// Contents of `decode_meta.json`, when present.
    pub config: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
    pub decoders: Vec<DecoderReport>,
    pub jd: f64,
    /// Words contributing most to each decoder's divergence from the others.
    pub jd_top_words: Vec<DecoderWords>,
    pub lengths: LengthReport,
    pub confusion: ConfusionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderReport {
    pub index: usize,
    pub file: String,
    pub bleu: f64,
    pub sari: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub avg_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderWords {
    pub decoder: usize,
    pub words: Vec<WordContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordContribution {
    pub word: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionSection {
    pub path: String,
    pub references: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub assignment: Assignment,
    /// Decoders matched one-to-one to a reference set with BLEU >= 0.95.
    pub matched: usize,
}

/// Stable id derived from the invocation and seed.
pub fn run_id(invocation: &[String], seed: Option<u64>) -> String {
    let mut h = Sha256::new();
    for a in invocation {
        h.update(a.as_bytes());
        h.update([0]);
    }
    h.update(seed.map(|s| s.to_string()).unwrap_or_default().as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_finite(path: &str, v: &serde_json::Value) -> CliResult<()> {
    match v {
        serde_json::Value::Number(n) if n.as_f64().is_some_and(|x| !x.is_finite()) => {
            Err(CliError::Data(format!("report value at {path} is not finite")))
        }
        serde_json::Value::Array(items) => items
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_finite(&format!("{path}[{i}]"), x)),
        serde_json::Value::Object(map) => map.iter().try_for_each(|(k, x)| check_finite(&format!("{path}.{k}"), x)),
        _ => Ok(()),
    }
}

/// Checks a parsed `report.json` against the published schema's rules.
/// Non-finite numbers cannot survive JSON serialization, so they show up
/// as nulls and fail the typed parse.
pub fn validate_report(value: &serde_json::Value) -> CliResult<RunReport> {
    check_finite("$", value)?;
    let report: RunReport = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Data(format!("report does not match its schema: {e}")))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "report schema version {} is not {SCHEMA_VERSION}",
            report.schema_version
        )));
    }
    let k = report.decoders.len();
    let refs = report.confusion.references.len();
    let m = &report.confusion.matrix;
    if k == 0 || m.len() != k || m.iter().any(|r| r.len() != refs) || report.lengths.decoder_avg.len() != k {
        return Err(CliError::Data("report decoder sections disagree in size".into()));
    }
    Ok(report)
}

/// Header `decoder,<ref names>` then one row per decoder.
pub fn confusion_csv(references: &[String], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("decoder");
    for r in references {
        out.push(',');
        out.push_str(r);
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(&format!("decoder_{i}"));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
