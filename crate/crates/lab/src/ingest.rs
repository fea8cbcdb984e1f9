//! Metrics for external transcripts.
//!
//! Input is JSONL with one object per example:
//! `{"id": .., "output_text": "<confidence>0.7</confidence> ...", "correct": 0|1,
//!   "generated_tokens": [..] | n}`.
//! `generated_tokens` is optional. An array is read as per-token character end
//! offsets into `output_text`; a number is the generated-token count.

use std::fs;
use std::path::Path;

use coca_core::metrics::{self, EvalRecord};
use serde_json::Value;

use crate::error::{LabError, Result};
use crate::eval::{summarize, EvalReport};

#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub records: Vec<EvalRecord>,
    /// Lines that were not valid JSON objects or broke the schema.
    pub skipped: usize,
    pub report: EvalReport,
}

/// Converts one parsed line; `None` when the schema is violated.
pub fn record_from_value(v: &Value) -> Option<EvalRecord> {
    let obj = v.as_object()?;
    let text = obj.get("output_text")?.as_str()?;
    let label = match obj.get("correct")? {
        Value::Bool(b) => *b,
        Value::Number(n) => match n.as_u64()? {
            0 => false,
            1 => true,
            _ => return None,
        },
        _ => return None,
    };
    let ttc = match obj.get("generated_tokens") {
        None | Some(Value::Null) => metrics::transcript_ttc(text, None),
        Some(Value::Number(n)) => metrics::transcript_ttc(text, Some(n.as_u64()?)),
        Some(Value::Array(items)) => {
            let ends: Option<Vec<u64>> = items.iter().map(Value::as_u64).collect();
            let ends = ends?;
            if ends.windows(2).any(|w| w[0] > w[1]) {
                return None;
            }
            metrics::ttc_from_offsets(&ends, metrics::confidence_end_char(text))
        }
        Some(_) => return None,
    };
    Some(EvalRecord { score: metrics::parse_confidence(text).ok(), label, ttc })
}

pub fn ingest_str(text: &str, ece_bins: usize) -> Result<(Vec<EvalRecord>, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Value>(line).ok().as_ref().and_then(record_from_value) {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
    }
    if ece_bins == 0 {
        return Err(LabError::Usage("--ece-bins must be positive".into()));
    }
    Ok((records, skipped))
}

pub fn ingest(path: &Path, ece_bins: usize) -> Result<IngestOutcome> {
    let text = fs::read_to_string(path).map_err(LabError::io(path))?;
    if text.trim().is_empty() {
        return Err(LabError::Empty(format!("{} has no transcripts", path.display())));
    }
    let (records, skipped) = ingest_str(&text, ece_bins)?;
    if records.is_empty() {
        return Err(LabError::Empty(format!("all {skipped} lines of {} were skipped", path.display())));
    }
    let report = summarize(&records, 0, ece_bins)?;
    Ok(IngestOutcome { records, skipped, report })
}
