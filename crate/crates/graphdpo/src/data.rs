//! JSONL rollout logs: parsing, validation, emission, and scoring.
//!
//! A log line is one prompt's worth of comparisons: a set of responses,
//! each carrying policy and reference log-probabilities (either a
//! per-token list or a pre-summed scalar), a preference value where higher
//! is better, and optionally an `is_gt` marker for a verified reference
//! answer. [`ingest`] turns a file of such lines into records with
//! line-numbered diagnostics; [`score_record`] turns one record into the
//! numeric inputs the objective works on.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::PreferenceLabeling;
use crate::objective::{log_ratio_score, ObjectiveError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: not a valid record")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: invalid record: {}", violations.join("; "))]
    Invalid { line: usize, violations: Vec<String> },
    #[error("no records found in {0}")]
    Empty(String),
    #[error("prompt {prompt_id}: every response is marked is_gt; nothing to compare")]
    NoSampledResponses { prompt_id: String },
    #[error(transparent)]
    Score(#[from] ObjectiveError),
}

/// One response to a prompt, as it appears on disk.
///
/// Log-probabilities come in exactly one of two forms per model: a
/// per-token list (`*_logprobs`) that is summed on ingestion, or a
/// pre-summed scalar (`*_logprob`). Mixing both for the same model is a
/// validation error, as is omitting both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_logprob: Option<f64>,
    pub pref: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_gt: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One prompt's comparison set: the `(prompt, responses, preferences,
/// optional verified answer)` tuple at the data layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub prompt_id: String,
    pub responses: Vec<ResponseRecord>,
}

/// Result of ingesting a file: the parsed records plus soft diagnostics.
#[derive(Debug)]
pub struct Ingest {
    pub records: Vec<RolloutRecord>,
    /// Human-readable warnings (duplicate prompt ids, skipped lines).
    pub warnings: Vec<String>,
    /// Lines dropped because of `skip_invalid`.
    pub skipped_lines: usize,
}

fn check_logprob_form(
    who: &str,
    prefix: &str,
    list: &Option<Vec<f64>>,
    scalar: &Option<f64>,
    out: &mut Vec<String>,
) {
    match (list, scalar) {
        (Some(_), Some(_)) => out.push(format!(
            "{prefix}: {who}_logprobs and {who}_logprob are mutually exclusive"
        )),
        (None, None) => out.push(format!(
            "{prefix}: missing {who} log-probability (provide {who}_logprobs or {who}_logprob)"
        )),
        (Some(tokens), None) => {
            if tokens.is_empty() {
                out.push(format!("{prefix}.{who}_logprobs: token list is empty"));
            }
            for (t, &v) in tokens.iter().enumerate() {
                if !v.is_finite() || v > 0.0 {
                    out.push(format!(
                        "{prefix}.{who}_logprobs[{t}]: must be finite and <= 0, got {v}"
                    ));
                }
            }
        }
        (None, Some(v)) => {
            if !v.is_finite() || *v > 0.0 {
                out.push(format!(
                    "{prefix}.{who}_logprob: must be finite and <= 0, got {v}"
                ));
            }
        }
    }
}

/// All invariant violations in a record, each tagged with the field path
/// that triggered it. An empty list means the record is usable.
pub fn validate_record(record: &RolloutRecord) -> Vec<String> {
    let mut violations = Vec::new();
    if record.responses.is_empty() {
        violations.push("responses: need at least one response".to_string());
        return violations;
    }
    for (i, r) in record.responses.iter().enumerate() {
        let prefix = format!("responses[{i}]");
        if r.id.is_empty() {
            violations.push(format!("{prefix}.id: must be nonempty"));
        }
        check_logprob_form("policy", &prefix, &r.policy_logprobs, &r.policy_logprob, &mut violations);
        check_logprob_form("ref", &prefix, &r.ref_logprobs, &r.ref_logprob, &mut violations);
        if let (Some(p), Some(q)) = (&r.policy_logprobs, &r.ref_logprobs) {
            if p.len() != q.len() {
                violations.push(format!(
                    "{prefix}: policy and reference token lists differ in length ({} vs {})",
                    p.len(),
                    q.len()
                ));
            }
        }
        if !r.pref.is_finite() {
            violations.push(format!("{prefix}.pref: must be finite, got {}", r.pref));
        }
    }
    let gt_ids: Vec<&str> = record
        .responses
        .iter()
        .filter(|r| r.is_gt)
        .map(|r| r.id.as_str())
        .collect();
    if gt_ids.len() > 1 {
        violations.push(format!(
            "responses: at most one is_gt response allowed, found {} ({})",
            gt_ids.len(),
            gt_ids.join(", ")
        ));
    }
    violations
}

/// Parses a JSONL file of [`RolloutRecord`]s.
///
/// Blank lines are ignored. A malformed or invalid line fails the whole
/// run with its line number unless `skip_invalid` is set, in which case it
/// is dropped and reported as a warning. Duplicate `prompt_id`s are kept
/// but flagged. An input yielding zero records is an error either way.
pub fn ingest(path: &Path, skip_invalid: bool) -> Result<Ingest, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut records: Vec<RolloutRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped_lines = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RolloutRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(source) if skip_invalid => {
                warnings.push(format!("line {line_no}: skipped (parse error: {source})"));
                skipped_lines += 1;
                continue;
            }
            Err(source) => return Err(DataError::Parse { line: line_no, source }),
        };
        let violations = validate_record(&record);
        if !violations.is_empty() {
            if skip_invalid {
                warnings.push(format!(
                    "line {line_no}: skipped ({})",
                    violations.join("; ")
                ));
                skipped_lines += 1;
                continue;
            }
            return Err(DataError::Invalid { line: line_no, violations });
        }
        if records.iter().any(|r| r.prompt_id == record.prompt_id) {
            warnings.push(format!(
                "line {line_no}: duplicate prompt_id {:?}",
                record.prompt_id
            ));
        }
        records.push(record);
    }

    if records.is_empty() {
        return Err(DataError::Empty(path.display().to_string()));
    }
    Ok(Ingest { records, warnings, skipped_lines })
}

/// Writes records as JSONL, one record per line, omitting absent optional
/// fields so that `ingest` reads back exactly what was written.
pub fn emit(records: &[RolloutRecord], out: &mut dyn Write) -> Result<(), DataError> {
    for record in records {
        let line = serde_json::to_string(record).expect("record serialization is infallible");
        writeln!(out, "{line}").map_err(|source| DataError::Io {
            path: "<output>".to_string(),
            source,
        })?;
    }
    Ok(())
}

/// A verified reference answer after scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredGt {
    pub id: String,
    pub label: f64,
    pub raw_score: f64,
}

/// A record converted to the objective's inputs: per-response raw scores,
/// preference labels, per-response token-mean log-ratio terms, and the
/// optional scored reference answer (excluded from the comparison set).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrompt {
    pub prompt_id: String,
    pub response_ids: Vec<String>,
    pub labeling: PreferenceLabeling,
    pub raw_scores: Vec<f64>,
    pub kl_terms: Vec<f64>,
    pub gt: Option<ScoredGt>,
}

fn summed_logprob(list: &Option<Vec<f64>>, scalar: &Option<f64>) -> (f64, usize) {
    match (list, scalar) {
        (Some(tokens), _) => (tokens.iter().sum(), tokens.len()),
        (_, Some(v)) => (*v, 1),
        (None, None) => unreachable!("validated records always carry one form"),
    }
}

/// Scores one validated record: `beta`-scaled log-ratio per response, a
/// labeling over the non-gt responses (with `tie_tolerance`), and the
/// token-mean drift term for each response.
///
/// Scalar log-probs carry no token count, so their drift term treats the
/// whole sequence as one token; per-token lists use their true length.
pub fn score_record(
    record: &RolloutRecord,
    beta: f64,
    tie_tolerance: f64,
) -> Result<ScoredPrompt, DataError> {
    let mut response_ids = Vec::new();
    let mut labels = Vec::new();
    let mut raw_scores = Vec::new();
    let mut kl_terms = Vec::new();
    let mut gt = None;

    for r in &record.responses {
        let (policy_sum, policy_tokens) = summed_logprob(&r.policy_logprobs, &r.policy_logprob);
        let (ref_sum, _) = summed_logprob(&r.ref_logprobs, &r.ref_logprob);
        let raw = log_ratio_score(policy_sum, ref_sum, beta)?;
        if r.is_gt {
            gt = Some(ScoredGt { id: r.id.clone(), label: r.pref, raw_score: raw });
        } else {
            response_ids.push(r.id.clone());
            labels.push(r.pref);
            raw_scores.push(raw);
            kl_terms.push((policy_sum - ref_sum) / policy_tokens as f64);
        }
    }

    if raw_scores.is_empty() {
        return Err(DataError::NoSampledResponses {
            prompt_id: record.prompt_id.clone(),
        });
    }
    Ok(ScoredPrompt {
        prompt_id: record.prompt_id.clone(),
        response_ids,
        labeling: PreferenceLabeling::with_tolerance(labels, tie_tolerance),
        raw_scores,
        kl_terms,
        gt,
    })
}
