//! Vowelization interface/validation and ASR-hypothesis-based transcript
//! repair.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::eval::{self, EditOp};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("empty text")]
    EmptyText,
    #[error("empty token sequence on the {0} side")]
    EmptySide(&'static str),
    #[error("config value {name} = {value} outside [0, 1]")]
    BadConfig { name: &'static str, value: f64 },
    #[error("diacritizer changed token count: {input} in, {output} out")]
    TokenCountChanged { input: usize, output: usize },
    #[error("diacritizer left {0} tokens undiacritized under fail policy")]
    CoverageFailure(usize),
    #[error("diacritizer command failed: {0}")]
    HookFailed(String),
    #[error("malformed hypothesis line {line}: {detail}")]
    MalformedHypothesis { line: usize, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Align(#[from] eval::EvalError),
}

/// Transcript-repair thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    /// Maximum normalized character edit distance for an aligned substitution
    /// pair to count as a spelling variant and be applied.
    pub token_similarity_max: f64,
    /// Disagreement rate above which the segment is flagged as wrongly
    /// transcribed (strict >).
    pub disagreement_flag_threshold: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            token_similarity_max: 0.5,
            disagreement_flag_threshold: 0.20,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        for (name, value) in [
            ("token_similarity_max", self.token_similarity_max),
            ("disagreement_flag_threshold", self.disagreement_flag_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(TextError::BadConfig { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VowelizationReport {
    pub vowelized_ratio: f64,
    pub undiacritized_tokens: Vec<String>,
}

fn has_diacritic(token: &str) -> bool {
    token.chars().any(|c| ('\u{064B}'..='\u{0652}').contains(&c))
}

/// Fraction of whitespace tokens carrying at least one Arabic diacritic mark
/// (U+064B..U+0652), plus the offending tokens.
pub fn validate_vowelization(text: &str) -> Result<VowelizationReport, TextError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(TextError::EmptyText);
    }
    let undiacritized: Vec<String> = tokens
        .iter()
        .filter(|t| !has_diacritic(t))
        .map(|t| t.to_string())
        .collect();
    let vowelized = tokens.len() - undiacritized.len();
    Ok(VowelizationReport {
        vowelized_ratio: vowelized as f64 / tokens.len() as f64,
        undiacritized_tokens: undiacritized,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub repaired: Vec<String>,
    /// Token-level error rate of the hypothesis against the reference.
    pub disagreement: f64,
    /// Applied (reference token, hypothesis token) substitution pairs.
    pub substitutions: Vec<(String, String)>,
}

fn normalized_token_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    eval::edit_distance(&a, &b) as f64 / longest as f64
}

/// Repairs a human transcript against an ASR hypothesis. Only aligned
/// substitution pairs whose normalized character distance is within
/// `token_similarity_max` are replaced; insertions and deletions are never
/// applied, so the output always has the reference length.
pub fn repair_transcript(
    reference: &[String],
    hypothesis: &[String],
    cfg: &RepairConfig,
) -> Result<RepairOutcome, TextError> {
    cfg.validate()?;
    if reference.is_empty() {
        return Err(TextError::EmptySide("reference"));
    }
    if hypothesis.is_empty() {
        return Err(TextError::EmptySide("hypothesis"));
    }
    let alignment = eval::align(reference, hypothesis)?;
    let mut repaired = reference.to_vec();
    let mut substitutions = Vec::new();
    for &(op, ref_idx, hyp_idx) in &alignment.path {
        if op != EditOp::Substitute {
            continue;
        }
        let (Some(ri), Some(hi)) = (ref_idx, hyp_idx) else {
            continue;
        };
        let ref_tok = &reference[ri];
        let hyp_tok = &hypothesis[hi];
        if normalized_token_distance(ref_tok, hyp_tok) <= cfg.token_similarity_max {
            repaired[ri] = hyp_tok.clone();
            substitutions.push((ref_tok.clone(), hyp_tok.clone()));
        }
    }
    Ok(RepairOutcome {
        repaired,
        disagreement: eval::error_rate(&alignment),
        substitutions,
    })
}

/// True iff the disagreement rate exceeds the flag threshold (strict >).
pub fn flag_wrong_transcription(disagreement: f64, cfg: &RepairConfig) -> bool {
    disagreement > cfg.disagreement_flag_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveragePolicy {
    Fail,
    Warn,
}

/// External diacritizer plugged in behind a token-count-preserving contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiacritizerHook {
    pub backend: DiacritizerBackend,
    pub coverage_policy: CoveragePolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiacritizerBackend {
    /// Subprocess: reads UTF-8 text on stdin, writes diacritized text on
    /// stdout. First element is the program, the rest are arguments.
    Command(Vec<String>),
    /// TSV lookup table of `token<TAB>diacritized`. Tokens not in the table
    /// pass through unchanged.
    LookupTable(PathBuf),
}

/// Result of running the diacritizer over one text.
#[derive(Debug, Clone, PartialEq)]
pub struct DiacritizedText {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Runs the hook on a text and enforces its contract: token count preserved,
/// coverage handled per policy.
pub fn run_diacritizer(hook: &DiacritizerHook, text: &str) -> Result<DiacritizedText, TextError> {
    let input_tokens = text.split_whitespace().count();
    let output = match &hook.backend {
        DiacritizerBackend::Command(argv) => {
            let Some((program, args)) = argv.split_first() else {
                return Err(TextError::HookFailed("empty command".into()));
            };
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .map_err(|e| TextError::HookFailed(e.to_string()))?;
            child
                .stdin
                .take()
                .expect("stdin piped")
                .write_all(text.as_bytes())?;
            let out = child.wait_with_output()?;
            if !out.status.success() {
                return Err(TextError::HookFailed(format!(
                    "exit {:?}: {}",
                    out.status.code(),
                    String::from_utf8_lossy(&out.stderr)
                )));
            }
            String::from_utf8_lossy(&out.stdout).trim_end().to_string()
        }
        DiacritizerBackend::LookupTable(path) => {
            let table = load_lookup_table(path)?;
            text.split_whitespace()
                .map(|tok| table.get(tok).map(String::as_str).unwrap_or(tok))
                .collect::<Vec<_>>()
                .join(" ")
        }
    };

    let output_tokens = output.split_whitespace().count();
    if output_tokens != input_tokens {
        return Err(TextError::TokenCountChanged {
            input: input_tokens,
            output: output_tokens,
        });
    }

    let mut warnings = Vec::new();
    let report = validate_vowelization(&output)?;
    if !report.undiacritized_tokens.is_empty() {
        match hook.coverage_policy {
            CoveragePolicy::Fail => {
                return Err(TextError::CoverageFailure(report.undiacritized_tokens.len()))
            }
            CoveragePolicy::Warn => warnings.push(format!(
                "{} tokens left undiacritized (ratio {:.3})",
                report.undiacritized_tokens.len(),
                report.vowelized_ratio
            )),
        }
    }
    Ok(DiacritizedText {
        text: output,
        warnings,
    })
}

fn load_lookup_table(path: &Path) -> Result<BTreeMap<String, String>, TextError> {
    let mut table = BTreeMap::new();
    for line in std::fs::read_to_string(path)?.lines() {
        if let Some((k, v)) = line.split_once('\t') {
            table.insert(k.to_string(), v.to_string());
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct HypothesisLine {
    segment_id: String,
    hypothesis_text: String,
}

/// Reads a JSONL file of `{segment_id, hypothesis_text}` objects.
pub fn read_hypotheses(path: &Path) -> Result<BTreeMap<String, String>, TextError> {
    let mut out = BTreeMap::new();
    for (idx, line) in std::fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: HypothesisLine =
            serde_json::from_str(line).map_err(|e| TextError::MalformedHypothesis {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        out.insert(parsed.segment_id, parsed.hypothesis_text);
    }
    Ok(out)
}
