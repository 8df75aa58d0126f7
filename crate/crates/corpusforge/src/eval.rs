//! Objective metrics: edit-distance alignment (WER/CER with Sub/Ins/Del),
//! mel-cepstral distortion with DTW, duration extraction from teacher
//! attention, MOS aggregation, and report rendering.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty reference")]
    EmptyReference,
    #[error("empty input")]
    EmptyInput,
    #[error("cepstral coefficient count mismatch: {0} vs {1}")]
    CoefMismatch(usize, usize),
    #[error("non-finite attention entry at frame {frame}, token {token}")]
    NonFinite { frame: usize, token: usize },
    #[error("attention has {tokens} tokens but only {frames} frames; no monotone full-coverage path")]
    Infeasible { frames: usize, tokens: usize },
    #[error("score {0} outside [1, 5]")]
    ScoreOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// Token or character alignment with error counts and the aligned path.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
    /// (op, ref index, hyp index); the missing side of an insertion or
    /// deletion is None.
    pub path: Vec<(EditOp, Option<usize>, Option<usize>)>,
}

impl AlignmentResult {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Plain Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        curr[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            curr[j] = (prev[j] + 1).min(curr[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Minimum-edit alignment with unit costs. Ties are broken backtracking from
/// the end, preferring substitution/match over deletion, and deletion over
/// insertion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<AlignmentResult, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dp[i][j] = (dp[i - 1][j] + 1)
                .min(dp[i][j - 1] + 1)
                .min(dp[i - 1][j - 1] + cost);
        }
    }

    let mut path = Vec::new();
    let (mut s, mut ins, mut del) = (0usize, 0usize, 0usize);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + cost {
                let op = if cost == 0 { EditOp::Match } else { EditOp::Substitute };
                if cost == 1 {
                    s += 1;
                }
                path.push((op, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            del += 1;
            path.push((EditOp::Delete, Some(i - 1), None));
            i -= 1;
        } else {
            ins += 1;
            path.push((EditOp::Insert, None, Some(j - 1)));
            j -= 1;
        }
    }
    path.reverse();
    Ok(AlignmentResult {
        substitutions: s,
        insertions: ins,
        deletions: del,
        ref_len: n,
        path,
    })
}

/// (S + I + D) / ref_len. Reports render it as a percentage.
pub fn error_rate(ar: &AlignmentResult) -> f64 {
    ar.distance() as f64 / ar.ref_len as f64
}

/// Splits text into word tokens after stripping punctuation characters.
pub fn word_tokens(text: &str, punctuation: &str) -> Vec<String> {
    let stripped: String = text
        .chars()
        .map(|c| if punctuation.contains(c) { ' ' } else { c })
        .collect();
    stripped.split_whitespace().map(str::to_string).collect()
}

pub const DEFAULT_PUNCTUATION: &str = ".,!?;:\"()[]{}\u{060C}\u{061B}\u{061F}\u{00AB}\u{00BB}";

fn is_arabic_diacritic(c: char) -> bool {
    ('\u{064B}'..='\u{0652}').contains(&c)
}

/// Splits text into characters for CER scoring: whitespace runs collapse to
/// a single space token; diacritic marks count as characters unless stripped.
pub fn char_tokens(text: &str, strip_diacritics: bool) -> Vec<char> {
    let mut out = Vec::new();
    let mut last_space = true;
    for c in text.chars() {
        if c.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
        } else if strip_diacritics && is_arabic_diacritic(c) {
            continue;
        } else {
            out.push(c);
            last_space = false;
        }
    }
    while out.last() == Some(&' ') {
        out.pop();
    }
    out
}

/// Mean/std mel-cepstral distortion over aligned frame pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McdResult {
    pub mean_db: f64,
    pub std_db: f64,
    pub n_frames_aligned: usize,
}

const MCD_CONST: f64 = 10.0 / std::f64::consts::LN_10;

fn frame_distortion(a: &[f64], b: &[f64]) -> f64 {
    // Coefficient 0 (energy) is excluded.
    let sum: f64 = a
        .iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    MCD_CONST * (2.0 * sum).sqrt()
}

/// Mel-cepstral distortion in dB between two cepstral sequences
/// [frames x n_coef]. With `use_dtw` frames are paired by DTW over the
/// distortion itself, otherwise paired frame-by-frame up to the shorter
/// length.
pub fn mcd(ref_cep: &Array2<f64>, syn_cep: &Array2<f64>, use_dtw: bool) -> Result<McdResult, EvalError> {
    if ref_cep.nrows() == 0 || syn_cep.nrows() == 0 {
        return Err(EvalError::EmptyInput);
    }
    if ref_cep.ncols() != syn_cep.ncols() {
        return Err(EvalError::CoefMismatch(ref_cep.ncols(), syn_cep.ncols()));
    }
    let dists: Vec<f64> = if use_dtw {
        dtw_path(ref_cep, syn_cep)
            .into_iter()
            .map(|(i, j)| {
                frame_distortion(
                    ref_cep.row(i).as_slice().unwrap(),
                    syn_cep.row(j).as_slice().unwrap(),
                )
            })
            .collect()
    } else {
        let n = ref_cep.nrows().min(syn_cep.nrows());
        (0..n)
            .map(|i| {
                frame_distortion(
                    ref_cep.row(i).as_slice().unwrap(),
                    syn_cep.row(i).as_slice().unwrap(),
                )
            })
            .collect()
    };
    let n = dists.len();
    let mean = dists.iter().sum::<f64>() / n as f64;
    let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    Ok(McdResult {
        mean_db: mean,
        std_db: var.sqrt(),
        n_frames_aligned: n,
    })
}

/// Standard DTW over the frame-distortion matrix with steps (1,0), (0,1),
/// (1,1), from (0,0) to (N-1, M-1). Returns the aligned index pairs.
fn dtw_path(a: &Array2<f64>, b: &Array2<f64>) -> Vec<(usize, usize)> {
    let n = a.nrows();
    let m = b.nrows();
    let cost = |i: usize, j: usize| {
        frame_distortion(a.row(i).as_slice().unwrap(), b.row(j).as_slice().unwrap())
    };
    let mut acc = Array2::<f64>::zeros((n, m));
    acc[(0, 0)] = cost(0, 0);
    for i in 1..n {
        acc[(i, 0)] = acc[(i - 1, 0)] + cost(i, 0);
    }
    for j in 1..m {
        acc[(0, j)] = acc[(0, j - 1)] + cost(0, j);
    }
    for i in 1..n {
        for j in 1..m {
            let best = acc[(i - 1, j - 1)].min(acc[(i - 1, j)]).min(acc[(i, j - 1)]);
            acc[(i, j)] = best + cost(i, j);
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = acc[(i - 1, j - 1)];
            let up = acc[(i - 1, j)];
            let left = acc[(i, j - 1)];
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        path.push((i, j));
    }
    path.reverse();
    path
}

/// Per-token frame counts extracted from a teacher attention matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSeq {
    pub durations: Vec<usize>,
}

/// Finds the monotone token path (steps of 0 or +1, starting at token 0 and
/// ending at the last token) maximizing the summed attention weight, and
/// returns the run length of each token. Ties prefer the earliest transition.
pub fn extract_durations(attention: &Array2<f64>) -> Result<DurationSeq, EvalError> {
    let frames = attention.nrows();
    let tokens = attention.ncols();
    if frames == 0 || tokens == 0 {
        return Err(EvalError::EmptyInput);
    }
    for ((f, t), &v) in attention.indexed_iter() {
        if !v.is_finite() {
            return Err(EvalError::NonFinite { frame: f, token: t });
        }
    }
    if tokens > frames {
        return Err(EvalError::Infeasible { frames, tokens });
    }

    let neg = f64::NEG_INFINITY;
    let mut dp = Array2::<f64>::from_elem((frames, tokens), neg);
    dp[(0, 0)] = attention[(0, 0)];
    for t in 1..frames {
        for j in 0..tokens {
            let stay = dp[(t - 1, j)];
            let advance = if j > 0 { dp[(t - 1, j - 1)] } else { neg };
            let best = stay.max(advance);
            if best > neg {
                dp[(t, j)] = best + attention[(t, j)];
            }
        }
    }

    // Backtrack from the last token at the last frame; on ties prefer having
    // already been at the token (the transition happened earlier).
    let mut path = vec![0usize; frames];
    let mut j = tokens - 1;
    path[frames - 1] = j;
    for t in (1..frames).rev() {
        let stay = dp[(t - 1, j)];
        let advance = if j > 0 { dp[(t - 1, j - 1)] } else { neg };
        if stay >= advance {
            // stay
        } else {
            j -= 1;
        }
        path[t - 1] = j;
    }

    let mut durations = vec![0usize; tokens];
    for &tok in &path {
        durations[tok] += 1;
    }
    Ok(DurationSeq { durations })
}

/// MOS aggregation under the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MosSummary {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl MosSummary {
    /// "mean ± ci" in the subjective-evaluation table style.
    pub fn render(&self) -> String {
        format!("{:.1} ± {:.2}", self.mean, self.ci95)
    }
}

/// Mean and 95% confidence interval (1.96 * sd / sqrt(n), sample sd) of a
/// score list. A single score gets ci95 = 0.
pub fn aggregate_mos(scores: &[f64]) -> Result<MosSummary, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    for &s in scores {
        if !(1.0..=5.0).contains(&s) || !s.is_finite() {
            return Err(EvalError::ScoreOutOfRange(s));
        }
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let ci95 = if n == 1 {
        0.0
    } else {
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    };
    Ok(MosSummary { mean, ci95, n })
}

/// One row of the objective evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub model: String,
    /// Reduction factor of the text-to-mel model; recorded for provenance
    /// only ("N/A" when not applicable).
    pub reduction_factor: String,
    pub vowelized: bool,
    pub wer_pct: f64,
    pub cer_pct: f64,
    pub mcd_mean_db: f64,
    pub mcd_std_db: f64,
}

/// CSV and aligned plain-text renderings carrying identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    pub csv: String,
    pub text: String,
}

const REPORT_HEADER: [&str; 7] = ["ID", "Model", "R", "Vowel.", "WER", "CER", "MCD"];

/// Renders evaluation rows as CSV plus an aligned plain-text table. MCD is
/// rendered "mean ± std" with one decimal in both.
pub fn evaluation_report(rows: &[ReportRow]) -> ReportTables {
    let mut csv = String::from("id,model,r,vowelized,wer,cer,mcd\n");
    let mut cells: Vec<[String; 7]> = Vec::with_capacity(rows.len());
    for r in rows {
        let mcd = format!("{:.1} ± {:.1}", r.mcd_mean_db, r.mcd_std_db);
        let wer = format!("{:.1}", r.wer_pct);
        let cer = format!("{:.1}", r.cer_pct);
        let vowel = if r.vowelized { "yes" } else { "no" };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id, r.model, r.reduction_factor, vowel, wer, cer, mcd
        ));
        cells.push([
            r.id.clone(),
            r.model.clone(),
            r.reduction_factor.clone(),
            vowel.to_string(),
            wer,
            cer,
            mcd,
        ]);
    }

    let mut widths: Vec<usize> = REPORT_HEADER.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let render_line = |fields: &[String]| -> String {
        fields
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{f:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let header: Vec<String> = REPORT_HEADER.iter().map(|s| s.to_string()).collect();
    let mut text = render_line(&header);
    text.push('\n');
    text.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * (widths.len() - 1)));
    text.push('\n');
    for row in &cells {
        text.push_str(&render_line(&row.to_vec()));
        text.push('\n');
    }
    ReportTables { csv, text }
}

/// Parses a report CSV produced by [`evaluation_report`] back into rows.
pub fn parse_report_csv(csv_text: &str) -> Result<Vec<ReportRow>, EvalError> {
    let mut rows = Vec::new();
    for line in csv_text.lines().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(EvalError::EmptyInput);
        }
        let (mcd_mean, mcd_std) = match fields[6].split_once('±') {
            Some((m, s)) => (
                m.trim().parse().unwrap_or(f64::NAN),
                s.trim().parse().unwrap_or(f64::NAN),
            ),
            None => (fields[6].trim().parse().unwrap_or(f64::NAN), 0.0),
        };
        rows.push(ReportRow {
            id: fields[0].to_string(),
            model: fields[1].to_string(),
            reduction_factor: fields[2].to_string(),
            vowelized: fields[3] == "yes",
            wer_pct: fields[4].parse().unwrap_or(f64::NAN),
            cer_pct: fields[5].parse().unwrap_or(f64::NAN),
            mcd_mean_db: mcd_mean,
            mcd_std_db: mcd_std,
        });
    }
    Ok(rows)
}
