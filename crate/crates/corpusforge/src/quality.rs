//! Segment scoring heuristics, six-class classification, and the selection
//! policy that turns scored segments into the kept subset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, SegmentClass, Waveform};
use crate::dsp::{self, StftConfig};

#[derive(Debug, thiserror::Error)]
pub enum QualityError {
    #[error("unknown segment ids in score file: {}", .0.join(", "))]
    UnknownSegments(Vec<String>),
    #[error("score {score} for segment '{segment_id}' outside [1, 5]")]
    ScoreOutOfRange { segment_id: String, score: f64 },
    #[error("duplicate score row for ({segment_id}, {scorer})")]
    DuplicateRow { segment_id: String, scorer: String },
    #[error("malformed score row at line {line}: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("all-zero signal")]
    AllZero,
    #[error("threshold {0} outside [1, 5]")]
    BadThreshold(f64),
    #[error("segments missing score '{scorer}': {}", .ids.join(", "))]
    MissingScores { scorer: String, ids: Vec<String> },
    #[error("unclassified segments under class filter: {}", .0.join(", "))]
    UnclassifiedSegments(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
}

/// Thresholds plus class/score filters turning scored segments into the kept
/// subset. "Above 4" is read as strict > 4.0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionPolicy {
    pub threshold: f64,
    /// Which score to threshold (automatic mode). None disables the score
    /// filter.
    pub scorer_name: Option<String>,
    /// Class to require (manual mode). None disables the class filter.
    pub required_class: Option<SegmentClass>,
    /// Optional cap: keep highest-scoring segments first until this many
    /// minutes are selected.
    pub max_minutes: Option<f64>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            threshold: 4.0,
            scorer_name: Some("dnsmos".into()),
            required_class: None,
            max_minutes: None,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), QualityError> {
        if !(1.0..=5.0).contains(&self.threshold) {
            return Err(QualityError::BadThreshold(self.threshold));
        }
        Ok(())
    }

    /// Manual mode: class filter only, defaulting to GoodRecording.
    pub fn manual() -> Self {
        SelectionPolicy {
            threshold: 4.0,
            scorer_name: None,
            required_class: Some(SegmentClass::GoodRecording),
            max_minutes: None,
        }
    }
}

/// One row of an external MOS score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub segment_id: String,
    pub scorer: String,
    pub score: f64,
}

/// Reads a score CSV with header `segment_id,scorer,score`. One row per
/// (segment_id, scorer) pair.
pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRow>, QualityError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| QualityError::MalformedRow { line: 0, detail: e.to_string() })?;
    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, record) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = record.map_err(|e| QualityError::MalformedRow {
            line: idx + 2,
            detail: e.to_string(),
        })?;
        if !seen.insert((row.segment_id.clone(), row.scorer.clone())) {
            return Err(QualityError::DuplicateRow {
                segment_id: row.segment_id,
                scorer: row.scorer,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Merges score rows into the manifest. Every segment id must exist; scores
/// must lie in [1, 5]. Re-ingesting a (segment, scorer) pair overwrites the
/// previous value and emits a warning.
pub fn ingest_scores(
    manifest: &CorpusManifest,
    rows: &[ScoreRow],
) -> Result<(CorpusManifest, Vec<String>), QualityError> {
    let index: BTreeMap<&str, usize> = manifest
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let unknown: Vec<String> = rows
        .iter()
        .filter(|r| !index.contains_key(r.segment_id.as_str()))
        .map(|r| r.segment_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(QualityError::UnknownSegments(unknown));
    }
    for row in rows {
        if !(1.0..=5.0).contains(&row.score) || !row.score.is_finite() {
            return Err(QualityError::ScoreOutOfRange {
                segment_id: row.segment_id.clone(),
                score: row.score,
            });
        }
    }
    let mut segments = manifest.segments.clone();
    let mut warnings = Vec::new();
    for row in rows {
        let seg = &mut segments[index[row.segment_id.as_str()]];
        if seg.scores.insert(row.scorer.clone(), row.score).is_some() {
            warnings.push(format!(
                "overwrote score '{}' for segment '{}'",
                row.scorer, row.segment_id
            ));
        }
    }
    Ok((manifest.with_segments(segments), warnings))
}

/// Signal heuristics backing the class predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub snr_db: f64,
    pub spectral_flatness_head: f64,
    pub spectral_flatness_tail: f64,
    pub clipping_ratio: f64,
}

const MIN_SNR_FRAMES: usize = 10;
pub const SNR_CAP_DB: f64 = 100.0;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Frame-energy SNR proxy: 10*log10(p90 / p10) of per-frame mean-square
/// energy, capped at 100 dB. A constant-energy signal scores 0 dB.
pub fn estimate_snr(w: &Waveform, frame_ms: f64, hop_ms: f64) -> Result<f64, QualityError> {
    let frame = ((frame_ms / 1000.0) * w.sample_rate_hz as f64).round() as usize;
    let hop = ((hop_ms / 1000.0) * w.sample_rate_hz as f64).round().max(1.0) as usize;
    let need = frame + (MIN_SNR_FRAMES - 1) * hop;
    if frame == 0 || w.samples.len() < need {
        return Err(QualityError::TooShort {
            got: w.samples.len(),
            need,
        });
    }
    if w.samples.iter().all(|&s| s == 0.0) {
        return Err(QualityError::AllZero);
    }
    let mut energies: Vec<f64> = w
        .samples
        .windows(frame)
        .step_by(hop)
        .map(|fr| fr.iter().map(|s| s * s).sum::<f64>() / frame as f64)
        .collect();
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p10 = percentile(&energies, 0.10);
    let p90 = percentile(&energies, 0.90);
    if p10 <= 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (p90 / p10).log10()).min(SNR_CAP_DB))
}

/// Fraction of samples at or beyond full scale.
pub fn clipping_ratio(w: &Waveform) -> f64 {
    if w.samples.is_empty() {
        return 0.0;
    }
    let clipped = w.samples.iter().filter(|s| s.abs() >= 0.999).count();
    clipped as f64 / w.samples.len() as f64
}

fn frame_flatness(mag: &[f64]) -> f64 {
    // Skip the DC bin. Silence is defined as flatness 0.
    let bins = &mag[1..];
    let mean: f64 = bins.iter().sum::<f64>() / bins.len() as f64;
    if mean <= 1e-12 {
        return 0.0;
    }
    if bins.iter().any(|&m| m <= 0.0) {
        return 0.0;
    }
    let log_mean: f64 = bins.iter().map(|m| m.ln()).sum::<f64>() / bins.len() as f64;
    (log_mean.exp() / mean).clamp(0.0, 1.0)
}

fn window_flatness(samples: &[f64], sample_rate_hz: u32) -> Result<f64, QualityError> {
    let n_fft = 512usize;
    if samples.len() < n_fft {
        return Err(QualityError::TooShort {
            got: samples.len(),
            need: n_fft,
        });
    }
    let cfg = StftConfig {
        n_fft,
        win: n_fft,
        hop: n_fft / 2,
        sample_rate_hz,
    };
    let w = Waveform {
        samples: samples.to_vec(),
        sample_rate_hz,
    };
    let spec = dsp::stft(&w, &cfg)?;
    let frames = spec.magnitude.nrows();
    let mut total = 0.0;
    for f in 0..frames {
        total += frame_flatness(spec.magnitude.row(f).as_slice().unwrap());
    }
    Ok(total / frames as f64)
}

/// Mean spectral flatness over the first and last `window_s` seconds.
/// Background music typically lives at the head or tail of an episode, where
/// flatness runs high relative to tonal clean speech.
pub fn music_likelihood(w: &Waveform, window_s: f64) -> Result<(f64, f64), QualityError> {
    let window = (window_s * w.sample_rate_hz as f64).round() as usize;
    if w.samples.len() < 2 * window {
        return Err(QualityError::TooShort {
            got: w.samples.len(),
            need: 2 * window,
        });
    }
    let head = window_flatness(&w.samples[..window], w.sample_rate_hz)?;
    let tail = window_flatness(&w.samples[w.samples.len() - window..], w.sample_rate_hz)?;
    Ok((head, tail))
}

/// Classification thresholds. The defaults are operating points, all exposed
/// through the pipeline config.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyThresholds {
    pub tau_music: f64,
    pub tau_snr_db: f64,
    pub tau_clip: f64,
    pub tau_wer: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            tau_music: 0.45,
            tau_snr_db: 15.0,
            tau_clip: 0.01,
            tau_wer: 0.20,
        }
    }
}

/// Externally ingested per-segment flags (diarization and speaker
/// verification are out of scope).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ExternalFlags {
    pub overlap: bool,
    pub wrong_speaker: bool,
}

/// Applies the six-class predicates in fixed priority order; the first match
/// wins. GoodRecording is assigned only when nothing fired.
pub fn classify_segment(
    heuristics: &HeuristicReport,
    flags: &ExternalFlags,
    asr_disagreement: Option<f64>,
    thresholds: &ClassifyThresholds,
) -> SegmentClass {
    if heuristics.spectral_flatness_head > thresholds.tau_music
        || heuristics.spectral_flatness_tail > thresholds.tau_music
    {
        return SegmentClass::BackgroundMusic;
    }
    if flags.overlap {
        return SegmentClass::OverlappedSpeech;
    }
    if flags.wrong_speaker {
        return SegmentClass::WrongSpeaker;
    }
    if asr_disagreement.is_some_and(|d| d > thresholds.tau_wer) {
        return SegmentClass::WrongTranscription;
    }
    if heuristics.snr_db < thresholds.tau_snr_db || heuristics.clipping_ratio > thresholds.tau_clip
    {
        return SegmentClass::BadRecording;
    }
    SegmentClass::GoodRecording
}

/// Applies the selection policy. Score filtering keeps segments strictly
/// above the threshold; the class filter keeps the required class; both
/// compose. The optional minutes cap keeps highest-scoring segments first.
/// Original manifest order is preserved among survivors.
pub fn select(
    manifest: &CorpusManifest,
    policy: &SelectionPolicy,
) -> Result<(CorpusManifest, Vec<String>), QualityError> {
    policy.validate()?;

    if let Some(scorer) = &policy.scorer_name {
        let missing: Vec<String> = manifest
            .segments
            .iter()
            .filter(|s| !s.scores.contains_key(scorer))
            .map(|s| s.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(QualityError::MissingScores {
                scorer: scorer.clone(),
                ids: missing,
            });
        }
    }
    if policy.required_class.is_some() {
        let unclassified: Vec<String> = manifest
            .segments
            .iter()
            .filter(|s| s.class_label.is_none())
            .map(|s| s.id.clone())
            .collect();
        if !unclassified.is_empty() {
            return Err(QualityError::UnclassifiedSegments(unclassified));
        }
    }

    let mut survivors: Vec<usize> = Vec::new();
    for (i, seg) in manifest.segments.iter().enumerate() {
        let score_ok = match &policy.scorer_name {
            Some(scorer) => seg.scores[scorer] > policy.threshold,
            None => true,
        };
        let class_ok = match policy.required_class {
            Some(class) => seg.class_label == Some(class),
            None => true,
        };
        if score_ok && class_ok {
            survivors.push(i);
        }
    }

    if let Some(cap_minutes) = policy.max_minutes {
        let cap_s = cap_minutes * 60.0;
        let mut order = survivors.clone();
        if let Some(scorer) = &policy.scorer_name {
            order.sort_by(|&a, &b| {
                let sa = manifest.segments[a].scores[scorer];
                let sb = manifest.segments[b].scores[scorer];
                sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
            });
        }
        let mut kept = std::collections::HashSet::new();
        let mut total = 0.0;
        for idx in order {
            let d = manifest.segments[idx].duration_s();
            if total + d <= cap_s {
                total += d;
                kept.insert(idx);
            }
        }
        survivors.retain(|i| kept.contains(i));
    }

    let mut warnings = Vec::new();
    if survivors.is_empty() && !manifest.segments.is_empty() {
        warnings.push(format!(
            "selection kept 0 of {} segments",
            manifest.segments.len()
        ));
    }
    let segments = survivors
        .into_iter()
        .map(|i| manifest.segments[i].clone())
        .collect();
    Ok((manifest.with_segments(segments), warnings))
}
