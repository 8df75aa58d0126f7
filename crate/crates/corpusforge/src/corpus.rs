//! Core data types, manifest serialization, and audio file access shared by
//! every other module.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// The six segment classes. `GoodRecording` means "none of the above" and may
/// only be assigned when no other class predicate fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentClass {
    BackgroundMusic,
    WrongTranscription,
    OverlappedSpeech,
    WrongSpeaker,
    BadRecording,
    GoodRecording,
}

impl SegmentClass {
    /// All classes in their fixed report order.
    pub const ALL: [SegmentClass; 6] = [
        SegmentClass::BackgroundMusic,
        SegmentClass::WrongTranscription,
        SegmentClass::OverlappedSpeech,
        SegmentClass::WrongSpeaker,
        SegmentClass::BadRecording,
        SegmentClass::GoodRecording,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SegmentClass::BackgroundMusic => "background_music",
            SegmentClass::WrongTranscription => "wrong_transcription",
            SegmentClass::OverlappedSpeech => "overlapped_speech",
            SegmentClass::WrongSpeaker => "wrong_speaker",
            SegmentClass::BadRecording => "bad_recording",
            SegmentClass::GoodRecording => "good_recording",
        }
    }
}

impl fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One utterance of the corpus. Audio is referenced by path plus time bounds,
/// never embedded, so selection stays non-destructive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub id: String,
    pub audio_path: PathBuf,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker_id: String,
    pub transcript_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_vowelized: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_repaired: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<SegmentClass>,
    /// Scorer name -> MOS-like value in [1, 5].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    pub sample_rate_hz: u32,
    /// Unknown fields from serialized manifests, preserved on round-trip.
    #[serde(flatten, default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl AudioSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Checks the segment invariants: positive duration, sample rate, and
    /// scores within [1, 5].
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.end_s - self.start_s > 0.0) {
            return Err(CorpusError::InvalidSegment {
                id: self.id.clone(),
                reason: format!("non-positive duration ({} .. {})", self.start_s, self.end_s),
            });
        }
        if self.sample_rate_hz == 0 {
            return Err(CorpusError::InvalidSegment {
                id: self.id.clone(),
                reason: "zero sample rate".into(),
            });
        }
        for (scorer, &s) in &self.scores {
            if !(1.0..=5.0).contains(&s) || !s.is_finite() {
                return Err(CorpusError::InvalidSegment {
                    id: self.id.clone(),
                    reason: format!("score {s} from scorer '{scorer}' outside [1, 5]"),
                });
            }
        }
        Ok(())
    }
}

/// Ordered collection of segments plus provenance; the unit of pipeline I/O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub segments: Vec<AudioSegment>,
    pub source_name: String,
    pub created_at: DateTime<Utc>,
    pub tool_version: String,
}

impl CorpusManifest {
    pub fn new(source_name: impl Into<String>) -> Self {
        CorpusManifest {
            segments: Vec::new(),
            source_name: source_name.into(),
            created_at: Utc::now(),
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }

    /// New manifest carrying this one's provenance but a different segment
    /// list. Keeping `created_at` makes derived manifests reproducible.
    pub fn with_segments(&self, segments: Vec<AudioSegment>) -> Self {
        CorpusManifest {
            segments,
            source_name: self.source_name.clone(),
            created_at: self.created_at,
            tool_version: self.tool_version.clone(),
        }
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s()).sum()
    }
}

/// A decoded mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unreadable file {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("non-mono WAV file {path} ({channels} channels)")]
    NonMono { path: PathBuf, channels: u16 },
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("malformed manifest line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("duplicate segment id '{id}' at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("invalid segment '{id}': {reason}")]
    InvalidSegment { id: String, reason: String },
    #[error("unclassified segment '{id}' in summary")]
    Unclassified { id: String },
    #[error("wav error in {path}: {detail}")]
    Wav { path: PathBuf, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Decodes a 16-bit PCM mono WAV file. Samples are scaled to [-1, 1] by
/// dividing by 32768.
pub fn load_wav(path: &Path) -> Result<Waveform, CorpusError> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => CorpusError::Unreadable {
            path: path.to_path_buf(),
            source,
        },
        other => CorpusError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CorpusError::NonMono {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CorpusError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!(
                "{:?} {} bits, expected 16-bit PCM",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CorpusError::Wav {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    Ok(Waveform {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

/// Writes a waveform as 16-bit PCM mono. Samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, w: &Waveform) -> Result<(), CorpusError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| CorpusError::Wav {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| CorpusError::Wav {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| CorpusError::Wav {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    source_name: String,
    created_at: DateTime<Utc>,
    tool_version: String,
}

/// Reads a JSON Lines manifest: an optional header object followed by one
/// segment object per line. An empty file yields an empty manifest.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut manifest = CorpusManifest::new("");
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: lineno,
                detail: e.to_string(),
            })?;
        if lineno == 1 && value.get("source_name").is_some() && value.get("id").is_none() {
            let header: ManifestHeader =
                serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                    line: lineno,
                    detail: e.to_string(),
                })?;
            manifest.source_name = header.source_name;
            manifest.created_at = header.created_at;
            manifest.tool_version = header.tool_version;
            continue;
        }
        let segment: AudioSegment =
            serde_json::from_value(value).map_err(|e| CorpusError::MalformedLine {
                line: lineno,
                detail: e.to_string(),
            })?;
        if !seen.insert(segment.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: segment.id,
                line: lineno,
            });
        }
        manifest.segments.push(segment);
    }
    Ok(manifest)
}

/// Writes a manifest as JSON Lines: header line, then one segment per line.
pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    let header = ManifestHeader {
        source_name: manifest.source_name.clone(),
        created_at: manifest.created_at,
        tool_version: manifest.tool_version.clone(),
    };
    serde_json::to_writer(&mut out, &header).map_err(io_from_json)?;
    out.write_all(b"\n")?;
    for segment in &manifest.segments {
        serde_json::to_writer(&mut out, segment).map_err(io_from_json)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn io_from_json(e: serde_json::Error) -> CorpusError {
    CorpusError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// One row of the per-class summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummaryRow {
    pub class: SegmentClass,
    pub segments: usize,
    pub minutes: f64,
}

/// Per-class (segment count, total minutes) table, Table-1 shape. Every
/// segment must be classified.
pub fn summarize_corpus(manifest: &CorpusManifest) -> Result<Vec<ClassSummaryRow>, CorpusError> {
    let mut counts: BTreeMap<&'static str, (usize, f64)> = BTreeMap::new();
    for segment in &manifest.segments {
        let class = segment.class_label.ok_or_else(|| CorpusError::Unclassified {
            id: segment.id.clone(),
        })?;
        let entry = counts.entry(class.label()).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += segment.duration_s();
    }
    Ok(SegmentClass::ALL
        .iter()
        .map(|&class| {
            let (segments, seconds) = counts.get(class.label()).copied().unwrap_or((0, 0.0));
            ClassSummaryRow {
                class,
                segments,
                minutes: seconds / 60.0,
            }
        })
        .collect())
}
