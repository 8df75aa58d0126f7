//! Pipeline orchestration: ingest, score/classify/select, split, batch
//! Griffin-Lim synthesis, and objective evaluation. Per-segment stages fan
//! out to a rayon pool and are merged back in manifest order; all file
//! writes happen on the calling thread.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DspConfig, PipelineConfig, SplitSpec, SplitStrategy};
use crate::corpus::{
    load_wav, read_manifest, summarize_corpus, write_manifest, write_wav, AudioSegment,
    ClassSummaryRow, CorpusError, CorpusManifest, Waveform,
};
use crate::dsp::{
    build_filterbank, griffin_lim, mel_cepstrum, mel_spectrogram, read_matrix, stft, DspError,
    GlInit, MelSpectrogram,
};
use crate::eval::{
    align, char_tokens, error_rate, evaluation_report, word_tokens, EvalError, ReportRow,
    ReportTables, DEFAULT_PUNCTUATION,
};
use crate::metadata::{
    link_speakers, normalize_name, parse_metadata, KeyVocabulary, MetadataError, NormalizeOptions,
};
use crate::quality::{
    classify_segment, clipping_ratio, estimate_snr, ingest_scores, music_likelihood,
    read_score_csv, select, ExternalFlags, HeuristicReport, QualityError, SNR_CAP_DB,
};
use crate::textproc::{read_hypotheses, repair_transcript, run_diacritizer, TextError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Quality(#[from] QualityError),
    #[error("{0}")]
    Text(#[from] TextError),
    #[error("{0}")]
    Dsp(#[from] DspError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Metadata(#[from] MetadataError),
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("segment '{id}': {source}")]
    Segment {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("split too large: n_dev {n_dev} + n_test {n_test} must be < corpus size {size}")]
    SplitTooLarge {
        n_dev: usize,
        n_test: usize,
        size: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Maps errors onto the process exit-code convention:
    /// 1 input error, 2 invariant violation, 3 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_) => 3,
            PipelineError::Corpus(CorpusError::Io(_))
            | PipelineError::Corpus(CorpusError::Unreadable { .. }) => 3,
            PipelineError::Dsp(DspError::Io(_)) => 3,
            PipelineError::Text(TextError::Io(_)) => 3,
            PipelineError::Metadata(MetadataError::Io(_)) => 3,
            PipelineError::Config(crate::config::ConfigError::Unreadable { .. }) => 3,
            PipelineError::Quality(QualityError::Io(_)) => 3,
            PipelineError::Segment { source, .. } => source.exit_code(),
            PipelineError::Corpus(CorpusError::InvalidSegment { .. })
            | PipelineError::Corpus(CorpusError::Unclassified { .. }) => 2,
            _ => 1,
        }
    }

    fn with_segment(self, id: &str) -> PipelineError {
        PipelineError::Segment {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

/// Provenance block written next to every pipeline artifact and embedded as
/// a trailing comment in text reports.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config: &PipelineConfig) -> Self {
        Provenance {
            tool_version: crate::TOOL_VERSION.to_string(),
            config_hash: config.hash(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# tool_version={} config_hash={}",
            self.tool_version, self.config_hash
        )
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub manifest: CorpusManifest,
    pub warnings: Vec<String>,
}

/// Scans a directory tree of WAV files with sibling `.txt` transcripts into
/// a manifest. A `metadata.txt` file next to the audio, when present, is
/// parsed for the speaker name. WAVs without a transcript are skipped with a
/// warning.
pub fn cmd_ingest(config: &PipelineConfig, source_name: &str) -> Result<IngestOutcome, PipelineError> {
    let root = config
        .paths
        .corpus_root
        .as_ref()
        .ok_or_else(|| PipelineError::MissingInput("paths.corpus_root".into()))?;
    let mut wavs: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| {
            e.file_type().is_file()
                && e.path()
                    .extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
        })
        .map(|e| e.into_path())
        .collect();
    wavs.sort();

    let mut warnings = Vec::new();
    let mut speaker_cache: BTreeMap<PathBuf, String> = BTreeMap::new();
    let vocab = KeyVocabulary::default();
    let norm = NormalizeOptions::default();
    let mut segments = Vec::new();
    for wav_path in wavs {
        let stem = wav_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("segment")
            .to_string();
        let transcript_path = wav_path.with_extension("txt");
        let transcript = match std::fs::read_to_string(&transcript_path) {
            Ok(t) => t.trim().to_string(),
            Err(_) => {
                warnings.push(format!(
                    "no transcript for {}, segment skipped",
                    wav_path.display()
                ));
                continue;
            }
        };
        let dir = wav_path.parent().unwrap_or(root).to_path_buf();
        let speaker = speaker_cache
            .entry(dir.clone())
            .or_insert_with(|| {
                let meta_path = dir.join("metadata.txt");
                match std::fs::read_to_string(&meta_path) {
                    Ok(text) => {
                        let outcome = parse_metadata(&text, &vocab);
                        warnings.extend(outcome.warnings);
                        outcome
                            .metadata
                            .speaker_entries
                            .first()
                            .and_then(|raw| normalize_name(raw, &norm).ok())
                            .unwrap_or_else(|| "unknown".into())
                    }
                    Err(_) => "unknown".into(),
                }
            })
            .clone();
        let audio = load_wav(&wav_path)?;
        segments.push(AudioSegment {
            id: stem,
            audio_path: wav_path,
            start_s: 0.0,
            end_s: audio.duration_s(),
            speaker_id: speaker,
            transcript_raw: transcript,
            transcript_vowelized: None,
            transcript_repaired: None,
            class_label: None,
            scores: BTreeMap::new(),
            sample_rate_hz: audio.sample_rate_hz,
            extra: BTreeMap::new(),
        });
    }
    let mut manifest = CorpusManifest::new(source_name);
    manifest = manifest.with_segments(segments);
    Ok(IngestOutcome { manifest, warnings })
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub classified: CorpusManifest,
    pub selected: CorpusManifest,
    pub train: CorpusManifest,
    pub dev: CorpusManifest,
    pub test: CorpusManifest,
    pub summary: Vec<ClassSummaryRow>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
    /// Files written under the configured output directory, if any.
    pub outputs: Vec<PathBuf>,
}

fn external_flags(segment: &AudioSegment) -> ExternalFlags {
    let get = |key: &str| {
        segment
            .extra
            .get(key)
            .and_then(serde_json::Value::as_bool)
            .unwrap_or(false)
    };
    ExternalFlags {
        overlap: get("overlap"),
        wrong_speaker: get("wrong_speaker"),
    }
}

fn clip_samples(audio: &Waveform, start_s: f64, end_s: f64) -> Waveform {
    let sr = audio.sample_rate_hz as f64;
    let lo = ((start_s * sr).round() as usize).min(audio.samples.len());
    let hi = ((end_s * sr).round() as usize).clamp(lo, audio.samples.len());
    Waveform {
        samples: audio.samples[lo..hi].to_vec(),
        sample_rate_hz: audio.sample_rate_hz,
    }
}

/// Signal heuristics with graceful degradation on very short clips: a clip
/// too short for the SNR estimator gets the benign cap, and the music
/// window shrinks to fit. All-zero audio reads as 0 dB so it lands in
/// BadRecording.
fn segment_heuristics(
    audio: &Waveform,
    cfg: &crate::config::HeuristicsConfig,
    warnings: &mut Vec<String>,
    id: &str,
) -> HeuristicReport {
    let snr_db = match estimate_snr(audio, cfg.snr_frame_ms, cfg.snr_hop_ms) {
        Ok(v) => v,
        Err(QualityError::AllZero) => 0.0,
        Err(_) => {
            warnings.push(format!("segment '{id}': too short for SNR estimate"));
            SNR_CAP_DB
        }
    };
    let max_window_s = audio.samples.len() as f64 / (2.0 * audio.sample_rate_hz as f64);
    let window_s = cfg.music_window_s.min(max_window_s);
    let (head, tail) = match music_likelihood(audio, window_s) {
        Ok(pair) => pair,
        Err(_) => {
            warnings.push(format!("segment '{id}': too short for music heuristic"));
            (0.0, 0.0)
        }
    };
    HeuristicReport {
        snr_db,
        spectral_flatness_head: head,
        spectral_flatness_tail: tail,
        clipping_ratio: clipping_ratio(audio),
    }
}

fn analyze_segment(
    mut segment: AudioSegment,
    hypotheses: &BTreeMap<String, String>,
    config: &PipelineConfig,
) -> Result<(AudioSegment, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let audio = load_wav(&segment.audio_path)
        .map_err(|e| PipelineError::from(e).with_segment(&segment.id))?;
    let clip = clip_samples(&audio, segment.start_s, segment.end_s);
    let heuristics = segment_heuristics(&clip, &config.heuristics, &mut warnings, &segment.id);

    let mut disagreement = None;
    if let Some(hyp_text) = hypotheses.get(&segment.id) {
        let reference = word_tokens(&segment.transcript_raw, DEFAULT_PUNCTUATION);
        let hypothesis = word_tokens(hyp_text, DEFAULT_PUNCTUATION);
        if reference.is_empty() || hypothesis.is_empty() {
            warnings.push(format!(
                "segment '{}': empty token sequence, repair skipped",
                segment.id
            ));
        } else {
            let outcome = repair_transcript(&reference, &hypothesis, &config.repair)
                .map_err(|e| PipelineError::from(e).with_segment(&segment.id))?;
            disagreement = Some(outcome.disagreement);
            segment.transcript_repaired = Some(outcome.repaired.join(" "));
        }
    }

    if let Some(hook) = &config.paths.diacritizer {
        if segment.transcript_vowelized.is_none() {
            let source = segment
                .transcript_repaired
                .as_deref()
                .unwrap_or(&segment.transcript_raw);
            let out = run_diacritizer(hook, source)
                .map_err(|e| PipelineError::from(e).with_segment(&segment.id))?;
            warnings.extend(out.warnings);
            segment.transcript_vowelized = Some(out.text);
        }
    }

    let class = classify_segment(
        &heuristics,
        &external_flags(&segment),
        disagreement,
        &config.thresholds,
    );
    segment.class_label = Some(class);
    Ok((segment, warnings))
}

/// The full selection pipeline: score ingest, signal heuristics, transcript
/// repair, classification, selection, and split. Deterministic given
/// (inputs, config); reruns produce byte-identical outputs.
pub fn cmd_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let manifest_path = config
        .paths
        .manifest
        .as_ref()
        .ok_or_else(|| PipelineError::MissingInput("paths.manifest".into()))?;
    let mut manifest = read_manifest(manifest_path)?;
    let mut warnings = Vec::new();

    if let Some(score_path) = &config.paths.score_file {
        let rows = read_score_csv(score_path)?;
        let (scored, score_warnings) = ingest_scores(&manifest, &rows)?;
        manifest = scored;
        warnings.extend(score_warnings);
    }

    let hypotheses = match &config.paths.asr_hypotheses {
        Some(path) => read_hypotheses(path)?,
        None => BTreeMap::new(),
    };

    let analyzed: Vec<Result<(AudioSegment, Vec<String>), PipelineError>> = manifest
        .segments
        .par_iter()
        .map(|segment| analyze_segment(segment.clone(), &hypotheses, config))
        .collect();
    let mut segments = Vec::with_capacity(analyzed.len());
    for result in analyzed {
        let (segment, segment_warnings) = result?;
        warnings.extend(segment_warnings);
        segments.push(segment);
    }
    let classified = manifest.with_segments(segments);

    let summary = summarize_corpus(&classified)?;
    let (selected, select_warnings) = select(&classified, &config.selection)?;
    warnings.extend(select_warnings);
    let (train, dev, test) = cmd_split(&selected, &config.split, config.seed)?;

    let provenance = Provenance::new(config);
    let mut outputs = Vec::new();
    if let Some(out_dir) = &config.paths.output_dir {
        std::fs::create_dir_all(out_dir)?;
        for (name, m) in [
            ("classified.jsonl", &classified),
            ("selected.jsonl", &selected),
            ("train.jsonl", &train),
            ("dev.jsonl", &dev),
            ("test.jsonl", &test),
        ] {
            let path = out_dir.join(name);
            write_manifest(m, &path)?;
            outputs.push(path);
        }
        let summary_path = out_dir.join("class_summary.csv");
        write_class_summary(&summary, &provenance, &summary_path)?;
        outputs.push(summary_path);
        let prov_path = out_dir.join("provenance.json");
        std::fs::write(&prov_path, serde_json::to_string_pretty(&provenance)? + "\n")?;
        outputs.push(prov_path);
    }

    Ok(PipelineOutcome {
        classified,
        selected,
        train,
        dev,
        test,
        summary,
        warnings,
        provenance,
        outputs,
    })
}

pub fn write_class_summary(
    summary: &[ClassSummaryRow],
    provenance: &Provenance,
    path: &Path,
) -> Result<(), PipelineError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "class,segments,minutes")?;
    for row in summary {
        writeln!(out, "{},{},{:.1}", row.class.label(), row.segments, row.minutes)?;
    }
    writeln!(out, "{}", provenance.comment_line())?;
    Ok(())
}

/// Partitions a manifest into train/dev/test. Tail strategy takes dev then
/// test from the end; seeded-random draws membership from the config seed.
/// Original manifest order is preserved inside each split.
pub fn cmd_split(
    manifest: &CorpusManifest,
    spec: &SplitSpec,
    seed: u64,
) -> Result<(CorpusManifest, CorpusManifest, CorpusManifest), PipelineError> {
    let size = manifest.segments.len();
    if spec.n_dev + spec.n_test >= size {
        return Err(PipelineError::SplitTooLarge {
            n_dev: spec.n_dev,
            n_test: spec.n_test,
            size,
        });
    }
    let (dev_idx, test_idx): (Vec<usize>, Vec<usize>) = match spec.strategy {
        SplitStrategy::Tail => {
            let test_start = size - spec.n_test;
            let dev_start = test_start - spec.n_dev;
            ((dev_start..test_start).collect(), (test_start..size).collect())
        }
        SplitStrategy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices: Vec<usize> = (0..size).collect();
            indices.shuffle(&mut rng);
            (
                indices[..spec.n_dev].to_vec(),
                indices[spec.n_dev..spec.n_dev + spec.n_test].to_vec(),
            )
        }
    };
    let in_dev: std::collections::HashSet<usize> = dev_idx.into_iter().collect();
    let in_test: std::collections::HashSet<usize> = test_idx.into_iter().collect();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for (i, segment) in manifest.segments.iter().enumerate() {
        if in_dev.contains(&i) {
            dev.push(segment.clone());
        } else if in_test.contains(&i) {
            test.push(segment.clone());
        } else {
            train.push(segment.clone());
        }
    }
    Ok((
        manifest.with_segments(train),
        manifest.with_segments(dev),
        manifest.with_segments(test),
    ))
}

#[derive(Debug)]
pub struct SynthOutcome {
    pub written: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Batch resynthesis: every `.cfm` mel matrix in `mel_dir` is inverted to a
/// linear spectrogram and phase-reconstructed with Griffin-Lim. An empty
/// directory is a success with a notice.
pub fn cmd_synth_gl(
    mel_dir: &Path,
    out_dir: &Path,
    dsp: &DspConfig,
) -> Result<SynthOutcome, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(mel_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Ok(SynthOutcome {
            written: Vec::new(),
            notices: vec![format!(
                "no mel matrix files in {}; nothing to synthesize",
                mel_dir.display()
            )],
        });
    }
    std::fs::create_dir_all(out_dir)?;
    let stft_cfg = dsp.stft();
    let fb = build_filterbank(dsp.n_mels, dsp.f_min_hz, dsp.f_max_hz, dsp.n_fft, dsp.sample_rate_hz)?;
    let results: Vec<Result<PathBuf, PipelineError>> = files
        .par_iter()
        .map(|path| {
            let data = read_matrix(path)?;
            if data.ncols() != dsp.n_mels {
                return Err(PipelineError::Dsp(DspError::DimensionMismatch(format!(
                    "{}: matrix has {} columns, expected {} mel bands",
                    path.display(),
                    data.ncols(),
                    dsp.n_mels
                ))));
            }
            let mel = MelSpectrogram {
                data,
                mode: dsp.mel_mode,
                config: stft_cfg,
            };
            let linear = crate::dsp::invert_mel(&mel, &fb)?;
            let wave = griffin_lim(&linear, dsp.griffin_lim_iterations, &stft_cfg, GlInit::ZeroPhase)?;
            let out_path = out_dir.join(
                Path::new(path.file_stem().unwrap_or_default()).with_extension("wav"),
            );
            write_wav(&out_path, &wave)?;
            Ok(out_path)
        })
        .collect();
    let mut written = Vec::new();
    for r in results {
        written.push(r?);
    }
    Ok(SynthOutcome {
        written,
        notices: Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct UtteranceEval {
    pub id: String,
    pub wer_pct: f64,
    pub cer_pct: f64,
    pub mcd_mean_db: f64,
    pub mcd_std_db: f64,
    pub mcd_frames: usize,
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
    pub ref_words: usize,
}

#[derive(Debug, Clone)]
pub struct CorpusEval {
    pub wer_pct: f64,
    pub cer_pct: f64,
    pub mcd_mean_db: f64,
    pub mcd_std_db: f64,
    pub n_utterances: usize,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub utterances: Vec<UtteranceEval>,
    pub corpus: CorpusEval,
    pub tables: ReportTables,
    pub provenance: Provenance,
}

fn mel_cepstra(path: &Path, dsp: &DspConfig) -> Result<ndarray::Array2<f64>, PipelineError> {
    let wave = load_wav(path)?;
    let spec = stft(&wave, &dsp.stft())?;
    let fb = build_filterbank(dsp.n_mels, dsp.f_min_hz, dsp.f_max_hz, dsp.n_fft, dsp.sample_rate_hz)?;
    let mel = mel_spectrogram(&spec, &fb, dsp.mel_mode)?;
    Ok(mel_cepstrum(&mel, dsp.n_cepstral)?)
}

/// Objective evaluation over matched reference/synthesized audio and
/// reference/hypothesis transcripts. Mismatched ids are an error that lists
/// every offending id.
pub fn cmd_eval(
    config: &PipelineConfig,
    ref_dir: &Path,
    syn_dir: &Path,
    transcripts: &BTreeMap<String, String>,
    hypotheses: &BTreeMap<String, String>,
) -> Result<EvalOutcome, PipelineError> {
    let ids: Vec<String> = transcripts.keys().cloned().collect();
    if ids.is_empty() {
        return Err(PipelineError::MissingInput("no transcripts to evaluate".into()));
    }
    let mut missing = Vec::new();
    for id in &ids {
        if !ref_dir.join(format!("{id}.wav")).is_file() {
            missing.push(format!("{id} (reference audio)"));
        }
        if !syn_dir.join(format!("{id}.wav")).is_file() {
            missing.push(format!("{id} (synthesized audio)"));
        }
        if !hypotheses.contains_key(id) {
            missing.push(format!("{id} (hypothesis)"));
        }
    }
    if !missing.is_empty() {
        return Err(PipelineError::IdMismatch(missing.join(", ")));
    }

    let results: Vec<Result<UtteranceEval, PipelineError>> = ids
        .par_iter()
        .map(|id| {
            let reference = &transcripts[id];
            let hypothesis = &hypotheses[id];
            let ref_words = word_tokens(reference, DEFAULT_PUNCTUATION);
            let hyp_words = word_tokens(hypothesis, DEFAULT_PUNCTUATION);
            let word_align = align(&ref_words, &hyp_words)
                .map_err(|e| PipelineError::from(e).with_segment(id))?;
            let ref_chars = char_tokens(reference, true);
            let hyp_chars = char_tokens(hypothesis, true);
            let char_align = align(&ref_chars, &hyp_chars)
                .map_err(|e| PipelineError::from(e).with_segment(id))?;
            let ref_cep = mel_cepstra(&ref_dir.join(format!("{id}.wav")), &config.dsp)
                .map_err(|e| e.with_segment(id))?;
            let syn_cep = mel_cepstra(&syn_dir.join(format!("{id}.wav")), &config.dsp)
                .map_err(|e| e.with_segment(id))?;
            let mcd = crate::eval::mcd(&ref_cep, &syn_cep, true)
                .map_err(|e| PipelineError::from(e).with_segment(id))?;
            Ok(UtteranceEval {
                id: id.clone(),
                wer_pct: 100.0 * error_rate(&word_align),
                cer_pct: 100.0 * error_rate(&char_align),
                mcd_mean_db: mcd.mean_db,
                mcd_std_db: mcd.std_db,
                mcd_frames: mcd.n_frames_aligned,
                sub: word_align.substitutions,
                ins: word_align.insertions,
                del: word_align.deletions,
                ref_words: word_align.ref_len,
            })
        })
        .collect();
    let mut utterances = Vec::with_capacity(results.len());
    for r in results {
        utterances.push(r?);
    }

    let corpus = pool_corpus_eval(&utterances, transcripts, hypotheses)?;
    let provenance = Provenance::new(config);
    let mut rows: Vec<ReportRow> = utterances
        .iter()
        .map(|u| ReportRow {
            id: u.id.clone(),
            model: "synth-gl".into(),
            reduction_factor: "N/A".into(),
            vowelized: false,
            wer_pct: u.wer_pct,
            cer_pct: u.cer_pct,
            mcd_mean_db: u.mcd_mean_db,
            mcd_std_db: u.mcd_std_db,
        })
        .collect();
    rows.push(ReportRow {
        id: "ALL".into(),
        model: "synth-gl".into(),
        reduction_factor: "N/A".into(),
        vowelized: false,
        wer_pct: corpus.wer_pct,
        cer_pct: corpus.cer_pct,
        mcd_mean_db: corpus.mcd_mean_db,
        mcd_std_db: corpus.mcd_std_db,
    });
    let mut tables = evaluation_report(&rows);
    tables.csv.push_str(&provenance.comment_line());
    tables.csv.push('\n');
    tables.text.push_str(&provenance.comment_line());
    tables.text.push('\n');

    Ok(EvalOutcome {
        utterances,
        corpus,
        tables,
        provenance,
    })
}

/// Corpus-level rates from pooled error counts; MCD pooled over aligned
/// frames (the per-utterance std is population-style, so moments combine
/// exactly).
fn pool_corpus_eval(
    utterances: &[UtteranceEval],
    transcripts: &BTreeMap<String, String>,
    hypotheses: &BTreeMap<String, String>,
) -> Result<CorpusEval, PipelineError> {
    let word_errors: usize = utterances.iter().map(|u| u.sub + u.ins + u.del).sum();
    let word_refs: usize = utterances.iter().map(|u| u.ref_words).sum();

    let mut char_errors = 0usize;
    let mut char_refs = 0usize;
    for u in utterances {
        let ref_chars = char_tokens(&transcripts[&u.id], true);
        let hyp_chars = char_tokens(&hypotheses[&u.id], true);
        let a = align(&ref_chars, &hyp_chars)?;
        char_errors += a.distance();
        char_refs += a.ref_len;
    }

    let total_frames: usize = utterances.iter().map(|u| u.mcd_frames).sum();
    let mean = utterances
        .iter()
        .map(|u| u.mcd_mean_db * u.mcd_frames as f64)
        .sum::<f64>()
        / total_frames as f64;
    let second_moment = utterances
        .iter()
        .map(|u| (u.mcd_std_db * u.mcd_std_db + u.mcd_mean_db * u.mcd_mean_db) * u.mcd_frames as f64)
        .sum::<f64>()
        / total_frames as f64;
    let std = (second_moment - mean * mean).max(0.0).sqrt();

    Ok(CorpusEval {
        wer_pct: 100.0 * word_errors as f64 / word_refs as f64,
        cer_pct: 100.0 * char_errors as f64 / char_refs as f64,
        mcd_mean_db: mean,
        mcd_std_db: std,
        n_utterances: utterances.len(),
    })
}

/// The `speakers` command: normalizes and links raw speaker entries into
/// canonical records.
pub fn cmd_speakers(
    entries: &[String],
    overrides_path: Option<&Path>,
) -> Result<Vec<crate::metadata::SpeakerRecord>, PipelineError> {
    let overrides: BTreeMap<String, String> = match overrides_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::MissingInput(format!("bad overrides file: {e}")))?
        }
        None => BTreeMap::new(),
    };
    Ok(link_speakers(entries, &NormalizeOptions::default(), &overrides))
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::MissingInput(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_wav;

    fn tone(freq: f64, seconds: f64, amp: f64, sr: u32) -> Waveform {
        let n = (seconds * sr as f64) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sample_rate_hz: sr,
        }
    }

    fn fixture_tree(dir: &Path, n: usize) -> PathBuf {
        let root = dir.join("corpus");
        std::fs::create_dir_all(&root).unwrap();
        for i in 0..n {
            let w = tone(200.0 + 50.0 * i as f64, 1.0, 0.5, 16000);
            write_wav(&root.join(format!("utt{i:02}.wav")), &w).unwrap();
            std::fs::write(root.join(format!("utt{i:02}.txt")), format!("text {i}")).unwrap();
        }
        root
    }

    #[test]
    fn ingest_scans_fixture_tree() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_tree(dir.path(), 3);
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let out = cmd_ingest(&cfg, "fixture").unwrap();
        assert_eq!(out.manifest.segments.len(), 3);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn ingest_skips_wav_without_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_tree(dir.path(), 3);
        std::fs::remove_file(root.join("utt01.txt")).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let out = cmd_ingest(&cfg, "fixture").unwrap();
        assert_eq!(out.manifest.segments.len(), 2);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn ingest_empty_tree_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("empty");
        std::fs::create_dir_all(&root).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let out = cmd_ingest(&cfg, "fixture").unwrap();
        assert!(out.manifest.segments.is_empty());
    }

    #[test]
    fn split_tail_100_into_50_25_25() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_tree(dir.path(), 4);
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let base = cmd_ingest(&cfg, "fixture").unwrap().manifest;
        // Inflate to 100 segments by cloning with fresh ids.
        let segments: Vec<AudioSegment> = (0..100)
            .map(|i| {
                let mut s = base.segments[i % 4].clone();
                s.id = format!("seg{i:03}");
                s
            })
            .collect();
        let manifest = base.with_segments(segments);
        let spec = SplitSpec::default();
        let (train, dev, test) = cmd_split(&manifest, &spec, 0).unwrap();
        assert_eq!(
            (train.segments.len(), dev.segments.len(), test.segments.len()),
            (50, 25, 25)
        );
        assert_eq!(dev.segments[0].id, "seg050");
        assert_eq!(test.segments[0].id, "seg075");
    }

    #[test]
    fn split_random_partitions_and_depends_on_seed() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_tree(dir.path(), 4);
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let base = cmd_ingest(&cfg, "fixture").unwrap().manifest;
        let segments: Vec<AudioSegment> = (0..40)
            .map(|i| {
                let mut s = base.segments[i % 4].clone();
                s.id = format!("seg{i:03}");
                s
            })
            .collect();
        let manifest = base.with_segments(segments);
        let spec = SplitSpec {
            n_dev: 10,
            n_test: 10,
            strategy: SplitStrategy::SeededRandom,
        };
        let (train_a, dev_a, test_a) = cmd_split(&manifest, &spec, 1).unwrap();
        let (_, dev_b, _) = cmd_split(&manifest, &spec, 2).unwrap();
        assert_eq!(dev_a.segments.len(), 10);
        assert_eq!(test_a.segments.len(), 10);
        let mut all: Vec<&str> = train_a
            .segments
            .iter()
            .chain(&dev_a.segments)
            .chain(&test_a.segments)
            .map(|s| s.id.as_str())
            .collect();
        all.sort();
        let mut expected: Vec<String> = (0..40).map(|i| format!("seg{i:03}")).collect();
        expected.sort();
        assert_eq!(all, expected.iter().map(String::as_str).collect::<Vec<_>>());
        let ids_a: Vec<&str> = dev_a.segments.iter().map(|s| s.id.as_str()).collect();
        let ids_b: Vec<&str> = dev_b.segments.iter().map(|s| s.id.as_str()).collect();
        assert_ne!(ids_a, ids_b);
    }

    #[test]
    fn split_too_large_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_tree(dir.path(), 3);
        let mut cfg = PipelineConfig::default();
        cfg.paths.corpus_root = Some(root);
        let manifest = cmd_ingest(&cfg, "fixture").unwrap().manifest;
        let spec = SplitSpec {
            n_dev: 2,
            n_test: 1,
            strategy: SplitStrategy::Tail,
        };
        assert!(matches!(
            cmd_split(&manifest, &spec, 0),
            Err(PipelineError::SplitTooLarge { .. })
        ));
    }

    #[test]
    fn synth_gl_empty_dir_is_success_with_notice() {
        let dir = tempfile::tempdir().unwrap();
        let mel_dir = dir.path().join("mels");
        std::fs::create_dir_all(&mel_dir).unwrap();
        let out = cmd_synth_gl(&mel_dir, &dir.path().join("wavs"), &DspConfig::default()).unwrap();
        assert!(out.written.is_empty());
        assert_eq!(out.notices.len(), 1);
    }

    #[test]
    fn synth_gl_corrupt_header_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let mel_dir = dir.path().join("mels");
        std::fs::create_dir_all(&mel_dir).unwrap();
        std::fs::write(mel_dir.join("bad.cfm"), b"garbage").unwrap();
        let err = cmd_synth_gl(&mel_dir, &dir.path().join("wavs"), &DspConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("bad.cfm"), "{err}");
    }

    #[test]
    fn eval_self_comparison_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let ref_dir = dir.path().join("ref");
        let syn_dir = dir.path().join("syn");
        std::fs::create_dir_all(&ref_dir).unwrap();
        std::fs::create_dir_all(&syn_dir).unwrap();
        let w = tone(440.0, 1.0, 0.4, 16000);
        write_wav(&ref_dir.join("a.wav"), &w).unwrap();
        write_wav(&syn_dir.join("a.wav"), &w).unwrap();
        let transcripts = BTreeMap::from([("a".to_string(), "hello broadcast world".to_string())]);
        let cfg = PipelineConfig::default();
        let out = cmd_eval(&cfg, &ref_dir, &syn_dir, &transcripts, &transcripts).unwrap();
        assert_eq!(out.utterances.len(), 1);
        assert_eq!(out.utterances[0].wer_pct, 0.0);
        assert_eq!(out.utterances[0].cer_pct, 0.0);
        assert!(out.utterances[0].mcd_mean_db.abs() < 1e-12);
        assert!(out.tables.csv.contains(&out.provenance.config_hash));
    }

    #[test]
    fn eval_missing_syn_lists_id() {
        let dir = tempfile::tempdir().unwrap();
        let ref_dir = dir.path().join("ref");
        let syn_dir = dir.path().join("syn");
        std::fs::create_dir_all(&ref_dir).unwrap();
        std::fs::create_dir_all(&syn_dir).unwrap();
        let w = tone(440.0, 0.5, 0.4, 16000);
        write_wav(&ref_dir.join("a.wav"), &w).unwrap();
        let transcripts = BTreeMap::from([("a".to_string(), "hello".to_string())]);
        let cfg = PipelineConfig::default();
        let err = cmd_eval(&cfg, &ref_dir, &syn_dir, &transcripts, &transcripts).unwrap_err();
        match err {
            PipelineError::IdMismatch(list) => assert!(list.contains('a'), "{list}"),
            other => panic!("expected IdMismatch, got {other:?}"),
        }
    }
}
