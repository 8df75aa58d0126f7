//! Corpus curation and objective evaluation toolkit for building TTS datasets
//! from broadcast-news recordings.
//!
//! The pipeline goes: ingest audio + transcripts + metadata into a manifest,
//! merge externally predicted quality scores, compute signal heuristics,
//! classify each segment into one of six classes, repair transcripts against
//! ASR hypotheses, select a high-quality subset, and split it for training.
//! The `dsp` and `eval` modules cover the synthesis-evaluation side:
//! mel analysis, Griffin-Lim resynthesis, WER/CER alignment, mel-cepstral
//! distortion, duration extraction from attention matrices, and MOS
//! aggregation.

pub mod config;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod metadata;
pub mod pipeline;
pub mod quality;
pub mod textproc;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
