//! Pipeline configuration: a single JSON file with strict schema validation.
//! Unknown keys are rejected so threshold typos fail loudly instead of
//! silently falling back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{MelMode, StftConfig};
use crate::quality::{ClassifyThresholds, SelectionPolicy};
use crate::textproc::{DiacritizerHook, RepairConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Input/output locations for the pipeline stages.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub score_file: Option<PathBuf>,
    pub asr_hypotheses: Option<PathBuf>,
    pub speaker_overrides: Option<PathBuf>,
    pub diacritizer: Option<DiacritizerHook>,
    pub output_dir: Option<PathBuf>,
}

/// DSP analysis parameters. The source material never pins these, so they
/// are config-exposed and recorded in every report for provenance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub win: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub mel_mode: MelMode,
    pub n_cepstral: usize,
    pub griffin_lim_iterations: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            sample_rate_hz: 16000,
            n_fft: 1024,
            win: 800,
            hop: 200,
            n_mels: 80,
            f_min_hz: 80.0,
            f_max_hz: 7600.0,
            mel_mode: MelMode::Magnitude,
            n_cepstral: 13,
            griffin_lim_iterations: 60,
        }
    }
}

impl DspConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig {
            n_fft: self.n_fft,
            win: self.win,
            hop: self.hop,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Frame parameters for the signal heuristics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicsConfig {
    pub snr_frame_ms: f64,
    pub snr_hop_ms: f64,
    pub music_window_s: f64,
}

impl Default for HeuristicsConfig {
    fn default() -> Self {
        HeuristicsConfig {
            snr_frame_ms: 25.0,
            snr_hop_ms: 10.0,
            music_window_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Dev/test from the tail of the manifest, reproducible without a seed.
    #[default]
    Tail,
    SeededRandom,
}

/// Data-split sizes and strategy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub n_dev: usize,
    pub n_test: usize,
    pub strategy: SplitStrategy,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            n_dev: 25,
            n_test: 25,
            strategy: SplitStrategy::Tail,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub dsp: DspConfig,
    pub heuristics: HeuristicsConfig,
    pub thresholds: ClassifyThresholds,
    pub selection: SelectionPolicy,
    pub repair: RepairConfig,
    pub split: SplitSpec,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: PathsConfig::default(),
            dsp: DspConfig::default(),
            heuristics: HeuristicsConfig::default(),
            thresholds: ClassifyThresholds::default(),
            selection: SelectionPolicy::default(),
            repair: RepairConfig::default(),
            split: SplitSpec::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dsp
            .stft()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.selection
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.repair
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.tau_music) || !(0.0..=1.0).contains(&t.tau_clip) {
            return Err(ConfigError::Invalid(format!(
                "tau_music ({}) and tau_clip ({}) must lie in [0, 1]",
                t.tau_music, t.tau_clip
            )));
        }
        if t.tau_wer < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "tau_wer {} must be nonnegative",
                t.tau_wer
            )));
        }
        if self.heuristics.snr_frame_ms <= 0.0
            || self.heuristics.snr_hop_ms <= 0.0
            || self.heuristics.music_window_s <= 0.0
        {
            return Err(ConfigError::Invalid(
                "heuristic frame parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical serialized form; embedded in every report
    /// so outputs are traceable to the exact configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        format!("{digest:x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 1, "thershold": 4.0}"#).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn nested_unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"dsp": {"n_ffft": 512}}"#).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn out_of_range_threshold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"selection": {"threshold": 7.0}}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn hash_is_stable_and_config_sensitive() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 99;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 42}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.dsp.n_mels, 80);
        assert_eq!(cfg.selection.threshold, 4.0);
    }
}
