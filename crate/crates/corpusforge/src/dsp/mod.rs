//! STFT/mel analysis, mel-cepstrum extraction, inverse mel-basis, and
//! Griffin-Lim phase reconstruction.

mod griffin_lim;
mod matio;
mod mel;
mod stft;

pub use griffin_lim::{griffin_lim, spectral_inconsistency, GlInit};
pub use matio::{read_matrix, write_matrix, MATRIX_MAGIC};
pub use mel::{
    build_filterbank, hz_to_mel, invert_mel, mel_cepstrum, mel_cepstrum_inverse, mel_spectrogram,
    mel_to_hz, MelFilterbank, MelMode, MelSpectrogram,
};
pub use stft::{istft, stft};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Short-time analysis configuration. The window is always Hann; frames are
/// centered with reflect padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
    pub sample_rate_hz: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        // 50 ms window / 12.5 ms hop at 16 kHz, a standard broadcast-TTS
        // analysis recipe.
        StftConfig {
            n_fft: 1024,
            hop: 200,
            win: 800,
            sample_rate_hz: 16000,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !self.n_fft.is_power_of_two() || self.n_fft == 0 {
            return Err(DspError::BadConfig(format!(
                "n_fft {} is not a power of two",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.win || self.win > self.n_fft {
            return Err(DspError::BadConfig(format!(
                "need 0 < hop ({}) <= win ({}) <= n_fft ({})",
                self.hop, self.win, self.n_fft
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(DspError::BadConfig("zero sample rate".into()));
        }
        Ok(())
    }
}

/// Time-frequency magnitudes [frames x (n_fft/2 + 1)], optionally with phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitude: Array2<f64>,
    pub phase: Option<Array2<f64>>,
    pub config: StftConfig,
    /// Sample count of the source signal, for exact-length inversion.
    pub n_samples: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("signal too short: {got} samples, window is {need}")]
    SignalTooShort { got: usize, need: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("spectrogram carries no phase")]
    MissingPhase,
    #[error("invalid frequency range: f_min {f_min}, f_max {f_max}, nyquist {nyquist}")]
    BadFrequencyRange { f_min: f64, f_max: f64, nyquist: f64 },
    #[error("negative frequency {0}")]
    NegativeFrequency(f64),
    #[error("requested {requested} cepstral coefficients but only {available} mel bands")]
    TooManyCoefficients { requested: usize, available: usize },
    #[error("pseudo-inverse failed: {0}")]
    PinvFailed(String),
    #[error("bad matrix file {path}: {detail}")]
    BadMatrixFile { path: std::path::PathBuf, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
