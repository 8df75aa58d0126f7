//! Mel scale, triangular filterbank, log-mel spectrograms, pseudo-inverse
//! mel inversion, and mel-cepstrum extraction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DspError, Spectrogram, StftConfig};

pub const LOG_FLOOR: f64 = 1e-10;

/// m = 2595 * log10(1 + f / 700).
pub fn hz_to_mel(f: f64) -> Result<f64, DspError> {
    if f < 0.0 {
        return Err(DspError::NegativeFrequency(f));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> Result<f64, DspError> {
    if m < 0.0 {
        return Err(DspError::NegativeFrequency(m));
    }
    Ok(700.0 * (10f64.powf(m / 2595.0) - 1.0))
}

/// Triangular mel filterbank [n_mels x (n_fft/2 + 1)], centers uniform on the
/// mel scale, peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub n_mels: usize,
}

pub fn build_filterbank(
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    n_fft: usize,
    sample_rate_hz: u32,
) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(DspError::BadFrequencyRange {
            f_min,
            f_max,
            nyquist,
        });
    }
    if n_mels < 2 {
        return Err(DspError::BadConfig(format!("n_mels {n_mels} < 2")));
    }
    let bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_min)?;
    let mel_hi = hz_to_mel(f_max)?;
    // n_mels + 2 edge points, uniform in mel.
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| {
            let m = mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64;
            mel_to_hz(m).expect("mel edges nonnegative")
        })
        .collect();
    let bin_hz = |b: usize| b as f64 * sample_rate_hz as f64 / n_fft as f64;

    let mut weights = Array2::<f64>::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for b in 0..bins {
            let f = bin_hz(b);
            let w = if f <= left || f >= right {
                0.0
            } else if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            weights[(m, b)] = w;
        }
    }
    Ok(MelFilterbank {
        weights,
        f_min,
        f_max,
        n_mels,
    })
}

/// Whether mel energies are taken over magnitudes or power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelMode {
    #[default]
    Magnitude,
    Power,
}

/// Log-mel matrix [frames x n_mels] with its analysis configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Array2<f64>,
    pub mode: MelMode,
    pub config: StftConfig,
}

/// log(max(fb * spectrum, floor)) per frame, natural log, floor 1e-10.
pub fn mel_spectrogram(
    spec: &Spectrogram,
    fb: &MelFilterbank,
    mode: MelMode,
) -> Result<MelSpectrogram, DspError> {
    if spec.magnitude.ncols() != fb.weights.ncols() {
        return Err(DspError::DimensionMismatch(format!(
            "spectrogram has {} bins, filterbank expects {}",
            spec.magnitude.ncols(),
            fb.weights.ncols()
        )));
    }
    let energy = match mode {
        MelMode::Magnitude => spec.magnitude.clone(),
        MelMode::Power => spec.magnitude.mapv(|m| m * m),
    };
    let mel = energy.dot(&fb.weights.t());
    let data = mel.mapv(|v| v.max(LOG_FLOOR).ln());
    Ok(MelSpectrogram {
        data,
        mode,
        config: spec.config,
    })
}

/// Moore-Penrose pseudo-inverse via SVD.
fn pinv(m: &Array2<f64>) -> Result<Array2<f64>, DspError> {
    let (rows, cols) = m.dim();
    let dm = nalgebra::DMatrix::from_row_iterator(rows, cols, m.iter().copied());
    let inv = dm
        .pseudo_inverse(1e-12)
        .map_err(|e| DspError::PinvFailed(e.to_string()))?;
    Ok(Array2::from_shape_fn((cols, rows), |(i, j)| inv[(i, j)]))
}

/// Maps a log-mel spectrogram back to a linear-frequency magnitude
/// spectrogram with the pseudo-inverse mel basis. Negative leakage from the
/// pseudo-inverse is clamped to zero.
pub fn invert_mel(melspec: &MelSpectrogram, fb: &MelFilterbank) -> Result<Spectrogram, DspError> {
    if melspec.data.ncols() != fb.n_mels {
        return Err(DspError::DimensionMismatch(format!(
            "mel spectrogram has {} bands, filterbank has {}",
            melspec.data.ncols(),
            fb.n_mels
        )));
    }
    let energies = melspec.data.mapv(f64::exp);
    let inv = pinv(&fb.weights)?;
    let linear = energies.dot(&inv.t()).mapv(|v| v.max(0.0));
    let magnitude = match melspec.mode {
        MelMode::Magnitude => linear,
        MelMode::Power => linear.mapv(f64::sqrt),
    };
    let n_samples = (melspec.data.nrows().saturating_sub(1)) * melspec.config.hop;
    Ok(Spectrogram {
        magnitude,
        phase: None,
        config: melspec.config,
        n_samples,
    })
}

/// DCT-II (orthonormal) of each log-mel frame, coefficients 0..n_coef-1.
/// Coefficient 0 carries the frame energy.
pub fn mel_cepstrum(melspec: &MelSpectrogram, n_coef: usize) -> Result<Array2<f64>, DspError> {
    let n_mels = melspec.data.ncols();
    if n_coef > n_mels {
        return Err(DspError::TooManyCoefficients {
            requested: n_coef,
            available: n_mels,
        });
    }
    let frames = melspec.data.nrows();
    let n = n_mels as f64;
    let mut out = Array2::<f64>::zeros((frames, n_coef));
    for f in 0..frames {
        let row = melspec.data.row(f);
        for k in 0..n_coef {
            let mut acc = 0.0;
            for (i, &x) in row.iter().enumerate() {
                acc += x * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n))
                    .cos();
            }
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            out[(f, k)] = scale * acc;
        }
    }
    Ok(out)
}

/// Inverse of the orthonormal DCT-II, for transform checks.
pub fn mel_cepstrum_inverse(cep: &Array2<f64>, n_mels: usize) -> Array2<f64> {
    let frames = cep.nrows();
    let n = n_mels as f64;
    let mut out = Array2::<f64>::zeros((frames, n_mels));
    for f in 0..frames {
        for i in 0..n_mels {
            let mut acc = 0.0;
            for (k, &c) in cep.row(f).iter().enumerate() {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                acc += scale
                    * c
                    * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos();
            }
            out[(f, i)] = acc;
        }
    }
    out
}

#[allow(dead_code)]
pub(crate) fn filterbank_pinv(fb: &MelFilterbank) -> Result<Array2<f64>, DspError> {
    pinv(&fb.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn default_fb() -> MelFilterbank {
        build_filterbank(80, 80.0, 7600.0, 1024, 16000).unwrap()
    }

    fn spec_from(mag: Array2<f64>) -> Spectrogram {
        Spectrogram {
            magnitude: mag,
            phase: None,
            config: StftConfig::default(),
            n_samples: 0,
        }
    }

    #[test]
    fn mel_scale_anchors() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        let expected = 2595.0 * 2f64.log10();
        assert!((hz_to_mel(700.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 781.17).abs() < 0.01);
    }

    #[test]
    fn mel_inverse_property() {
        for f in [0.0, 80.0, 440.0, 1000.0, 7600.0, 8000.0] {
            let round = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
            assert!((round - f).abs() < 1e-9, "{f} -> {round}");
        }
    }

    #[test]
    fn negative_frequency_rejected() {
        assert!(matches!(hz_to_mel(-1.0), Err(DspError::NegativeFrequency(_))));
    }

    #[test]
    fn filterbank_rows_unimodal() {
        let fb = default_fb();
        for row in fb.weights.rows() {
            let vals: Vec<f64> = row.to_vec();
            let peak = vals
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(peak > 0.0);
            // nonnegative and unimodal: rises to the max region, then falls
            assert!(vals.iter().all(|&v| v >= 0.0));
            let first_peak = vals.iter().position(|&v| v == peak).unwrap();
            let last_peak = vals.iter().rposition(|&v| v == peak).unwrap();
            for w in vals[..=first_peak].windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
            for w in vals[last_peak..].windows(2) {
                assert!(w[0] + 1e-12 >= w[1]);
            }
        }
    }

    #[test]
    fn filterbank_covers_interior_bins() {
        let fb = default_fb();
        let bin_hz = |b: usize| b as f64 * 16000.0 / 1024.0;
        let col_sums = fb.weights.sum_axis(ndarray::Axis(0));
        // First and last filter edges, not f_min/f_max themselves.
        let lo = mel_to_hz(
            hz_to_mel(80.0).unwrap()
                + (hz_to_mel(7600.0).unwrap() - hz_to_mel(80.0).unwrap()) / 81.0 * 0.0,
        )
        .unwrap();
        for (b, &sum) in col_sums.iter().enumerate() {
            let f = bin_hz(b);
            if f > lo + 100.0 && f < 7400.0 {
                assert!(sum > 0.0, "bin {b} at {f} Hz uncovered");
            }
        }
    }

    #[test]
    fn filterbank_minimal_two_filters() {
        let fb = build_filterbank(2, 0.0, 8000.0, 512, 16000).unwrap();
        assert_eq!(fb.weights.dim(), (2, 257));
    }

    #[test]
    fn filterbank_invalid_range() {
        assert!(matches!(
            build_filterbank(80, 7600.0, 80.0, 1024, 16000),
            Err(DspError::BadFrequencyRange { .. })
        ));
        assert!(matches!(
            build_filterbank(80, 0.0, 9000.0, 1024, 16000),
            Err(DspError::BadFrequencyRange { .. })
        ));
    }

    #[test]
    fn mel_zero_magnitude_hits_floor() {
        let fb = default_fb();
        let spec = spec_from(Array2::zeros((3, 513)));
        let mel = mel_spectrogram(&spec, &fb, MelMode::Magnitude).unwrap();
        assert!(mel.data.iter().all(|&v| v == LOG_FLOOR.ln()));
        assert_eq!(mel.data.dim(), (3, 80));
    }

    #[test]
    fn mel_log_linearity() {
        let fb = default_fb();
        let mag = Array2::from_elem((2, 513), 0.5);
        let m1 = mel_spectrogram(&spec_from(mag.clone()), &fb, MelMode::Magnitude).unwrap();
        let m2 = mel_spectrogram(&spec_from(mag * 2.0), &fb, MelMode::Magnitude).unwrap();
        for (a, b) in m1.data.iter().zip(m2.data.iter()) {
            if *a > LOG_FLOOR.ln() + 1.0 {
                assert!((b - a - 2f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mel_power_gain_equivariance() {
        let fb = default_fb();
        let mag = Array2::from_elem((2, 513), 0.5);
        let k = 3.0f64;
        let m1 = mel_spectrogram(&spec_from(mag.clone()), &fb, MelMode::Power).unwrap();
        let m2 = mel_spectrogram(&spec_from(mag * k), &fb, MelMode::Power).unwrap();
        for (a, b) in m1.data.iter().zip(m2.data.iter()) {
            if *a > LOG_FLOOR.ln() + 1.0 {
                assert!((b - a - 2.0 * k.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mel_dimension_mismatch() {
        let fb = default_fb();
        let spec = spec_from(Array2::zeros((3, 100)));
        assert!(matches!(
            mel_spectrogram(&spec, &fb, MelMode::Magnitude),
            Err(DspError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pinv_identity_on_range() {
        let fb = default_fb();
        let inv = filterbank_pinv(&fb).unwrap();
        let product = fb.weights.dot(&inv); // n_mels x n_mels
        for i in 0..fb.n_mels {
            for j in 0..fb.n_mels {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (product[(i, j)] - expected).abs() < 1e-6,
                    "({i},{j}) = {}",
                    product[(i, j)]
                );
            }
        }
    }

    /// Smooth synthetic magnitude spectrum: a few broad gaussian bumps.
    fn smooth_spectrum(bins: usize) -> Array1<f64> {
        Array1::from_shape_fn(bins, |b| {
            let x = b as f64;
            2.0 * (-(x - 100.0).powi(2) / 4000.0).exp()
                + 1.0 * (-(x - 250.0).powi(2) / 8000.0).exp()
                + 0.5 * (-(x - 400.0).powi(2) / 6000.0).exp()
                + 0.01
        })
    }

    #[test]
    fn invert_mel_round_trip_in_band() {
        let fb = default_fb();
        let bins = 513;
        let mut mag = Array2::<f64>::zeros((4, bins));
        for f in 0..4 {
            let s = smooth_spectrum(bins);
            for b in 0..bins {
                mag[(f, b)] = s[b] * (1.0 + 0.1 * f as f64);
            }
        }
        let spec = spec_from(mag);
        let mel = mel_spectrogram(&spec, &fb, MelMode::Magnitude).unwrap();
        let linear = invert_mel(&mel, &fb).unwrap();
        assert!(linear.magnitude.iter().all(|&v| v >= 0.0));
        let mel_back = mel_spectrogram(&linear, &fb, MelMode::Magnitude).unwrap();
        // Compare in linear mel-energy domain.
        let a = mel.data.mapv(f64::exp);
        let b = mel_back.data.mapv(f64::exp);
        let num: f64 = (&a - &b).mapv(|v| v * v).sum().sqrt();
        let den: f64 = a.mapv(|v| v * v).sum().sqrt();
        assert!(num / den < 0.05, "relative error {}", num / den);
    }

    #[test]
    fn invert_mel_zero_floor() {
        let fb = default_fb();
        let mel = MelSpectrogram {
            data: Array2::from_elem((2, 80), LOG_FLOOR.ln()),
            mode: MelMode::Magnitude,
            config: StftConfig::default(),
        };
        let spec = invert_mel(&mel, &fb).unwrap();
        assert!(spec.magnitude.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn cepstrum_of_constant_frame() {
        let mel = MelSpectrogram {
            data: Array2::from_elem((1, 80), 2.5),
            mode: MelMode::Magnitude,
            config: StftConfig::default(),
        };
        let cep = mel_cepstrum(&mel, 13).unwrap();
        assert_eq!(cep.dim(), (1, 13));
        assert!(cep[(0, 0)].abs() > 1.0);
        for k in 1..13 {
            assert!(cep[(0, k)].abs() < 1e-9, "c{k} = {}", cep[(0, k)]);
        }
    }

    #[test]
    fn cepstrum_orthonormal_inverse() {
        let data = Array2::from_shape_fn((3, 16), |(f, i)| ((f * 7 + i) as f64 * 0.37).sin());
        let mel = MelSpectrogram {
            data: data.clone(),
            mode: MelMode::Magnitude,
            config: StftConfig::default(),
        };
        let cep = mel_cepstrum(&mel, 16).unwrap();
        let back = mel_cepstrum_inverse(&cep, 16);
        for (a, b) in data.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cepstrum_too_many_coefficients() {
        let mel = MelSpectrogram {
            data: Array2::zeros((1, 13)),
            mode: MelMode::Magnitude,
            config: StftConfig::default(),
        };
        assert!(matches!(
            mel_cepstrum(&mel, 14),
            Err(DspError::TooManyCoefficients { .. })
        ));
    }
}
