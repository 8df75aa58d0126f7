//! Forward and inverse short-time Fourier transform with centered frames,
//! reflect padding, and a periodic Hann window.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, Spectrogram, StftConfig};
use crate::corpus::Waveform;

fn hann(win: usize) -> Vec<f64> {
    (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
        .collect()
}

fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(samples[i % n.max(1)]);
    }
    out.extend_from_slice(samples);
    for i in (1..=pad).rev() {
        out.push(samples[n - 1 - (i % n.max(1))]);
    }
    out
}

pub(super) fn stft_complex(
    samples: &[f64],
    cfg: &StftConfig,
) -> Result<Array2<Complex<f64>>, DspError> {
    cfg.validate()?;
    if samples.len() < cfg.win {
        return Err(DspError::SignalTooShort {
            got: samples.len(),
            need: cfg.win,
        });
    }
    let pad = cfg.n_fft / 2;
    let padded = reflect_pad(samples, pad);
    let n_frames = samples.len() / cfg.hop + 1;
    let window = hann(cfg.win);
    let offset = (cfg.n_fft - cfg.win) / 2;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let bins = cfg.bins();
    let mut out = Array2::<Complex<f64>>::zeros((n_frames, bins));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for f in 0..n_frames {
        let start = f * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (n, &w) in window.iter().enumerate() {
            buf[offset + n] = Complex::new(padded[start + offset + n] * w, 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            out[(f, b)] = buf[b];
        }
    }
    Ok(out)
}

/// STFT with phase. Frames are centered via reflect padding of n_fft/2; the
/// Hann window of length `win` sits centered inside the n_fft frame.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram, DspError> {
    let complex = stft_complex(&w.samples, cfg)?;
    let magnitude = complex.mapv(|c| c.norm());
    let phase = complex.mapv(|c| c.arg());
    Ok(Spectrogram {
        magnitude,
        phase: Some(phase),
        config: *cfg,
        n_samples: w.samples.len(),
    })
}

pub(super) fn istft_complex(
    spec: &Array2<Complex<f64>>,
    cfg: &StftConfig,
    out_len: usize,
) -> Result<Vec<f64>, DspError> {
    cfg.validate()?;
    let n_frames = spec.nrows();
    let bins = cfg.bins();
    if spec.ncols() != bins {
        return Err(DspError::DimensionMismatch(format!(
            "expected {} bins, got {}",
            bins,
            spec.ncols()
        )));
    }
    let pad = cfg.n_fft / 2;
    let padded_len = (n_frames - 1) * cfg.hop + cfg.n_fft;
    let window = hann(cfg.win);
    let offset = (cfg.n_fft - cfg.win) / 2;

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(cfg.n_fft);
    let mut acc = vec![0.0f64; padded_len];
    let mut norm = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for f in 0..n_frames {
        // Rebuild the full spectrum from the half-spectrum (real signal).
        for b in 0..bins {
            buf[b] = spec[(f, b)];
        }
        for b in bins..cfg.n_fft {
            buf[b] = spec[(f, cfg.n_fft - b)].conj();
        }
        ifft.process(&mut buf);
        let start = f * cfg.hop;
        for (n, &w) in window.iter().enumerate() {
            let t = start + offset + n;
            acc[t] += buf[offset + n].re / cfg.n_fft as f64 * w;
            norm[t] += w * w;
        }
    }
    let mut out = vec![0.0f64; out_len];
    for (i, sample) in out.iter_mut().enumerate() {
        let t = pad + i;
        if t < padded_len && norm[t] > 1e-12 {
            *sample = acc[t] / norm[t];
        }
    }
    Ok(out)
}

/// Inverse STFT by windowed overlap-add with squared-window normalization.
/// Requires the phase matrix.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig) -> Result<Waveform, DspError> {
    let phase = spec.phase.as_ref().ok_or(DspError::MissingPhase)?;
    if phase.dim() != spec.magnitude.dim() {
        return Err(DspError::DimensionMismatch(
            "phase and magnitude shapes differ".into(),
        ));
    }
    let complex = ndarray::Zip::from(&spec.magnitude)
        .and(phase)
        .map_collect(|&m, &p| Complex::from_polar(m, p));
    let samples = istft_complex(&complex, cfg, spec.n_samples)?;
    Ok(Waveform {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Waveform {
            samples: (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect(),
            sample_rate_hz: 16000,
        }
    }

    #[test]
    fn round_trip_quarter_hop() {
        let cfg = StftConfig::default(); // hop = win / 4
        let w = noise(16000, 42);
        let spec = stft(&w, &cfg).unwrap();
        let back = istft(&spec, &cfg).unwrap();
        assert_eq!(back.samples.len(), w.samples.len());
        let rms: f64 = (w
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / w.samples.len() as f64)
            .sqrt();
        assert!(rms < 1e-6, "rms {rms}");
    }

    #[test]
    fn zero_signal_zero_magnitude() {
        let cfg = StftConfig::default();
        let w = Waveform {
            samples: vec![0.0; 4000],
            sample_rate_hz: 16000,
        };
        let spec = stft(&w, &cfg).unwrap();
        assert!(spec.magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sinusoid_energy_at_bin_center() {
        let cfg = StftConfig {
            n_fft: 1024,
            win: 1024,
            hop: 256,
            sample_rate_hz: 16000,
        };
        // Bin 64 center: 64 * 16000 / 1024 = 1000 Hz exactly.
        let freq = 64.0 * 16000.0 / 1024.0;
        let w = Waveform {
            samples: (0..16000)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
                .collect(),
            sample_rate_hz: 16000,
        };
        let spec = stft(&w, &cfg).unwrap();
        // Pick an interior frame, away from the padded edges.
        let f = spec.magnitude.nrows() / 2;
        let row = spec.magnitude.row(f);
        let total: f64 = row.iter().map(|m| m * m).sum();
        let peak: f64 = (62..=66).map(|b| row[b] * row[b]).sum();
        assert!(peak / total >= 0.90, "concentration {}", peak / total);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = StftConfig {
            n_fft: 1000, // not a power of two
            ..StftConfig::default()
        };
        let w = noise(4000, 1);
        assert!(matches!(stft(&w, &cfg), Err(DspError::BadConfig(_))));
        let cfg = StftConfig {
            hop: 0,
            ..StftConfig::default()
        };
        assert!(matches!(stft(&w, &cfg), Err(DspError::BadConfig(_))));
    }

    #[test]
    fn too_short_signal_rejected() {
        let cfg = StftConfig::default();
        let w = noise(100, 1);
        assert!(matches!(
            stft(&w, &cfg),
            Err(DspError::SignalTooShort { .. })
        ));
    }
}
