use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Window;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    /// Frame spacing; one frame per control frame.
    pub hop: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_size: 1024,
            hop: 64,
            n_mels: 128,
            n_coeffs: 13,
            f_min: 20.0,
            f_max: 8000.0,
            log_floor: 1e-5,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Orthonormal type-II DCT matrix, `n × n` row-major: row `k` is basis `k`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for m in 0..n {
            d[k * n + m] = scale * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n as f64).cos();
        }
    }
    d
}

struct MelBand<T> {
    first_bin: usize,
    weights: Vec<T>,
}

/// Reusable MFCC pipeline: Hann-windowed centered frames, magnitude
/// spectrum, triangular mel bank, floored log, orthonormal DCT-II.
pub struct MfccExtractor<T: Scalar> {
    config: MfccConfig,
    window: Vec<T>,
    bands: Vec<MelBand<T>>,
    dct: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> MfccExtractor<T> {
    pub fn new(config: MfccConfig) -> Result<Self> {
        if !config.fft_size.is_power_of_two() {
            return Err(Error::config("MFCC fft size must be a power of two"));
        }
        if config.n_coeffs > config.n_mels || config.n_coeffs == 0 {
            return Err(Error::config(format!(
                "n_coeffs {} must be in 1..={}",
                config.n_coeffs, config.n_mels
            )));
        }
        if config.hop == 0 {
            return Err(Error::config("MFCC hop must be positive"));
        }
        let nyquist = config.sample_rate as f64 / 2.0;
        if !(config.f_min >= 0.0 && config.f_min < config.f_max && config.f_max <= nyquist) {
            return Err(Error::config("mel range must satisfy 0 <= f_min < f_max <= nyquist"));
        }
        let n_bins = config.fft_size / 2 + 1;
        let bin_hz = config.sample_rate as f64 / config.fft_size as f64;
        let (lo, hi) = (hz_to_mel(config.f_min), hz_to_mel(config.f_max));
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let bands = (0..config.n_mels)
            .map(|b| {
                let (left, center, right) = (edges[b], edges[b + 1], edges[b + 2]);
                let weight = |k: usize| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                };
                let first_bin = ((left / bin_hz).floor() as usize).min(n_bins - 1);
                let last_bin = ((right / bin_hz).ceil() as usize).min(n_bins - 1);
                MelBand {
                    first_bin,
                    weights: (first_bin..=last_bin).map(|k| T::lit(weight(k))).collect(),
                }
            })
            .collect();
        let dct = dct_matrix(config.n_mels)[..config.n_coeffs * config.n_mels]
            .iter()
            .map(|&v| T::lit(v))
            .collect();
        Ok(Self {
            config,
            window: Window::Hann.coefficients(config.fft_size),
            bands,
            dct,
            fft: FftPlanner::new().plan_fft_forward(config.fft_size),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.config.hop)
    }

    /// `K × n_coeffs` row-major coefficients with `K = ceil(L / hop)`; frame
    /// `k` is centered on sample `k·hop`.
    pub fn compute(&self, samples: &[T]) -> Vec<T> {
        let cfg = &self.config;
        let frames = self.frames_for(samples.len());
        let half = cfg.fft_size / 2;
        let floor = T::lit(cfg.log_floor);
        let mut out = Vec::with_capacity(frames * cfg.n_coeffs);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.fft_size];
        let mut mags = vec![T::zero(); half + 1];
        let mut log_mel = vec![T::zero(); cfg.n_mels];
        for k in 0..frames {
            let center = k * cfg.hop;
            for (j, c) in buf.iter_mut().enumerate() {
                let idx = (center + j).checked_sub(half);
                let s = idx.and_then(|i| samples.get(i)).copied().unwrap_or(T::zero());
                *c = Complex::new(s * self.window[j], T::zero());
            }
            self.fft.process(&mut buf);
            for (m, c) in mags.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (lm, band) in log_mel.iter_mut().zip(&self.bands) {
                let energy: T = band
                    .weights
                    .iter()
                    .zip(&mags[band.first_bin..])
                    .map(|(&w, &m)| w * m)
                    .sum();
                *lm = energy.max(floor).ln();
            }
            for c in 0..cfg.n_coeffs {
                let row = &self.dct[c * cfg.n_mels..(c + 1) * cfg.n_mels];
                out.push(row.iter().zip(&log_mel).map(|(&d, &v)| d * v).sum());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal() {
        let n = 128;
        let d = dct_matrix(n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| d[k * n + i] * d[k * n + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_second_gives_250_frames_of_13() {
        let ex = MfccExtractor::<f32>::new(MfccConfig::default()).unwrap();
        let x: Vec<f32> = (0..16000).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect();
        let m = ex.compute(&x);
        assert_eq!(m.len(), 250 * 13);
        assert!(m.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn silence_is_dct_of_constant_floor() {
        let ex = MfccExtractor::<f64>::new(MfccConfig::default()).unwrap();
        let m = ex.compute(&vec![0.0; 4000]);
        let c0 = (1e-5f64).ln() * (128f64).sqrt();
        for frame in m.chunks(13) {
            assert!((frame[0] - c0).abs() < 1e-9);
            assert!(frame[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = MfccConfig {
            n_coeffs: 200,
            ..MfccConfig::default()
        };
        assert!(MfccExtractor::<f32>::new(cfg).is_err());
    }

    #[test]
    fn every_mel_band_touches_a_bin() {
        let ex = MfccExtractor::<f64>::new(MfccConfig::default()).unwrap();
        assert!(ex.bands.iter().all(|b| b.weights.iter().any(|&w| w > 0.0)));
    }
}
