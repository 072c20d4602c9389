use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ControlSignal;
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the envelope-based control proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sample_rate: u32,
    pub control_rate: u32,
    /// Laplacian smoothing passes applied at the audio rate.
    pub smooth_iterations: usize,
    pub smooth_lambda: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        // 6000 passes of λ = 0.25 give cos²ⁿ(ω/2) ≈ -20 dB at 100 Hz and
        // -0.03 dB at 4 Hz.
        Self {
            sample_rate: 16_000,
            control_rate: 250,
            smooth_iterations: 6000,
            smooth_lambda: 0.25,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.control_rate == 0 {
            return Err(Error::config("rates must be positive"));
        }
        if self.sample_rate % self.control_rate != 0 {
            return Err(Error::config(format!(
                "sample rate {} is not a multiple of control rate {}",
                self.sample_rate, self.control_rate
            )));
        }
        if !(self.smooth_lambda > 0.0 && self.smooth_lambda < 0.5) {
            return Err(Error::config(format!("lambda {} outside (0, 0.5)", self.smooth_lambda)));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        (self.sample_rate / self.control_rate) as usize
    }

    /// Control frames for `len` audio samples: `ceil(len · f_c / f_s)`.
    pub fn frames_for(&self, len: usize) -> usize {
        let num = len as u64 * self.control_rate as u64;
        num.div_ceil(self.sample_rate as u64) as usize
    }
}

/// Magnitude of the analytic signal, computed with one full-length FFT.
///
/// The one-sided spectrum keeps DC (and Nyquist, for even lengths) at unit
/// weight, doubles positive bins and zeroes negative ones.
pub fn hilbert_envelope<T: Scalar>(samples: &[T]) -> Vec<T> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<T>::new();
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&s| Complex::new(s, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let two = T::lit(2.0);
    let positive_end = n.div_ceil(2); // exclusive end of the doubled bins
    for (k, c) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            continue;
        }
        if k < positive_end {
            *c = *c * two;
        } else {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = T::one() / T::from_usize_lossy(n);
    buf.into_iter().map(|c| c.norm() * scale).collect()
}

/// Jacobi iterations of `x[n] += λ (x[n-1] - 2x[n] + x[n+1])` with
/// replicated end values.
pub fn laplacian_smooth<T: Scalar>(seq: &[T], iterations: usize, lambda: T) -> Result<Vec<T>> {
    if !(lambda > T::zero() && lambda < T::lit(0.5)) {
        return Err(Error::contract(format!("lambda {lambda} outside (0, 0.5)")));
    }
    let n = seq.len();
    let mut cur = seq.to_vec();
    if n < 2 || iterations == 0 {
        return Ok(cur);
    }
    let mut next = vec![T::zero(); n];
    let two = T::lit(2.0);
    for _ in 0..iterations {
        next[0] = cur[0] + lambda * (cur[1] - cur[0]);
        next[n - 1] = cur[n - 1] + lambda * (cur[n - 2] - cur[n - 1]);
        for (out, w) in next[1..n - 1].iter_mut().zip(cur.windows(3)) {
            *out = w[1] + lambda * (w[0] - two * w[1] + w[2]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Mean over consecutive bins of `hop` samples; the last bin may be partial.
pub fn decimate_mean<T: Scalar>(seq: &[T], hop: usize) -> Vec<T> {
    seq.chunks(hop.max(1))
        .map(|chunk| T::lit(chunk.iter().map(|v| v.as_f64()).sum::<f64>() / chunk.len() as f64))
        .collect()
}

/// Smoothed analytic-signal envelope decimated to the control rate: the
/// temporal control proxy γ̂ (one dimension, non-negative).
pub fn control_proxy<T: Scalar>(clip: &AudioClip<T>, config: &AnalysisConfig) -> Result<ControlSignal<T>> {
    config.validate()?;
    if clip.sample_rate() != config.sample_rate {
        return Err(Error::contract(format!(
            "clip at {} Hz, analysis expects {} Hz",
            clip.sample_rate(),
            config.sample_rate
        )));
    }
    let envelope = hilbert_envelope(clip.samples());
    let smoothed = laplacian_smooth(&envelope, config.smooth_iterations, T::lit(config.smooth_lambda))?;
    let values: Vec<T> = decimate_mean(&smoothed, config.hop())
        .into_iter()
        .map(|v| v.max(T::zero()))
        .collect();
    debug_assert_eq!(values.len(), config.frames_for(clip.len()));
    Ok(ControlSignal {
        control_rate: config.control_rate,
        dims: 1,
        values,
    })
}
