//! Deterministic signal analysis: framing, STFT, analytic-signal envelopes,
//! Laplacian smoothing, the control proxy, MFCCs and weighted overlap-add.

mod control;
mod envelope;
mod filters;
mod mfcc;
mod ola;
mod spectral;

pub use control::ControlSignal;
pub use envelope::{control_proxy, decimate_mean, hilbert_envelope, laplacian_smooth, AnalysisConfig};
pub use filters::{cascade_in_place, Biquad, BUTTERWORTH4_Q};
pub use mfcc::{dct_matrix, MfccConfig, MfccExtractor};
pub use ola::{cola_ripple, overlap_add, overlap_add_trimmed};
pub use spectral::{frame_count, frame_signal, istft, stft, Spectrogram};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Tapering window applied to analysis/synthesis frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Hann sampled at half-integer points, `sin²(π(n + ½)/N)`. It is COLA
    /// at hops N/2 and N/4 and has no zero taps, so every sample of a
    /// Hann-framed signal can be recovered.
    Hann,
    Rect,
}

impl Window {
    pub fn coefficients<T: Scalar>(self, len: usize) -> Vec<T> {
        match self {
            Window::Rect => vec![T::one(); len],
            Window::Hann => (0..len)
                .map(|n| {
                    let s = (std::f64::consts::PI * (n as f64 + 0.5) / len as f64).sin();
                    T::lit(s * s)
                })
                .collect(),
        }
    }
}

/// Frame length, hop and window of a framed representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
}

impl FrameSpec {
    pub fn new(frame_length: usize, hop: usize, window: Window) -> crate::Result<Self> {
        if hop == 0 || hop > frame_length {
            return Err(crate::Error::config(format!(
                "hop {hop} must be in 1..={frame_length}"
            )));
        }
        Ok(Self {
            frame_length,
            hop,
            window,
        })
    }

    /// Synthesis framing: 128-sample Hann frames at a 64-sample hop.
    pub fn synthesis_default() -> Self {
        Self {
            frame_length: 128,
            hop: 64,
            window: Window::Hann,
        }
    }

    pub fn is_cola(&self) -> bool {
        cola_ripple::<f64>(&self.window.coefficients(self.frame_length), self.hop) < 1e-6
    }
}
