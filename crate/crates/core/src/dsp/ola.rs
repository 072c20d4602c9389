use super::Window;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative peak-to-peak ripple of `Σ_k w[n + k·hop]` over one hop period.
pub fn cola_ripple<T: Scalar>(window: &[T], hop: usize) -> f64 {
    if hop == 0 || window.is_empty() {
        return f64::INFINITY;
    }
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).map(|w| w.as_f64()).sum())
        .collect();
    let max = sums.iter().cloned().fold(f64::MIN, f64::max);
    let min = sums.iter().cloned().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        return f64::INFINITY;
    }
    (max - min) / max
}

/// Weighted overlap-add of analysis-windowed frames.
///
/// Each frame is multiplied by the synthesis window, summed at `hop`
/// spacing and divided by the overlapped `w²` curve. Output length is
/// `(K - 1)·hop + δ`; samples where the normalization curve vanishes are 0.
pub fn overlap_add<T: Scalar>(frames: &[Vec<T>], hop: usize, window: Window) -> Result<Vec<T>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let frame_length = first.len();
    if frames.iter().any(|f| f.len() != frame_length) {
        return Err(Error::contract("frames must share one length"));
    }
    if hop == 0 || hop > frame_length {
        return Err(Error::config(format!("hop {hop} must be in 1..={frame_length}")));
    }
    let w = window.coefficients::<T>(frame_length);
    let ripple = cola_ripple(&w, hop);
    if ripple > 1e-6 {
        return Err(Error::config(format!(
            "{window:?} window of length {frame_length} is not COLA at hop {hop} (ripple {ripple:.3e})"
        )));
    }
    let len = (frames.len() - 1) * hop + frame_length;
    let mut out = vec![T::zero(); len];
    let mut norm = vec![T::zero(); len];
    for (k, frame) in frames.iter().enumerate() {
        let base = k * hop;
        for j in 0..frame_length {
            out[base + j] += frame[j] * w[j];
            norm[base + j] += w[j] * w[j];
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > T::zero() { *o / *n } else { T::zero() };
    }
    Ok(out)
}

/// [`overlap_add`] truncated (or zero-extended) to `len` samples.
pub fn overlap_add_trimmed<T: Scalar>(frames: &[Vec<T>], hop: usize, window: Window, len: usize) -> Result<Vec<T>> {
    let mut out = overlap_add(frames, hop, window)?;
    out.resize(len, T::zero());
    Ok(out)
}
