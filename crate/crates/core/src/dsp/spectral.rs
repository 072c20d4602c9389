use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{overlap_add, Window};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of frames for a signal of `len` samples: every full frame at
/// `hop` spacing, plus one zero-padded tail frame when samples remain
/// uncovered. Signals shorter than a frame yield a single padded frame.
pub fn frame_count(len: usize, frame_length: usize, hop: usize) -> usize {
    if len <= frame_length {
        return 1;
    }
    let span = len - frame_length;
    1 + span / hop + usize::from(span % hop != 0)
}

/// Cuts `samples` into windowed frames following [`frame_count`].
pub fn frame_signal<T: Scalar>(samples: &[T], frame_length: usize, hop: usize, window: &[T]) -> Vec<Vec<T>> {
    let count = frame_count(samples.len(), frame_length, hop);
    (0..count)
        .map(|f| {
            let start = f * hop;
            (0..frame_length)
                .map(|j| samples.get(start + j).map_or(T::zero(), |&s| s * window[j]))
                .collect()
        })
        .collect()
}

/// One-sided short-time spectrum: `fft_size / 2 + 1` bins per frame.
#[derive(Debug, Clone)]
pub struct Spectrogram<T: Scalar> {
    pub fft_size: usize,
    pub hop: usize,
    pub frames: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn magnitudes(&self) -> Vec<Vec<T>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|c| c.norm()).collect())
            .collect()
    }
}

pub fn stft<T: Scalar>(samples: &[T], fft_size: usize, hop: usize, window: Window) -> Result<Spectrogram<T>> {
    if !fft_size.is_power_of_two() {
        return Err(Error::contract(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 || hop > fft_size {
        return Err(Error::contract(format!("hop {hop} must be in 1..={fft_size}")));
    }
    let win = window.coefficients::<T>(fft_size);
    let fft = FftPlanner::<T>::new().plan_fft_forward(fft_size);
    let half = fft_size / 2 + 1;
    let frames = frame_signal(samples, fft_size, hop, &win)
        .into_iter()
        .map(|frame| {
            let mut buf: Vec<Complex<T>> = frame.into_iter().map(|v| Complex::new(v, T::zero())).collect();
            fft.process(&mut buf);
            buf.truncate(half);
            buf
        })
        .collect();
    Ok(Spectrogram { fft_size, hop, frames })
}

/// Inverse of [`stft`] by weighted overlap-add, trimmed to `len` samples.
pub fn istft<T: Scalar>(spec: &Spectrogram<T>, window: Window, len: usize) -> Result<Vec<T>> {
    let n = spec.fft_size;
    let ifft = FftPlanner::<T>::new().plan_fft_inverse(n);
    let scale = T::one() / T::from_usize_lossy(n);
    let frames: Vec<Vec<T>> = spec
        .frames
        .iter()
        .map(|half| {
            let mut full = vec![Complex::new(T::zero(), T::zero()); n];
            full[..half.len()].copy_from_slice(half);
            for k in 1..n / 2 {
                full[n - k] = half[k].conj();
            }
            ifft.process(&mut full);
            full.into_iter().map(|c| c.re * scale).collect()
        })
        .collect();
    let mut out = overlap_add(&frames, spec.hop, window)?;
    out.resize(len, T::zero());
    Ok(out)
}
