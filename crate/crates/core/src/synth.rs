//! Filtered-noise (subtractive) synthesis and the multiscale spectral loss.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::{filtered_noise_forward, fir_design, fir_forward};
use crate::autodiff::{Tape, Tensor, Var};
use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LOSS_FFT_SIZES: [usize; 6] = [2048, 1024, 512, 256, 128, 64];
pub const LOSS_LOG_FLOOR: f64 = 1e-7;

/// Per-frame half-spectrum magnitude responses, `K × n_bands` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFrames<T: Scalar> {
    n_bands: usize,
    magnitudes: Vec<T>,
}

impl<T: Scalar> FilterFrames<T> {
    pub fn new(magnitudes: Vec<T>, n_bands: usize) -> Result<Self> {
        if n_bands < 2 || magnitudes.len() % n_bands != 0 {
            return Err(Error::contract(format!(
                "{} magnitudes do not form frames of {n_bands} bands",
                magnitudes.len()
            )));
        }
        if let Some(bad) = magnitudes.iter().find(|m| !m.is_finite() || **m < T::zero()) {
            return Err(Error::contract(format!("filter magnitude {bad} is negative or non-finite")));
        }
        Ok(Self { n_bands, magnitudes })
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.len() / self.n_bands
    }

    pub fn magnitudes(&self) -> &[T] {
        &self.magnitudes
    }
}

/// Seed of the synthesis excitation. The stream is ChaCha8 keyed by the
/// seed; each sample takes the top 24 bits of one 32-bit output, mapped to
/// `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
}

impl NoiseSpec {
    pub const GENERATOR: &'static str = "chacha8-u24";

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn samples<T: Scalar>(&self, len: usize) -> Vec<T> {
        uniform_noise(self.seed, len)
    }
}

/// `len` uniform values in `[-1, 1)` from the seeded ChaCha8 stream.
pub fn uniform_noise<T: Scalar>(seed: u64, len: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| T::lit((rng.next_u32() >> 8) as f64 * (2.0 / 16_777_216.0) - 1.0))
        .collect()
}

fn check_ir_length(n_bands: usize, ir_length: usize) -> Result<usize> {
    if ir_length % 2 == 0 || ir_length > 2 * (n_bands - 1) + 1 {
        return Err(Error::contract(format!(
            "impulse response length {ir_length} must be odd and at most {} for {n_bands} bands",
            2 * (n_bands - 1) + 1
        )));
    }
    Ok(ir_length / 2)
}

/// Linear-phase FIR realizing `magnitudes` (one-sided bins of a real DFT of
/// size `2(n_bands - 1)`): zero-phase inverse DFT, centered, Hann-windowed
/// to `ir_length` taps. Exactly symmetric.
pub fn fir_from_magnitudes<T: Scalar>(magnitudes: &[T], ir_length: usize) -> Result<Vec<T>> {
    let n_bands = magnitudes.len();
    if n_bands < 2 {
        return Err(Error::contract("need at least two bands"));
    }
    let centre = check_ir_length(n_bands, ir_length)?;
    let design = fir_design::<T>(n_bands, centre);
    Ok(fir_forward(magnitudes, 1, n_bands, &design, centre))
}

/// Frame-wise filtered noise: frame `k` filters `hop` fresh noise samples
/// with its FIR, tails overlap-add into neighbors; output length `K·hop`.
pub fn filtered_noise<T: Scalar>(filters: &FilterFrames<T>, noise: &NoiseSpec, hop: usize, ir_length: usize) -> Result<Vec<T>> {
    let centre = check_ir_length(filters.n_bands, ir_length)?;
    let frames = filters.frames();
    let design = fir_design::<T>(filters.n_bands, centre);
    let irs = fir_forward(&filters.magnitudes, frames, filters.n_bands, &design, centre);
    let excitation = noise.samples::<T>(frames * hop);
    Ok(filtered_noise_forward(&irs, &excitation, 1, frames, hop, ir_length))
}

/// Differentiable decoder tail: `[K·B, n_bands]` time-major magnitudes to
/// `[B, K·hop]` audio, one excitation stream per batch item.
pub fn filtered_noise_var<T: Scalar>(
    tape: &mut Tape<T>,
    magnitudes: Var,
    noise_seeds: &[u64],
    hop: usize,
    ir_length: usize,
) -> Result<Var> {
    let n_bands = tape.value(magnitudes).cols();
    let centre = check_ir_length(n_bands, ir_length)?;
    let batch = noise_seeds.len();
    let rows = tape.value(magnitudes).rows();
    if batch == 0 || rows % batch != 0 {
        return Err(Error::contract(format!("{rows} filter frames for batch {batch}")));
    }
    let frames = rows / batch;
    let design = fir_design::<T>(n_bands, centre);
    let irs = tape.fir(magnitudes, &design, centre)?;
    let mut excitation = Vec::with_capacity(batch * frames * hop);
    for &seed in noise_seeds {
        excitation.extend(uniform_noise::<T>(seed, frames * hop));
    }
    tape.filtered_noise(irs, excitation, batch, hop)
}

/// Relative weights of the two terms of the multiscale spectral loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLossWeights {
    pub magnitude: f64,
    pub log_magnitude: f64,
}

impl Default for SpectralLossWeights {
    fn default() -> Self {
        Self {
            magnitude: 1.0,
            log_magnitude: 1.0,
        }
    }
}

/// Multiscale spectral loss between `[B, L]` signals: for each FFT size,
/// mean |ΔS| + mean |Δ log S| over Hann frames at 75% overlap, summed over
/// sizes.
pub fn multiscale_spectral_loss_var<T: Scalar>(tape: &mut Tape<T>, x: Var, y: Var) -> Result<Var> {
    weighted_spectral_loss_var(tape, x, y, SpectralLossWeights::default())
}

pub fn weighted_spectral_loss_var<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    y: Var,
    weights: SpectralLossWeights,
) -> Result<Var> {
    if tape.value(x).shape() != tape.value(y).shape() {
        return Err(Error::contract(format!(
            "spectral loss inputs differ in shape: {:?} vs {:?}",
            tape.value(x).shape(),
            tape.value(y).shape()
        )));
    }
    let floor = T::lit(LOSS_LOG_FLOOR);
    let mut terms = Vec::with_capacity(2 * LOSS_FFT_SIZES.len());
    for &n in &LOSS_FFT_SIZES {
        let window = Window::Hann.coefficients::<T>(n);
        let spectra = [x, y].map(|s| -> Result<Var> {
            let frames = tape.frame(s, &window, n / 4)?;
            tape.fft_magnitude(frames)
        });
        let [sx, sy] = spectra;
        let (sx, sy) = (sx?, sy?);
        let diff = tape.sub(sx, sy)?;
        let lin = tape.abs(diff);
        let lin = tape.mean(lin);
        terms.push(weighted(tape, lin, weights.magnitude));
        let lx = tape.log_floor(sx, floor);
        let ly = tape.log_floor(sy, floor);
        let ldiff = tape.sub(lx, ly)?;
        let log = tape.abs(ldiff);
        let log = tape.mean(log);
        terms.push(weighted(tape, log, weights.log_magnitude));
    }
    let stacked = tape.concat_rows(&terms)?;
    Ok(tape.sum(stacked))
}

fn weighted<T: Scalar>(tape: &mut Tape<T>, term: Var, weight: f64) -> Var {
    if weight == 1.0 {
        term
    } else {
        tape.scale(term, T::lit(weight))
    }
}

pub fn multiscale_spectral_loss<T: Scalar>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "spectral loss inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let yv = tape.constant(Tensor::new(vec![1, y.len()], y.to_vec())?);
    let loss = multiscale_spectral_loss_var(&mut tape, xv, yv)?;
    Ok(tape.value(loss).item().as_f64())
}
