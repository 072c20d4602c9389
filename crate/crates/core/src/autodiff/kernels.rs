//! Dense kernels shared by the tape ops and the inference path.

use crate::scalar::{gemm, Scalar};

/// `(centre + 1) × n_bands` map from band magnitudes to Hann-windowed
/// zero-phase taps at distance `d = 0..=centre` from the center.
///
/// Bands are the one-sided bins of a real DFT of size `2(n_bands - 1)`.
pub fn fir_design<T: Scalar>(n_bands: usize, centre: usize) -> Vec<T> {
    let n = 2 * n_bands.saturating_sub(1).max(1);
    let mut out = vec![T::zero(); (centre + 1) * n_bands];
    for d in 0..=centre {
        let hann = if centre == 0 {
            1.0
        } else {
            0.5 + 0.5 * (std::f64::consts::PI * d as f64 / centre as f64).cos()
        };
        for k in 0..n_bands {
            let w = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            let phase = 2.0 * std::f64::consts::PI * ((k * d) % n) as f64 / n as f64;
            out[d * n_bands + k] = T::lit(hann * w * phase.cos() / n as f64);
        }
    }
    out
}

pub fn fir_forward<T: Scalar>(mags: &[T], rows: usize, bands: usize, half: &[T], centre: usize) -> Vec<T> {
    let mut taps = vec![T::zero(); rows * (centre + 1)];
    gemm(rows, bands, centre + 1, mags, false, half, true, T::zero(), &mut taps);
    let len = 2 * centre + 1;
    let mut out = vec![T::zero(); rows * len];
    for (dst, src) in out.chunks_exact_mut(len).zip(taps.chunks_exact(centre + 1)) {
        for (d, &v) in src.iter().enumerate() {
            dst[centre + d] = v;
            dst[centre - d] = v;
        }
    }
    out
}

/// Accumulates the magnitude gradient of [`fir_forward`] into `out`.
pub fn fir_backward<T: Scalar>(grad: &[T], rows: usize, bands: usize, half: &[T], out: &mut [T]) {
    let width = half.len() / bands;
    let centre = width - 1;
    let len = 2 * centre + 1;
    let mut folded = vec![T::zero(); rows * width];
    for (dst, g) in folded.chunks_exact_mut(width).zip(grad.chunks_exact(len)) {
        dst[0] = g[centre];
        for d in 1..=centre {
            dst[d] = g[centre + d] + g[centre - d];
        }
    }
    gemm(rows, width, bands, &folded, false, half, false, T::one(), out);
}

/// Output index range `m` for which `t·hop + j + m - centre` lands in
/// `[0, total)`.
fn tap_range(pos: usize, centre: usize, taps: usize, total: usize) -> (usize, usize) {
    let lo = centre.saturating_sub(pos);
    let hi = (total + centre).saturating_sub(pos).min(taps);
    (lo, hi.max(lo))
}

pub fn filtered_noise_forward<T: Scalar>(
    ir: &[T],
    noise: &[T],
    batch: usize,
    frames: usize,
    hop: usize,
    taps: usize,
) -> Vec<T> {
    let total = frames * hop;
    let centre = taps / 2;
    let mut out = vec![T::zero(); batch * total];
    for b in 0..batch {
        let y = &mut out[b * total..(b + 1) * total];
        let x = &noise[b * total..(b + 1) * total];
        for t in 0..frames {
            let h = &ir[(t * batch + b) * taps..(t * batch + b + 1) * taps];
            for j in 0..hop {
                let pos = t * hop + j;
                let xj = x[pos];
                let (lo, hi) = tap_range(pos, centre, taps, total);
                let base = pos + lo - centre;
                for (dst, &hm) in y[base..base + hi - lo].iter_mut().zip(&h[lo..hi]) {
                    *dst += hm * xj;
                }
            }
        }
    }
    out
}

/// Accumulates the impulse-response gradient of [`filtered_noise_forward`].
pub fn filtered_noise_backward<T: Scalar>(
    grad: &[T],
    noise: &[T],
    batch: usize,
    frames: usize,
    hop: usize,
    taps: usize,
    out: &mut [T],
) {
    let total = frames * hop;
    let centre = taps / 2;
    for b in 0..batch {
        let g = &grad[b * total..(b + 1) * total];
        let x = &noise[b * total..(b + 1) * total];
        for t in 0..frames {
            let dh = &mut out[(t * batch + b) * taps..(t * batch + b + 1) * taps];
            for j in 0..hop {
                let pos = t * hop + j;
                let xj = x[pos];
                let (lo, hi) = tap_range(pos, centre, taps, total);
                let base = pos + lo - centre;
                for (dst, &gv) in dh[lo..hi].iter_mut().zip(&g[base..base + hi - lo]) {
                    *dst += gv * xj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_spectrum_gives_hann_weighted_impulse() {
        let design: Vec<f64> = fir_design(65, 64);
        let ir = fir_forward(&vec![1.0; 65], 1, 65, &design, 64);
        assert_eq!(ir.len(), 129);
        assert!((ir[64] - 1.0).abs() < 1e-12);
        for (i, v) in ir.iter().enumerate() {
            if i != 64 {
                assert!(v.abs() < 1e-12, "tap {i} = {v}");
            }
        }
    }

    #[test]
    fn taps_are_mirror_symmetric_bitwise() {
        let design: Vec<f32> = fir_design(65, 64);
        let mags: Vec<f32> = (0..130).map(|i| ((i * 7919) % 97) as f32 / 50.0).collect();
        let ir = fir_forward(&mags, 2, 65, &design, 64);
        for row in ir.chunks(129) {
            for d in 0..=64 {
                assert_eq!(row[64 + d].to_bits(), row[64 - d].to_bits());
            }
        }
    }

    #[test]
    fn unit_impulse_response_passes_noise_through() {
        let mut ir = vec![0.0f64; 3 * 2 * 5];
        for r in 0..6 {
            ir[r * 5 + 2] = 1.0;
        }
        let noise: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f64).sin()).collect();
        let y = filtered_noise_forward(&ir, &noise, 2, 3, 4, 5);
        for (a, b) in y.iter().zip(&noise) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn filtered_noise_matches_direct_convolution() {
        let (batch, frames, hop, taps) = (2, 4, 3, 5);
        let ir: Vec<f64> = (0..batch * frames * taps).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let noise: Vec<f64> = (0..batch * frames * hop).map(|i| ((i * 13) % 11) as f64 - 5.0).collect();
        let y = filtered_noise_forward(&ir, &noise, batch, frames, hop, taps);
        let total = frames * hop;
        for b in 0..batch {
            let mut expect = vec![0.0; total];
            for t in 0..frames {
                for j in 0..hop {
                    for m in 0..taps {
                        let idx = (t * hop + j + m) as isize - 2;
                        if idx >= 0 && (idx as usize) < total {
                            expect[idx as usize] += ir[(t * batch + b) * taps + m] * noise[b * total + t * hop + j];
                        }
                    }
                }
            }
            assert_eq!(&y[b * total..(b + 1) * total], &expect[..]);
        }
    }
}
