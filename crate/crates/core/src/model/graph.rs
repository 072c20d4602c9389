//! Network definitions shared by training and inference. All sequences are
//! time-major `[K·B, d]` (row `t·B + b`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::layers::{gru_sequence, init_gru, init_linear, linear, GruParams};
use crate::autodiff::{Bound, ParamStore, Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

pub const ENCODER: &str = "encoder";
pub const DECODER: &str = "decoder";
pub const CONTROL: &str = "control";

fn gru_shapes(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        (format!("{prefix}.gru.w_x"), vec![input, 3 * hidden]),
        (format!("{prefix}.gru.u_zr"), vec![hidden, 2 * hidden]),
        (format!("{prefix}.gru.u_h"), vec![hidden, hidden]),
        (format!("{prefix}.gru.bias"), vec![1, 3 * hidden]),
    ]
}

fn linear_shapes(prefix: &str, input: usize, output: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        (format!("{prefix}.out.w"), vec![input, output]),
        (format!("{prefix}.out.b"), vec![1, output]),
    ]
}

/// Every parameter name with the shape implied by `config`.
pub fn expected_shapes(config: &ModelConfig, vocab: usize) -> Vec<(String, Vec<usize>)> {
    let c = config;
    let mut out = gru_shapes(ENCODER, c.mfcc.n_coeffs, c.encoder_hidden);
    out.extend(linear_shapes(ENCODER, c.encoder_hidden, c.latent_dim));
    out.extend(gru_shapes(DECODER, c.latent_dim, c.decoder_hidden));
    out.extend(linear_shapes(DECODER, c.decoder_hidden, c.n_bands));
    out.push((format!("{CONTROL}.embedding"), vec![vocab, 2 * c.n_gamma]));
    out.extend(gru_shapes(CONTROL, 2 * c.n_gamma, c.control_hidden));
    out.extend(linear_shapes(CONTROL, c.control_hidden, c.latent_dim));
    out
}

/// Seeded initialization of the audio encoder and decoder.
pub fn init_audio_params<T: Scalar>(config: &ModelConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    init_gru(&mut p, "encoder.gru", config.mfcc.n_coeffs, config.encoder_hidden, &mut rng);
    init_linear(&mut p, "encoder.out", config.encoder_hidden, config.latent_dim, &mut rng);
    init_gru(&mut p, "decoder.gru", config.latent_dim, config.decoder_hidden, &mut rng);
    init_linear(&mut p, "decoder.out", config.decoder_hidden, config.n_bands, &mut rng);
    p
}

/// Seeded initialization of the control encoder. Embedding rows start at
/// one, so every label initially passes its controls through unchanged.
pub fn init_control_params<T: Scalar>(config: &ModelConfig, vocab: usize, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    p.insert("control.embedding", Tensor::full(&[vocab, 2 * config.n_gamma], T::one()));
    init_gru(&mut p, "control.gru", 2 * config.n_gamma, config.control_hidden, &mut rng);
    init_linear(&mut p, "control.out", config.control_hidden, config.latent_dim, &mut rng);
    p
}

/// Normalized MFCC rows to latents in (-1, 1).
pub fn encoder<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, features: Var, batch: usize) -> Result<Var> {
    let gru = GruParams::from_bound(bound, "encoder.gru")?;
    let h = gru_sequence(tape, features, batch, &gru)?;
    let y = linear(tape, bound, "encoder.out", h)?;
    Ok(tape.tanh(y))
}

/// Latents to non-negative per-frame filter magnitudes.
pub fn decoder<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, config: &ModelConfig, z: Var, batch: usize) -> Result<Var> {
    let gru = GruParams::from_bound(bound, "decoder.gru")?;
    let h = gru_sequence(tape, z, batch, &gru)?;
    let y = linear(tape, bound, "decoder.out", h)?;
    let m = tape.softplus(y);
    Ok(tape.scale(m, T::lit(config.magnitude_scale)))
}

/// Control rows `[γ_norm | u]` and one label id per row to latents.
pub fn control_encoder<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    controls: Var,
    row_labels: &[usize],
    batch: usize,
) -> Result<Var> {
    let table = bound.var("control.embedding")?;
    let e = tape.gather(table, row_labels)?;
    let v = tape.mul(controls, e)?;
    let gru = GruParams::from_bound(bound, "control.gru")?;
    let h = gru_sequence(tape, v, batch, &gru)?;
    let y = linear(tape, bound, "control.out", h)?;
    Ok(tape.tanh(y))
}

/// Interleaves `B` row-major `[K, d]` sequences into time-major `[K·B, d]`.
pub fn interleave<T: Scalar>(items: &[&[T]], dims: usize) -> Vec<T> {
    let batch = items.len();
    let frames = items.first().map_or(0, |s| s.len() / dims);
    let mut out = Vec::with_capacity(batch * frames * dims);
    for t in 0..frames {
        for item in items {
            out.extend_from_slice(&item[t * dims..(t + 1) * dims]);
        }
    }
    out
}

/// Inverse of [`interleave`].
pub fn deinterleave<T: Scalar>(data: &[T], batch: usize, dims: usize) -> Vec<Vec<T>> {
    let frames = data.len() / (batch * dims).max(1);
    let mut out = vec![Vec::with_capacity(frames * dims); batch];
    for t in 0..frames {
        for (b, item) in out.iter_mut().enumerate() {
            let row = t * batch + b;
            item.extend_from_slice(&data[row * dims..(row + 1) * dims]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_round_trip() {
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0, 7.0, 8.0];
        let tm = interleave(&[&a, &b], 2);
        assert_eq!(tm, vec![1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        assert_eq!(deinterleave(&tm, 2, 2), vec![a.to_vec(), b.to_vec()]);
    }

    #[test]
    fn initial_shapes_match_expectation() {
        let c = ModelConfig::desk();
        let mut p: ParamStore<f32> = init_audio_params(&c, 0);
        p.extend(init_control_params(&c, 3, 1));
        let expected = expected_shapes(&c, 3);
        assert_eq!(p.len(), expected.len());
        for (name, shape) in expected {
            assert_eq!(p.get(&name).unwrap().shape(), shape.as_slice(), "{name}");
        }
    }
}
