//! Synthetic footstep corpus for desk-scale training and evaluation.
//!
//! Each clip is a walking sequence of steps. A step is a stance-phase
//! contact envelope (heel peak, roll, ball peak) with exponentially decaying
//! impact bursts at the heel and ball strikes, applied to surface-colored
//! noise (granular surfaces add a grain train), over a faint noise floor.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{write_wav, AudioClip};
use crate::dsp::{cascade_in_place, Biquad};
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};

pub const SURFACES: [&str; 4] = ["dirt", "grass", "gravel", "wood"];

const NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
struct Texture {
    band: [f64; 2],
    resonances: &'static [(f64, f64, f64)],
    decay: f64,
    grain_rate: f64,
}

fn texture(surface: &str) -> Result<Texture> {
    Ok(match surface {
        "dirt" => Texture {
            band: [100.0, 1800.0],
            resonances: &[(250.0, 2.0, 6.0)],
            decay: 0.045,
            grain_rate: 0.0,
        },
        "grass" => Texture {
            band: [1500.0, 7500.0],
            resonances: &[(4200.0, 1.5, 4.0)],
            decay: 0.06,
            grain_rate: 150.0,
        },
        "gravel" => Texture {
            band: [400.0, 5000.0],
            resonances: &[(1500.0, 3.0, 6.0)],
            decay: 0.05,
            grain_rate: 300.0,
        },
        "wood" => Texture {
            band: [200.0, 3000.0],
            resonances: &[(420.0, 10.0, 14.0), (1250.0, 8.0, 10.0)],
            decay: 0.025,
            grain_rate: 0.0,
        },
        other => return Err(Error::Vocabulary(other.to_string())),
    })
}

/// Attack-then-exponential-decay envelope added into `env` at `onset`.
fn add_burst(env: &mut [f64], sample_rate: f64, onset: f64, amp: f64, attack: f64, decay: f64) {
    let start = (onset * sample_rate).round() as i64;
    let attack_n = (attack * sample_rate).max(1.0);
    let span = ((attack + 8.0 * decay) * sample_rate) as i64;
    for i in 0..span {
        let n = start + i;
        if n < 0 || n as usize >= env.len() {
            continue;
        }
        let t = i as f64;
        let v = if t < attack_n {
            t / attack_n
        } else {
            (-(t - attack_n) / (decay * sample_rate)).exp()
        };
        env[n as usize] += amp * v;
    }
}

/// Stance-phase contact envelope of height `amp` over `[onset, onset + span]`:
/// smooth rise to a heel peak at `heel_at`, a dip to `valley` and a ball peak
/// of `ball` at `ball_at` (fractions of the span), then release to zero.
fn add_stance(env: &mut [f64], sample_rate: f64, onset: f64, span: f64, amp: f64, shape: [f64; 4]) {
    let [heel_at, ball_at, valley, ball] = shape;
    let mid = 0.5 * (heel_at + ball_at);
    let knots = [(0.0, 0.0), (heel_at, 1.0), (mid, valley), (ball_at, ball), (1.0, 0.0)];
    let start = (onset * sample_rate).round() as i64;
    let n = (span * sample_rate).round().max(1.0) as i64;
    for i in 0..n {
        let at = start + i;
        if at < 0 || at as usize >= env.len() {
            continue;
        }
        let x = i as f64 / n as f64;
        let seg = knots.windows(2).find(|w| x < w[1].0).unwrap_or(&knots[3..5]);
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        let w = 0.5 - 0.5 * (std::f64::consts::PI * (x - x0) / (x1 - x0)).cos();
        env[at as usize] += amp * (y0 + (y1 - y0) * w);
    }
}

/// One footstep clip on `surface`, peak-normalized to 0.8.
pub fn footstep_clip(surface: &str, duration: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Result<AudioClip<f64>> {
    let tex = texture(surface)?;
    let fs = sample_rate as f64;
    let len = (duration * fs).round() as usize;
    let period = rng.gen_range(0.45..0.6);
    let first = rng.gen_range(0.0..period);
    let mut env = vec![0.0; len];
    let mut onset = first - period;
    while onset < duration {
        let heel = rng.gen_range(0.7..1.0);
        let stance = period * rng.gen_range(0.55..0.95);
        let heel_at = rng.gen_range(0.15..0.3);
        let ball_at = rng.gen_range(0.6..0.8);
        let ball_level = rng.gen_range(0.6..1.0);
        let shape = [heel_at, ball_at, rng.gen_range(0.3..0.7), ball_level];
        let contact = heel * rng.gen_range(0.3..0.7);
        let decay = tex.decay * rng.gen_range(0.7..1.5);
        add_stance(&mut env, fs, onset, stance, contact, shape);
        add_burst(&mut env, fs, onset + heel_at * stance, heel, 0.004, decay);
        add_burst(&mut env, fs, onset + ball_at * stance, heel * ball_level, 0.004, decay);
        onset += period * rng.gen_range(0.97..1.03);
    }
    let mut excitation: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if tex.grain_rate > 0.0 {
        let mut grains = vec![0.2; len];
        let count = (tex.grain_rate * duration).round() as usize;
        for _ in 0..count {
            let at = rng.gen_range(0.0..duration);
            let amp = rng.gen_range(0.3..1.0);
            add_burst(&mut grains, fs, at, amp, 0.0005, 0.003);
        }
        excitation.iter_mut().zip(&grains).for_each(|(x, g)| *x *= g);
    }
    let mut filters = Vec::new();
    filters.extend(Biquad::butterworth_highpass4(fs, tex.band[0])?);
    filters.extend(Biquad::butterworth_lowpass4(fs, tex.band[1])?);
    for &(f, q, g) in tex.resonances {
        filters.push(Biquad::peaking(fs, f, q, g)?);
    }
    cascade_in_place(&filters, &mut excitation);
    let mut out: Vec<f64> = excitation
        .iter()
        .zip(&env)
        .map(|(x, e)| x * e + NOISE_FLOOR * rng.gen_range(-1.0..1.0))
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.8 / peak);
    }
    AudioClip::new(out, sample_rate)
}

/// `clips_per_surface` clips for each surface, in surface-major order, each
/// from its own ChaCha stream of `seed`.
pub fn generate(clips_per_surface: usize, duration: f64, sample_rate: u32, seed: u64) -> Result<Vec<(AudioClip<f64>, String)>> {
    let mut out = Vec::with_capacity(SURFACES.len() * clips_per_surface);
    for (s, surface) in SURFACES.iter().enumerate() {
        for i in 0..clips_per_surface {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((s * clips_per_surface + i) as u64);
            out.push((footstep_clip(surface, duration, sample_rate, &mut rng)?, surface.to_string()));
        }
    }
    Ok(out)
}

/// Writes a generated corpus as float WAVs plus `manifest.jsonl` (paths
/// relative to `dir`). Returns the manifest path.
pub fn write_corpus(dir: impl AsRef<Path>, clips_per_surface: usize, duration: f64, seed: u64) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (i, (clip, label)) in generate(clips_per_surface, duration, 16_000, seed)?.into_iter().enumerate() {
        let name = format!("{label}_{i:04}.wav");
        write_wav(dir.join(&name), &clip.cast::<f32>())?;
        entries.push(ManifestEntry {
            path: PathBuf::from(name),
            label,
        });
    }
    let path = dir.join("manifest.jsonl");
    DatasetManifest::new("footsteps", entries).save(&path)?;
    Ok(path)
}

/// White-noise bursts with a linear `attack` and exponential `decay`
/// starting at each onset (seconds).
pub fn burst_train(onsets: &[f64], attack: f64, decay: f64, duration: f64, sample_rate: u32, seed: u64) -> Result<AudioClip<f64>> {
    let fs = sample_rate as f64;
    let len = (duration * fs).round() as usize;
    let mut env = vec![0.0; len];
    for &t in onsets {
        add_burst(&mut env, fs, t, 1.0, attack, decay);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = env.iter().map(|e| e * rng.gen_range(-1.0..1.0)).collect();
    AudioClip::new(out, sample_rate)
}
