//! Classical procedural-audio baseline: a piecewise-quadratic ground
//! reaction force (GRF) generator driving per-surface texture synthesis.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{cascade_in_place, Biquad, ControlSignal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::synth::uniform_noise;

/// Shape of the repeating GRF curve.
///
/// A period has three phases (heel, roll, ball). The heel phase rises from
/// `levels[0]` to the heel peak `levels[1]`, arriving with zero slope; the
/// roll phase is the quadratic through the heel peak, the valley
/// `levels[2]` at its midpoint and the ball peak `levels[3]`; the ball phase
/// leaves the ball peak with zero slope and falls to `levels[4]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrfParams {
    pub step_period: f64,
    pub segment_fractions: [f64; 3],
    pub levels: [f64; 5],
    /// Relative per-period timing randomness, in [0, 0.2].
    pub jitter: f64,
}

impl Default for GrfParams {
    fn default() -> Self {
        Self {
            step_period: 0.5,
            segment_fractions: [0.3, 0.4, 0.3],
            levels: [0.0, 1.0, 0.6, 0.9, 0.0],
            jitter: 0.0,
        }
    }
}

impl GrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_period > 0.0 && self.step_period.is_finite()) {
            return Err(Error::config("step_period must be positive"));
        }
        let f = &self.segment_fractions;
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("segment_fractions must be positive and sum to 1"));
        }
        if self.levels.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("levels must be finite and non-negative"));
        }
        if self.levels[0] != 0.0 || self.levels[4] != 0.0 {
            return Err(Error::config("start and end levels must be 0"));
        }
        if !(0.0..=0.2).contains(&self.jitter) {
            return Err(Error::config("jitter must lie in [0, 0.2]"));
        }
        Ok(())
    }

    /// Value at phase `s ∈ [0, 1]` of one period.
    pub fn shape(&self, s: f64) -> f64 {
        let [f1, f2, _] = self.segment_fractions;
        let [l0, heel, valley, ball, end] = self.levels;
        let s = s.clamp(0.0, 1.0);
        if s < f1 {
            let x = s / f1;
            l0 + (heel - l0) * (1.0 - (1.0 - x) * (1.0 - x))
        } else if s < f1 + f2 {
            // The interpolating quadratic overshoots for some level choices;
            // clamping keeps the knots and the curve bounds.
            let x = (s - f1) / f2;
            let top = self.levels.iter().cloned().fold(0.0, f64::max);
            quadratic_through(heel, valley, ball, x).clamp(0.0, top)
        } else {
            let x = (s - f1 - f2) / (1.0 - f1 - f2);
            ball + (end - ball) * x * x
        }
    }
}

/// Quadratic with values `a`, `m`, `b` at 0, 1/2, 1.
fn quadratic_through(a: f64, m: f64, b: f64, x: f64) -> f64 {
    let c2 = 2.0 * (a + b) - 4.0 * m;
    let c1 = b - a - c2;
    a + c1 * x + c2 * x * x
}

/// Frames for a duration: `ceil(duration · rate)`, tolerant of float noise.
pub fn frames_for_duration(duration: f64, control_rate: u32) -> usize {
    (duration * control_rate as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Samples the repeating GRF curve at `control_rate` for `duration` seconds.
/// With jitter, each period's length is scaled by `1 + jitter·U(-1, 1)`
/// drawn from the seeded stream.
pub fn grf_curve<T: Scalar>(params: &GrfParams, duration: f64, control_rate: u32, seed: u64) -> Result<ControlSignal<T>> {
    params.validate()?;
    if !(duration > 0.0 && duration.is_finite()) || control_rate == 0 {
        return Err(Error::config("duration and control rate must be positive"));
    }
    let frames = frames_for_duration(duration, control_rate);
    let mut values = Vec::with_capacity(frames);
    if params.jitter == 0.0 {
        for k in 0..frames {
            let t = k as f64 / control_rate as f64;
            let phase = (t % params.step_period) / params.step_period;
            values.push(T::lit(params.shape(phase)));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0.0;
        let mut period = params.step_period * (1.0 + params.jitter * rng.gen_range(-1.0..1.0));
        for k in 0..frames {
            let t = k as f64 / control_rate as f64;
            while t >= start + period {
                start += period;
                period = params.step_period * (1.0 + params.jitter * rng.gen_range(-1.0..1.0));
            }
            values.push(T::lit(params.shape((t - start) / period)));
        }
    }
    ControlSignal::new(values, 1, control_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq: f64,
    pub q: f64,
    pub gain_db: f64,
}

/// Half-wave threshold followed by power shaping: `max(x - threshold, 0)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crackle {
    pub threshold: f64,
    pub exponent: f64,
}

/// Texture module of one surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRecipe {
    pub name: String,
    /// Low and high edge of the fourth-order Butterworth band, Hz.
    pub band_edges: [f64; 2],
    pub resonances: Vec<Resonance>,
    pub crackle: Option<Crackle>,
}

impl SurfaceRecipe {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let [lo, hi] = self.band_edges;
        if !(lo > 0.0 && lo < hi && hi < nyquist) {
            return Err(Error::config(format!(
                "recipe {}: band edges {lo}..{hi} must satisfy 0 < lo < hi < {nyquist}",
                self.name
            )));
        }
        if let Some(c) = self.crackle {
            if !(c.threshold >= 0.0 && c.exponent > 0.0) {
                return Err(Error::config(format!("recipe {}: invalid crackle", self.name)));
            }
        }
        self.filters(sample_rate).map(|_| ())
    }

    pub fn filters(&self, sample_rate: u32) -> Result<Vec<Biquad>> {
        let fs = sample_rate as f64;
        let mut out = Vec::new();
        out.extend(Biquad::butterworth_highpass4(fs, self.band_edges[0])?);
        out.extend(Biquad::butterworth_lowpass4(fs, self.band_edges[1])?);
        for r in &self.resonances {
            out.push(Biquad::peaking(fs, r.freq, r.q, r.gain_db)?);
        }
        Ok(out)
    }
}

const DEFAULT_RECIPES: &str = include_str!("../data/recipes.json");

pub fn default_recipes() -> Vec<SurfaceRecipe> {
    serde_json::from_str(DEFAULT_RECIPES).expect("bundled recipes parse")
}

pub fn load_recipes(path: impl AsRef<Path>) -> Result<Vec<SurfaceRecipe>> {
    let recipes: Vec<SurfaceRecipe> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(recipes)
}

/// Linear interpolation of a control track to audio rate; frame `k` is
/// centered on the middle of its `hop`-sample bin.
pub fn upsample_control(values: &[f64], hop: usize) -> Vec<f64> {
    let k = values.len();
    let mut out = Vec::with_capacity(k * hop);
    for n in 0..k * hop {
        let pos = ((n as f64 + 0.5) / hop as f64 - 0.5).clamp(0.0, (k - 1) as f64);
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let next = values[(i + 1).min(k - 1)];
        out.push(values[i] + (next - values[i]) * frac);
    }
    out
}

/// Noise through the recipe filter (normalized back to the RMS of the raw
/// noise), amplitude-modulated by γ, then the optional crackle shaping.
/// Output length `K · sample_rate / control_rate`.
pub fn pa_synthesize<T: Scalar>(
    recipe: &SurfaceRecipe,
    gamma: &ControlSignal<T>,
    seed: u64,
    sample_rate: u32,
) -> Result<AudioClip<T>> {
    gamma.validate()?;
    recipe.validate(sample_rate)?;
    if gamma.dims != 1 || sample_rate % gamma.control_rate != 0 {
        return Err(Error::contract("gamma must be one-dimensional on an integral hop"));
    }
    if gamma.values.iter().any(|v| *v < T::zero()) {
        return Err(Error::contract("gamma must be non-negative"));
    }
    let hop = (sample_rate / gamma.control_rate) as usize;
    let len = gamma.frames() * hop;
    if len == 0 {
        return AudioClip::new(Vec::new(), sample_rate);
    }
    let raw: Vec<f64> = uniform_noise(seed, len);
    let raw_rms = rms(&raw);
    let mut x = raw;
    cascade_in_place(&recipe.filters(sample_rate)?, &mut x);
    let gain = if rms(&x) > 0.0 { raw_rms / rms(&x) } else { 0.0 };
    let env = upsample_control(&gamma.values.iter().map(|v| v.as_f64()).collect::<Vec<_>>(), hop);
    let out = x
        .iter()
        .zip(&env)
        .map(|(&v, &g)| {
            let y = v * gain * g;
            let y = match recipe.crackle {
                Some(c) => (y - c.threshold).max(0.0).powf(c.exponent),
                None => y,
            };
            T::lit(y)
        })
        .collect();
    AudioClip::new(out, sample_rate)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_recipes_are_valid() {
        let r = default_recipes();
        let names: Vec<_> = r.iter().map(|x| x.name.as_str()).collect();
        assert_eq!(names, ["dirt", "grass", "gravel", "wood"]);
        for recipe in &r {
            recipe.validate(16000).unwrap();
        }
    }

    #[test]
    fn shape_hits_levels_at_phase_boundaries() {
        let p = GrfParams::default();
        assert_eq!(p.shape(0.0), 0.0);
        assert!((p.shape(0.3) - 1.0).abs() < 1e-12);
        assert!((p.shape(0.5) - 0.6).abs() < 1e-12);
        assert!((p.shape(0.7) - 0.9).abs() < 1e-12);
        assert!(p.shape(1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = GrfParams::default();
        p.segment_fractions = [0.3, 0.3, 0.3];
        assert!(p.validate().is_err());
        let mut p = GrfParams::default();
        p.levels[0] = 0.1;
        assert!(p.validate().is_err());
        let mut p = GrfParams::default();
        p.jitter = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn upsampling_holds_constant_tracks() {
        let up = upsample_control(&[0.5, 0.5, 0.5], 4);
        assert_eq!(up.len(), 12);
        assert!(up.iter().all(|&v| v == 0.5));
    }
}
