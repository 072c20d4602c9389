//! The audio encoder, the filtered-noise decoder and the control encoder,
//! with checkpoint handling and batched inference.

mod checkpoint;
mod config;
pub mod graph;

pub use checkpoint::{Checkpoint, NormStats, CHECKPOINT_VERSION, MIN_STD};
pub use config::ModelConfig;

use crate::audio::AudioClip;
use crate::autodiff::{Tape, Tensor};
use crate::dsp::{ControlSignal, MfccExtractor};
use crate::error::{Error, Result};
use crate::farnell::{grf_curve, GrfParams};
use crate::scalar::Scalar;
use crate::synth::{filtered_noise_var, uniform_noise, NoiseSpec};

/// `K × n_z` latent frames, row-major, every entry in (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence<T: Scalar> {
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> LatentSequence<T> {
    pub fn new(values: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::contract(format!("{} latent values for dimension {dim}", values.len())));
        }
        if values.iter().any(|v| !(v.abs() < T::one())) {
            return Err(Error::contract("latent values must lie strictly inside (-1, 1)"));
        }
        Ok(Self { dim, values })
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Index into the checkpoint's label vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SurfaceLabel(pub usize);

/// Label, temporal control γ and control-rate noise u.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTuple<T: Scalar> {
    pub label: SurfaceLabel,
    pub gamma: ControlSignal<T>,
    pub noise: ControlSignal<T>,
}

impl<T: Scalar> ControlTuple<T> {
    pub fn new(label: SurfaceLabel, gamma: ControlSignal<T>, noise: ControlSignal<T>) -> Result<Self> {
        gamma.validate()?;
        noise.validate()?;
        if gamma.frames() != noise.frames() || gamma.control_rate != noise.control_rate || gamma.dims != noise.dims {
            return Err(Error::contract(format!(
                "gamma ({} × {} at {} Hz) and noise ({} × {} at {} Hz) differ",
                gamma.frames(),
                gamma.dims,
                gamma.control_rate,
                noise.frames(),
                noise.dims,
                noise.control_rate
            )));
        }
        if noise.values.iter().any(|v| v.abs() > T::one()) {
            return Err(Error::contract("control noise must lie in [-1, 1]"));
        }
        Ok(Self { label, gamma, noise })
    }
}

/// Control-rate noise u for `frames` frames, uniform in [-1, 1).
pub fn control_noise<T: Scalar>(seed: u64, frames: usize, dims: usize, control_rate: u32) -> ControlSignal<T> {
    ControlSignal {
        control_rate,
        dims,
        values: uniform_noise(seed, frames * dims),
    }
}

/// Read-only inference over a checkpoint; safe to share between threads.
pub struct Model<T: Scalar> {
    checkpoint: Checkpoint<T>,
    mfcc: MfccExtractor<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(checkpoint: Checkpoint<T>) -> Result<Self> {
        checkpoint.validate()?;
        if !checkpoint.has_audio_model() {
            return Err(Error::Stage("checkpoint has no audio encoder/decoder weights".into()));
        }
        let mfcc = MfccExtractor::new(checkpoint.config.mfcc)?;
        Ok(Self { checkpoint, mfcc })
    }

    pub fn checkpoint(&self) -> &Checkpoint<T> {
        &self.checkpoint
    }

    pub fn config(&self) -> &crate::model::ModelConfig {
        &self.checkpoint.config
    }

    pub fn label(&self, name: &str) -> Result<SurfaceLabel> {
        self.checkpoint.label_id(name).map(SurfaceLabel)
    }

    /// Normalized `K × n_coeffs` MFCC rows of a clip at the engine rate.
    pub fn features(&self, clip: &AudioClip<T>) -> Result<Vec<T>> {
        if clip.sample_rate() != self.config().sample_rate {
            return Err(Error::contract(format!(
                "clip at {} Hz, model expects {} Hz",
                clip.sample_rate(),
                self.config().sample_rate
            )));
        }
        let mut f = self.mfcc.compute(clip.samples());
        self.checkpoint.mfcc_stats.apply(&mut f);
        Ok(f)
    }

    pub fn encode_audio(&self, clip: &AudioClip<T>) -> Result<LatentSequence<T>> {
        let features = self.features(clip)?;
        Ok(self.encode_features(&[&features])?.remove(0))
    }

    /// Batched encoder over equal-length normalized feature sequences.
    pub fn encode_features(&self, items: &[&[T]]) -> Result<Vec<LatentSequence<T>>> {
        let dims = self.config().mfcc.n_coeffs;
        let rows = uniform_rows(items, dims)?;
        let mut tape = Tape::new();
        let bound = self.checkpoint.params.bind(&mut tape, |_| false);
        let x = tape.constant(Tensor::matrix(rows * items.len(), dims, graph::interleave(items, dims))?);
        let z = graph::encoder(&mut tape, &bound, x, items.len())?;
        self.split_latents(tape.value(z).data(), items.len())
    }

    pub fn decode(&self, z: &LatentSequence<T>, noise: &NoiseSpec) -> Result<AudioClip<T>> {
        Ok(self.decode_batch(&[z], &[*noise])?.remove(0))
    }

    pub fn decode_batch(&self, zs: &[&LatentSequence<T>], noise: &[NoiseSpec]) -> Result<Vec<AudioClip<T>>> {
        let dim = self.config().latent_dim;
        if zs.iter().any(|z| z.dim != dim) {
            return Err(Error::contract(format!("latent dimension must be {dim}")));
        }
        if noise.len() != zs.len() {
            return Err(Error::contract("one noise seed per latent sequence"));
        }
        let items: Vec<&[T]> = zs.iter().map(|z| z.values.as_slice()).collect();
        let rows = uniform_rows(&items, dim)?;
        let mut tape = Tape::new();
        let bound = self.checkpoint.params.bind(&mut tape, |_| false);
        let z = tape.constant(Tensor::matrix(rows * zs.len(), dim, graph::interleave(&items, dim))?);
        self.render(&mut tape, &bound, z, noise)
    }

    fn render(
        &self,
        tape: &mut Tape<T>,
        bound: &crate::autodiff::Bound,
        z: crate::autodiff::Var,
        noise: &[NoiseSpec],
    ) -> Result<Vec<AudioClip<T>>> {
        let cfg = self.config();
        let mags = graph::decoder(tape, bound, cfg, z, noise.len())?;
        let seeds: Vec<u64> = noise.iter().map(|n| n.seed).collect();
        let audio = filtered_noise_var(tape, mags, &seeds, cfg.hop(), cfg.ir_length)?;
        let out = tape.value(audio);
        (0..noise.len())
            .map(|b| AudioClip::new(out.row(b).to_vec(), cfg.sample_rate))
            .collect()
    }

    fn require_control(&self) -> Result<&NormStats> {
        if !self.checkpoint.has_control_model() {
            return Err(Error::Stage("checkpoint has no trained control encoder".into()));
        }
        Ok(self.checkpoint.gamma_stats.as_ref().expect("checked above"))
    }

    /// Gain taking a GRF curve (arbitrary force units) into this model's
    /// control units: the training-set mean γ̂ over the mean of one period
    /// of the default walking curve.
    pub fn grf_gain(&self) -> Result<f64> {
        let stats = self.require_control()?;
        let curve = grf_curve::<f64>(&GrfParams::default(), GrfParams::default().step_period, self.config().control_rate, 0)?;
        let mean = curve.values.iter().sum::<f64>() / curve.values.len() as f64;
        Ok(stats.mean[0] / mean)
    }

    /// `K × 2n_γ` rows `[normalized γ | u]`.
    pub fn control_rows(&self, tuple: &ControlTuple<T>) -> Result<Vec<T>> {
        let stats = self.require_control()?;
        let cfg = self.config();
        if tuple.gamma.dims != cfg.n_gamma || tuple.gamma.control_rate != cfg.control_rate {
            return Err(Error::contract(format!(
                "controls must have {} dims at {} Hz",
                cfg.n_gamma, cfg.control_rate
            )));
        }
        if tuple.label.0 >= self.checkpoint.vocabulary.len() {
            return Err(Error::Vocabulary(format!(
                "label id {} outside vocabulary of {}",
                tuple.label.0,
                self.checkpoint.vocabulary.len()
            )));
        }
        let mut gamma = tuple.gamma.values.clone();
        stats.apply(&mut gamma);
        let d = cfg.n_gamma;
        let mut rows = Vec::with_capacity(gamma.len() * 2);
        for (g, u) in gamma.chunks_exact(d).zip(tuple.noise.values.chunks_exact(d)) {
            rows.extend_from_slice(g);
            rows.extend_from_slice(u);
        }
        Ok(rows)
    }

    pub fn encode_control(&self, tuple: &ControlTuple<T>) -> Result<LatentSequence<T>> {
        Ok(self.encode_control_batch(std::slice::from_ref(tuple))?.remove(0))
    }

    pub fn encode_control_batch(&self, tuples: &[ControlTuple<T>]) -> Result<Vec<LatentSequence<T>>> {
        let mut tape = Tape::new();
        let bound = self.checkpoint.params.bind(&mut tape, |_| false);
        let z = self.control_graph(&mut tape, &bound, tuples)?;
        self.split_latents(tape.value(z).data(), tuples.len())
    }

    fn control_graph(
        &self,
        tape: &mut Tape<T>,
        bound: &crate::autodiff::Bound,
        tuples: &[ControlTuple<T>],
    ) -> Result<crate::autodiff::Var> {
        let width = 2 * self.config().n_gamma;
        let rows: Vec<Vec<T>> = tuples.iter().map(|t| self.control_rows(t)).collect::<Result<_>>()?;
        let items: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
        let frames = uniform_rows(&items, width)?;
        let labels: Vec<usize> = (0..frames).flat_map(|_| tuples.iter().map(|t| t.label.0)).collect();
        let v = tape.constant(Tensor::matrix(frames * tuples.len(), width, graph::interleave(&items, width))?);
        graph::control_encoder(tape, bound, v, &labels, tuples.len())
    }

    /// Control tuple to audio: decode(encode_control(tuple)).
    pub fn synthesize(&self, tuple: &ControlTuple<T>, noise: &NoiseSpec) -> Result<AudioClip<T>> {
        Ok(self.synthesize_batch(std::slice::from_ref(tuple), &[*noise])?.remove(0))
    }

    /// Batched synthesis; tuples must share a length.
    pub fn synthesize_batch(&self, tuples: &[ControlTuple<T>], noise: &[NoiseSpec]) -> Result<Vec<AudioClip<T>>> {
        if noise.len() != tuples.len() {
            return Err(Error::contract("one noise seed per control tuple"));
        }
        let mut tape = Tape::new();
        let bound = self.checkpoint.params.bind(&mut tape, |_| false);
        let z = self.control_graph(&mut tape, &bound, tuples)?;
        self.render(&mut tape, &bound, z, noise)
    }

    fn split_latents(&self, data: &[T], batch: usize) -> Result<Vec<LatentSequence<T>>> {
        let dim = self.config().latent_dim;
        graph::deinterleave(data, batch, dim)
            .into_iter()
            .map(|v| LatentSequence::new(v, dim))
            .collect()
    }
}

fn uniform_rows<T: Scalar>(items: &[&[T]], dims: usize) -> Result<usize> {
    let Some(first) = items.first() else {
        return Err(Error::contract("empty batch"));
    };
    if first.is_empty() || first.len() % dims != 0 || items.iter().any(|s| s.len() != first.len()) {
        return Err(Error::contract("batch items must be non-empty and equally long"));
    }
    Ok(first.len() / dims)
}
