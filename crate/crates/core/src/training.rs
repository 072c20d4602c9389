//! Dataset assembly into (clip, label, γ̂, u) tuples and the two training
//! stages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{read_wav, resample, AudioClip};
use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tape, Tensor};
use crate::dsp::{control_proxy, AnalysisConfig, ControlSignal, MfccExtractor};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;
use crate::model::graph::{self, init_audio_params, init_control_params};
use crate::model::{control_noise, Checkpoint, Model, ModelConfig, NormStats};
use crate::scalar::Scalar;
use crate::synth::{filtered_noise_var, weighted_spectral_loss_var, SpectralLossWeights};

/// Optimization settings shared by both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Excerpt length in seconds; must cover a whole number of control frames.
    pub excerpt_seconds: f64,
    /// Seeds weight initialization, excerpt sampling and synthesis noise.
    pub seed: u64,
    pub loss_weights: SpectralLossWeights,
    /// Log progress every this many steps (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.eps,
            batch_size: 8,
            steps: 2000,
            excerpt_seconds: 1.0,
            seed: 0,
            loss_weights: SpectralLossWeights::default(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }

    /// Excerpt length in control frames.
    pub fn excerpt_frames(&self, control_rate: u32) -> Result<usize> {
        let frames = self.excerpt_seconds * control_rate as f64;
        if !(frames >= 1.0) || (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "excerpt of {} s is not a whole number of {control_rate} Hz frames",
                self.excerpt_seconds
            )));
        }
        Ok(frames.round() as usize)
    }

    pub fn validate(&self, control_rate: u32) -> Result<()> {
        let positive = [self.learning_rate, self.epsilon, self.excerpt_seconds];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.batch_size == 0 {
            return Err(Error::config("learning rate, epsilon, excerpt and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        let w = self.loss_weights;
        if !(w.magnitude >= 0.0 && w.log_magnitude >= 0.0 && w.magnitude + w.log_magnitude > 0.0) {
            return Err(Error::config("loss weights must be non-negative and not both zero"));
        }
        self.excerpt_frames(control_rate)?;
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// One corpus entry: audio at the engine rate, label id, control proxy γ̂
/// and the fixed control noise u.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem<T: Scalar> {
    pub clip: AudioClip<T>,
    pub label: usize,
    pub gamma_hat: ControlSignal<T>,
    pub u: ControlSignal<T>,
}

impl<T: Scalar> TrainingItem<T> {
    /// Builds an item from a clip already at the analysis rate.
    pub fn from_clip(clip: AudioClip<T>, label: usize, analysis: &AnalysisConfig, u_seed: u64) -> Result<Self> {
        let gamma_hat = control_proxy(&clip, analysis)?;
        let u = control_noise(u_seed, gamma_hat.frames(), gamma_hat.dims, analysis.control_rate);
        Ok(Self {
            clip,
            label,
            gamma_hat,
            u,
        })
    }

    pub fn frames(&self) -> usize {
        self.gamma_hat.frames()
    }
}

/// Seed of item `index`'s control noise.
pub fn item_noise_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Reads, resamples, peak-normalizes and analyzes every manifest entry.
/// Unreadable files are skipped with a warning; an all-skipped corpus fails.
pub fn build_dataset<T: Scalar>(
    manifest: &DatasetManifest,
    analysis: &AnalysisConfig,
    seed: u64,
) -> Result<Vec<TrainingItem<T>>> {
    analysis.validate()?;
    if manifest.is_empty() {
        return Err(Error::Dataset("manifest has no entries".into()));
    }
    let mut items = Vec::with_capacity(manifest.len());
    for (index, entry) in manifest.entries.iter().enumerate() {
        let clip = match read_wav::<T>(&entry.path) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.path.display());
                continue;
            }
        };
        let clip = resample(&clip, analysis.sample_rate)?.peak_normalized();
        let label = manifest.label_id(&entry.label).expect("label from manifest");
        items.push(TrainingItem::from_clip(clip, label, analysis, item_noise_seed(seed, index))?);
    }
    if items.is_empty() {
        return Err(Error::Dataset(format!("none of the {} manifest files could be read", manifest.len())));
    }
    Ok(items)
}

/// Per-step training losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub losses: Vec<f64>,
}

impl LossTrace {
    /// `step,loss` CSV with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(out, "{i},{l}").expect("write to string");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn initial(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    /// Mean of the first `window` losses.
    pub fn head_mean(&self, window: usize) -> Option<f64> {
        mean(&self.losses[..window.min(self.losses.len())])
    }

    /// Mean of the last `window` losses.
    pub fn tail_mean(&self, window: usize) -> Option<f64> {
        mean(&self.losses[self.losses.len().saturating_sub(window)..])
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One excerpt choice: item index and starting control frame.
#[derive(Debug, Clone, Copy)]
struct Excerpt {
    item: usize,
    start: usize,
}

fn draw_batch<T: Scalar>(rng: &mut ChaCha8Rng, items: &[TrainingItem<T>], batch: usize, frames: usize) -> Vec<Excerpt> {
    (0..batch)
        .map(|_| {
            let item = rng.gen_range(0..items.len());
            let spare = items[item].frames().saturating_sub(frames);
            Excerpt {
                item,
                start: rng.gen_range(0..=spare),
            }
        })
        .collect()
}

/// Rows `[start, start + frames)` of a row-major `[K, dims]` sequence,
/// zero-padded past the end.
fn frame_window<T: Scalar>(data: &[T], dims: usize, start: usize, frames: usize) -> Vec<T> {
    let mut out = vec![T::zero(); frames * dims];
    let avail = (data.len() / dims).saturating_sub(start).min(frames);
    out[..avail * dims].copy_from_slice(&data[start * dims..(start + avail) * dims]);
    out
}

fn check_finite(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step,
            message: format!("loss is {loss}"),
        });
    }
    Ok(())
}

fn grads_by_name<T: Scalar>(
    bound: &crate::autodiff::Bound,
    mut grads: crate::autodiff::Gradients<T>,
    trainable: impl Fn(&str) -> bool,
) -> BTreeMap<String, Tensor<T>> {
    bound
        .iter()
        .filter(|(name, _)| trainable(name))
        .filter_map(|(name, v)| grads.take(v).map(|g| (name.to_string(), g)))
        .collect()
}

/// Result of a training stage.
#[derive(Debug, Clone)]
pub struct StageOutput<T: Scalar> {
    pub checkpoint: Checkpoint<T>,
    pub trace: LossTrace,
}

const SAMPLING_STREAM: u64 = 0x5eed_0001;
const CONTROL_INIT_STREAM: u64 = 0x5eed_0002;

/// Stage 1: trains the audio encoder and decoder to reconstruct excerpts
/// under the multiscale spectral loss.
pub fn train_stage1<T: Scalar>(
    items: &[TrainingItem<T>],
    vocabulary: &[String],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<StageOutput<T>> {
    model.validate()?;
    config.validate(model.control_rate)?;
    if items.is_empty() {
        return Err(Error::Dataset("stage 1 needs at least one item".into()));
    }
    let hop = model.hop();
    let frames = config.excerpt_frames(model.control_rate)?;
    let extractor = MfccExtractor::<T>::new(model.mfcc)?;
    let raw: Vec<Vec<T>> = items.iter().map(|it| extractor.compute(it.clip.samples())).collect();
    let dims = model.mfcc.n_coeffs;
    let all: Vec<T> = raw.iter().flatten().copied().collect();
    let mfcc_stats = NormStats::from_rows(&all, dims)?;
    let features: Vec<Vec<T>> = raw
        .into_iter()
        .map(|mut f| {
            mfcc_stats.apply(&mut f);
            f
        })
        .collect();

    let mut params = init_audio_params::<T>(model, config.seed);
    let mut adam = AdamState::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLING_STREAM);
    let mut trace = LossTrace::default();
    let batch = config.batch_size;
    for step in 0..config.steps {
        let picks = draw_batch(&mut rng, items, batch, frames);
        let seeds: Vec<u64> = picks.iter().map(|_| rng.next_u64()).collect();
        let feats: Vec<Vec<T>> = picks
            .iter()
            .map(|p| frame_window(&features[p.item], dims, p.start, frames))
            .collect();
        let mut target = Vec::with_capacity(batch * frames * hop);
        for p in &picks {
            target.extend(items[p.item].clip.excerpt(p.start * hop, frames * hop).into_samples());
        }
        let feat_refs: Vec<&[T]> = feats.iter().map(Vec::as_slice).collect();

        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, |_| true);
        let x = tape.constant(Tensor::matrix(frames * batch, dims, graph::interleave(&feat_refs, dims))?);
        let z = graph::encoder(&mut tape, &bound, x, batch)?;
        let mags = graph::decoder(&mut tape, &bound, model, z, batch)?;
        let audio = filtered_noise_var(&mut tape, mags, &seeds, hop, model.ir_length)?;
        let y = tape.constant(Tensor::matrix(batch, frames * hop, target)?);
        let loss = weighted_spectral_loss_var(&mut tape, audio, y, config.loss_weights)?;
        let value = tape.value(loss).item().as_f64();
        check_finite(step, value)?;
        trace.losses.push(value);
        let grads = grads_by_name(&bound, tape.backward(loss)?, |_| true);
        adam.step(&mut params, &grads)?;
        if config.log_every > 0 && step % config.log_every == 0 {
            log::info!("stage 1 step {step}: loss {value:.5}");
        }
    }

    let checkpoint = Checkpoint {
        config: model.clone(),
        vocabulary: vocabulary.to_vec(),
        mfcc_stats,
        gamma_stats: None,
        params,
        training: serde_json::json!({
            "stage1": {
                "config": config,
                "config_hash": config_hash(&(model, config)),
                "items": items.len(),
                "final_loss": trace.losses.last(),
            }
        }),
    };
    Ok(StageOutput { checkpoint, trace })
}

/// Stage 2: trains the control encoder to reproduce the frozen audio
/// encoder's latents from (label, γ̂, u). Stage 1 weights are not touched.
pub fn train_stage2<T: Scalar>(
    items: &[TrainingItem<T>],
    vocabulary: &[String],
    stage1: &Checkpoint<T>,
    config: &TrainConfig,
) -> Result<StageOutput<T>> {
    if vocabulary != stage1.vocabulary.as_slice() {
        return Err(Error::config(format!(
            "dataset labels [{}] differ from stage 1 labels [{}]",
            vocabulary.join(", "),
            stage1.vocabulary.join(", ")
        )));
    }
    if items.is_empty() {
        return Err(Error::Dataset("stage 2 needs at least one item".into()));
    }
    let model_cfg = stage1.config.clone();
    config.validate(model_cfg.control_rate)?;
    let frames = config.excerpt_frames(model_cfg.control_rate)?;
    let n_gamma = model_cfg.n_gamma;
    if items.iter().any(|it| it.gamma_hat.dims != n_gamma || it.label >= vocabulary.len()) {
        return Err(Error::config("items do not match the model's control dimension or vocabulary"));
    }

    let encoder = Model::new(stage1.clone())?;
    let mut targets = Vec::with_capacity(items.len());
    for it in items {
        targets.push(encoder.encode_audio(&it.clip)?.values);
    }
    let all_gamma: Vec<T> = items.iter().flat_map(|it| it.gamma_hat.values.iter().copied()).collect();
    let gamma_stats = NormStats::from_rows(&all_gamma, n_gamma)?;

    let mut control = init_control_params::<T>(&model_cfg, vocabulary.len(), config.seed ^ CONTROL_INIT_STREAM);
    let mut adam = AdamState::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLING_STREAM);
    let mut trace = LossTrace::default();
    let batch = config.batch_size;
    let width = 2 * n_gamma;
    let latent = model_cfg.latent_dim;
    for step in 0..config.steps {
        let picks = draw_batch(&mut rng, items, batch, frames);
        let mut rows = Vec::with_capacity(batch);
        let mut zs = Vec::with_capacity(batch);
        for p in &picks {
            let it = &items[p.item];
            let mut g = frame_window(&it.gamma_hat.values, n_gamma, p.start, frames);
            gamma_stats.apply(&mut g);
            let u = frame_window(&it.u.values, n_gamma, p.start, frames);
            let mut v = Vec::with_capacity(frames * width);
            for (gk, uk) in g.chunks_exact(n_gamma).zip(u.chunks_exact(n_gamma)) {
                v.extend_from_slice(gk);
                v.extend_from_slice(uk);
            }
            rows.push(v);
            zs.push(frame_window(&targets[p.item], latent, p.start, frames));
        }
        let row_refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
        let z_refs: Vec<&[T]> = zs.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..frames)
            .flat_map(|_| picks.iter().map(|p| items[p.item].label))
            .collect();

        let mut tape = Tape::new();
        let bound = control.bind(&mut tape, |_| true);
        let v = tape.constant(Tensor::matrix(frames * batch, width, graph::interleave(&row_refs, width))?);
        let z_hat = graph::control_encoder(&mut tape, &bound, v, &labels, batch)?;
        let z = tape.constant(Tensor::matrix(frames * batch, latent, graph::interleave(&z_refs, latent))?);
        let loss = tape.mse(z_hat, z)?;
        let value = tape.value(loss).item().as_f64();
        check_finite(step, value)?;
        trace.losses.push(value);
        let grads = grads_by_name(&bound, tape.backward(loss)?, |_| true);
        adam.step(&mut control, &grads)?;
        if config.log_every > 0 && step % config.log_every == 0 {
            log::info!("stage 2 step {step}: latent mse {value:.6}");
        }
    }

    let mut params: ParamStore<T> = stage1.params.subset("encoder.");
    params.extend(stage1.params.subset("decoder."));
    params.extend(control);
    let mut training = stage1.training.clone();
    if let Some(map) = training.as_object_mut() {
        map.insert(
            "stage2".into(),
            serde_json::json!({
                "config": config,
                "config_hash": config_hash(&(&model_cfg, config)),
                "items": items.len(),
                "final_loss": trace.losses.last(),
            }),
        );
    }
    let checkpoint = Checkpoint {
        config: model_cfg,
        vocabulary: vocabulary.to_vec(),
        mfcc_stats: stage1.mfcc_stats.clone(),
        gamma_stats: Some(gamma_stats),
        params,
        training,
    };
    Ok(StageOutput { checkpoint, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_must_be_whole_frames() {
        let mut c = TrainConfig::default();
        assert_eq!(c.excerpt_frames(250).unwrap(), 250);
        c.excerpt_seconds = 0.1234;
        assert!(c.validate(250).is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c = TrainConfig::from_toml("steps = 10\nbatch_size = 2\n[loss_weights]\nmagnitude = 0.5\nlog_magnitude = 1.0\n").unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.loss_weights.magnitude, 0.5);
        assert!(TrainConfig::from_toml("stepz = 3").is_err());
    }

    #[test]
    fn frame_window_pads() {
        let d = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(frame_window(&d, 2, 2, 2), vec![5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn trace_csv_and_means() {
        let t = LossTrace {
            losses: vec![4.0, 2.0, 1.0, 1.0],
        };
        assert_eq!(t.to_csv(), "step,loss\n0,4\n1,2\n2,1\n3,1\n");
        assert_eq!(t.head_mean(2), Some(3.0));
        assert_eq!(t.tail_mean(2), Some(1.0));
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = config_hash(&TrainConfig::default());
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&TrainConfig::default()));
    }
}
