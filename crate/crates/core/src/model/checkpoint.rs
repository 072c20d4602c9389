use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::autodiff::{read_tensors, write_tensors, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Smallest standard deviation kept in normalization statistics.
pub const MIN_STD: f64 = 1e-6;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dims: usize) -> Self {
        Self {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    /// Statistics over row-major `[N, dims]` data; deviations below
    /// [`MIN_STD`] are raised to it.
    pub fn from_rows<T: Scalar>(data: &[T], dims: usize) -> Result<Self> {
        if dims == 0 || data.is_empty() || data.len() % dims != 0 {
            return Err(Error::Dataset("cannot compute statistics of empty data".into()));
        }
        let n = (data.len() / dims) as f64;
        let mut mean = vec![0.0; dims];
        for row in data.chunks_exact(dims) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for row in data.chunks_exact(dims) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v.as_f64() - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(MIN_STD)).collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Checkpoint("normalization statistics need finite positive deviations".into()));
        }
        Ok(())
    }

    /// Normalizes row-major `[N, dims]` data in place.
    pub fn apply<T: Scalar>(&self, data: &mut [T]) {
        let dims = self.dims();
        for row in data.chunks_exact_mut(dims) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = T::lit((v.as_f64() - m) / s);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    version: u32,
    config: ModelConfig,
    vocabulary: Vec<String>,
    mfcc_stats: NormStats,
    gamma_stats: Option<NormStats>,
    training: serde_json::Value,
}

/// Weights of all three networks plus everything needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub config: ModelConfig,
    pub vocabulary: Vec<String>,
    pub mfcc_stats: NormStats,
    /// Present once the control encoder has been trained.
    pub gamma_stats: Option<NormStats>,
    pub params: ParamStore<T>,
    /// Run provenance: optimizer settings, seeds, config hashes, steps.
    pub training: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn has_audio_model(&self) -> bool {
        self.params.contains_prefix("encoder.") && self.params.contains_prefix("decoder.")
    }

    pub fn has_control_model(&self) -> bool {
        self.params.contains_prefix("control.") && self.gamma_stats.is_some()
    }

    pub fn label_id(&self, name: &str) -> Result<usize> {
        self.vocabulary
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::Vocabulary(format!("{name} (known: {})", self.vocabulary.join(", "))))
    }

    pub fn write_to(&self, out: impl Write) -> Result<()> {
        let meta = CheckpointMeta {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            mfcc_stats: self.mfcc_stats.clone(),
            gamma_stats: self.gamma_stats.clone(),
            training: self.training.clone(),
        };
        write_tensors(out, &self.params, serde_json::to_value(meta)?)
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let (params, meta) = read_tensors(input)?;
        let version = meta.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version:?} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let meta: CheckpointMeta =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("bad checkpoint metadata: {e}")))?;
        let ckpt = Self {
            config: meta.config,
            vocabulary: meta.vocabulary,
            mfcc_stats: meta.mfcc_stats,
            gamma_stats: meta.gamma_stats,
            params,
            training: meta.training,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }

    /// Checks statistics and that weight shapes agree with the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.mfcc_stats.validate()?;
        if self.mfcc_stats.dims() != self.config.mfcc.n_coeffs {
            return Err(Error::Checkpoint("MFCC statistics do not match n_coeffs".into()));
        }
        if let Some(g) = &self.gamma_stats {
            g.validate()?;
            if g.dims() != self.config.n_gamma {
                return Err(Error::Checkpoint("gamma statistics do not match n_gamma".into()));
            }
        }
        for (name, shape) in super::graph::expected_shapes(&self.config, self.vocabulary.len()) {
            if let Some(t) = self.params.get(&name) {
                if t.shape() != shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name} has shape {:?}, config implies {shape:?}",
                        t.shape()
                    )));
                }
            }
        }
        Ok(())
    }
}
