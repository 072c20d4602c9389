//! Engine configuration, read from a TOML file named by `--config` or the
//! `PROVE_CONFIG` environment variable.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use footfall_core::farnell::{default_recipes, load_recipes, SurfaceRecipe};
use footfall_core::metrics::{Kernel, EVAL_RMS};
use footfall_core::model::ModelConfig;
use footfall_core::training::{config_hash, TrainConfig};
use serde::{Deserialize, Serialize};

/// Longest synthesis request, in seconds.
pub const MAX_DURATION_SECS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Network and analysis settings for training; synthesis uses the
    /// checkpoint's own copy.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub max_duration: f64,
    /// Surface recipes for the procedural baseline; bundled ones if unset.
    pub recipes: Option<PathBuf>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub kernel: Kernel,
    /// Every clip is scaled to this RMS before embedding.
    pub loudness_rms: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::default(),
            loudness_rms: EVAL_RMS,
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            max_duration: MAX_DURATION_SECS,
            recipes: None,
            eval: EvalConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The file at `path`, or defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(self.model.control_rate)?;
        if !(self.max_duration > 0.0 && self.max_duration <= MAX_DURATION_SECS) {
            bail!("max_duration must lie in (0, {MAX_DURATION_SECS}]");
        }
        if !(self.eval.loudness_rms > 0.0 && self.eval.loudness_rms.is_finite()) {
            bail!("eval.loudness_rms must be positive");
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Longest explicit γ array, in control frames.
    pub fn max_frames(&self, control_rate: u32) -> usize {
        (self.max_duration * control_rate as f64).round() as usize
    }

    pub fn recipes(&self) -> Result<Vec<SurfaceRecipe>> {
        let recipes = match &self.recipes {
            Some(p) => load_recipes(p).with_context(|| format!("loading recipes {}", p.display()))?,
            None => default_recipes(),
        };
        for r in &recipes {
            r.validate(self.model.sample_rate)?;
        }
        Ok(recipes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(EngineConfig::from_toml("").unwrap(), EngineConfig::default());
    }

    #[test]
    fn partial_sections_override() {
        let cfg = EngineConfig::from_toml("max_duration = 10\n[train]\nsteps = 3\n[model]\nlatent_dim = 32\n").unwrap();
        assert_eq!(cfg.train.steps, 3);
        assert_eq!(cfg.model.latent_dim, 32);
        assert_eq!(cfg.model.encoder_hidden, 512);
        assert_eq!(cfg.max_frames(250), 2500);
        assert_ne!(cfg.hash(), EngineConfig::default().hash());
    }

    #[test]
    fn desk_preset_in_toml() {
        let text = "[model]\nencoder_hidden = 64\ndecoder_hidden = 64\ncontrol_hidden = 64\n\
                    [eval]\nkernel = { type = \"rbf\" }\n";
        let cfg = EngineConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model, ModelConfig::desk());
        assert_eq!(cfg.eval.kernel, Kernel::Rbf { bandwidth: None });
    }

    #[test]
    fn rates_must_share_a_hop() {
        let text = "[model]\ncontrol_rate = 300\n";
        assert!(EngineConfig::from_toml(text).is_err());
        assert!(EngineConfig::from_toml("max_duration = 60").is_err());
        assert!(EngineConfig::from_toml("unknown = 1").is_err());
    }
}
