//! Request types shared by the command line and the HTTP service, and the
//! synthesis front end that serves both.

use std::fmt;

use footfall_core::audio::AudioClip;
use footfall_core::dsp::ControlSignal;
use footfall_core::farnell::{frames_for_duration, grf_curve, pa_synthesize, GrfParams, SurfaceRecipe};
use footfall_core::model::{control_noise, Checkpoint, ControlTuple, Model};
use footfall_core::synth::NoiseSpec;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    #[default]
    Learned,
    /// The procedural baseline.
    Pa,
}

/// GRF generator parameters as accepted over the wire. Unset fields take
/// the generator defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrfSpec {
    #[serde(alias = "period")]
    pub step_period: Option<f64>,
    pub segment_fractions: Option<[f64; 3]>,
    pub levels: Option<[f64; 5]>,
    pub jitter: Option<f64>,
}

impl GrfSpec {
    pub fn params(&self) -> GrfParams {
        let d = GrfParams::default();
        GrfParams {
            step_period: self.step_period.unwrap_or(d.step_period),
            segment_fractions: self.segment_fractions.unwrap_or(d.segment_fractions),
            levels: self.levels.unwrap_or(d.levels),
            jitter: self.jitter.unwrap_or(d.jitter),
        }
    }
}

/// `POST /api/grf` body: generator parameters plus length and jitter seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrfRequest {
    #[serde(alias = "period")]
    pub step_period: Option<f64>,
    pub segment_fractions: Option<[f64; 3]>,
    pub levels: Option<[f64; 5]>,
    pub jitter: Option<f64>,
    /// Seconds; 1 if unset.
    pub duration: Option<f64>,
    pub seed: u64,
}

impl GrfRequest {
    pub fn spec(&self) -> GrfSpec {
        GrfSpec {
            step_period: self.step_period,
            segment_fractions: self.segment_fractions,
            levels: self.levels,
            jitter: self.jitter,
        }
    }
}

/// A synthesis request. The control curve is either `gamma` (one value per
/// control frame, used as given) or the GRF generator with `grf` (default
/// walking curve when both are absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRequest {
    pub surface: String,
    #[serde(default)]
    pub grf: Option<GrfSpec>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Seconds; required to match `gamma` when both are given, 1 if neither.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub grf_seed: u64,
    #[serde(default)]
    pub u_seed: u64,
    #[serde(default)]
    pub synth_seed: u64,
    #[serde(default)]
    pub engine: EngineKind,
}

impl SynthRequest {
    pub fn new(surface: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            grf: None,
            gamma: None,
            duration: None,
            grf_seed: 0,
            u_seed: 0,
            synth_seed: 0,
            engine: EngineKind::Learned,
        }
    }
}

#[derive(Debug)]
pub enum RequestError {
    /// A malformed or out-of-range field.
    Invalid { field: String, message: String },
    UnknownSurface(String),
    /// The learned engine was requested without a loaded checkpoint.
    Unavailable(String),
    Failed(footfall_core::Error),
}

impl RequestError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        RequestError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for RequestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestError::Invalid { field, message } => write!(f, "{field}: {message}"),
            RequestError::UnknownSurface(s) => write!(f, "unknown surface {s:?}"),
            RequestError::Unavailable(m) => write!(f, "{m}"),
            RequestError::Failed(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RequestError {}

impl From<footfall_core::Error> for RequestError {
    fn from(e: footfall_core::Error) -> Self {
        RequestError::Failed(e)
    }
}

/// Rendered audio with the control curve that drove it.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub audio: AudioClip<f32>,
    pub gamma: ControlSignal<f32>,
}

/// Both synthesis engines behind one read-only handle.
pub struct Engines {
    pub config: EngineConfig,
    pub config_hash: String,
    pub recipes: Vec<SurfaceRecipe>,
    model: Option<Model<f32>>,
    grf_gain: f64,
}

impl Engines {
    pub fn new(config: EngineConfig, checkpoint: Option<Checkpoint<f32>>) -> anyhow::Result<Self> {
        config.validate()?;
        let recipes = config.recipes()?;
        let (model, grf_gain) = match checkpoint {
            Some(c) => {
                let model = Model::new(c)?;
                let gain = model.grf_gain()?;
                (Some(model), gain)
            }
            None => (None, 1.0),
        };
        Ok(Self {
            config_hash: config.hash(),
            config,
            recipes,
            model,
            grf_gain,
        })
    }

    pub fn model(&self) -> Option<&Model<f32>> {
        self.model.as_ref()
    }

    pub fn sample_rate(&self) -> u32 {
        self.model.as_ref().map_or(self.config.model.sample_rate, |m| m.config().sample_rate)
    }

    pub fn control_rate(&self) -> u32 {
        self.model.as_ref().map_or(self.config.model.control_rate, |m| m.config().control_rate)
    }

    /// Labels the learned model knows, or the recipe names without one.
    pub fn surfaces(&self) -> Vec<String> {
        match &self.model {
            Some(m) => m.checkpoint().vocabulary.clone(),
            None => self.recipes.iter().map(|r| r.name.clone()).collect(),
        }
    }

    /// The GRF-to-control gain applied to generated curves on the learned
    /// engine (1 without a model).
    pub fn grf_gain(&self) -> f64 {
        self.grf_gain
    }

    pub fn grf(&self, req: &GrfRequest) -> Result<ControlSignal<f64>, RequestError> {
        self.curve(&req.spec(), req.duration, req.seed)
    }

    fn curve<T: footfall_core::Scalar>(
        &self,
        spec: &GrfSpec,
        duration: Option<f64>,
        seed: u64,
    ) -> Result<ControlSignal<T>, RequestError> {
        let params = spec.params();
        params.validate().map_err(|e| RequestError::invalid("grf", e.to_string()))?;
        let duration = self.duration(duration.unwrap_or(1.0))?;
        Ok(grf_curve(&params, duration, self.control_rate(), seed)?)
    }

    fn duration(&self, d: f64) -> Result<f64, RequestError> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(RequestError::invalid("duration", "must be a positive number of seconds"));
        }
        if d > self.config.max_duration {
            return Err(RequestError::invalid(
                "duration",
                format!("{d} s exceeds the {} s limit", self.config.max_duration),
            ));
        }
        Ok(d)
    }

    /// The control curve of a request and whether it came from the GRF
    /// generator.
    fn control_curve(&self, req: &SynthRequest) -> Result<(ControlSignal<f32>, bool), RequestError> {
        let rate = self.control_rate();
        let Some(gamma) = &req.gamma else {
            let spec = req.grf.clone().unwrap_or_default();
            return Ok((self.curve(&spec, req.duration, req.grf_seed)?, true));
        };
        if req.grf.is_some() {
            return Err(RequestError::invalid("gamma", "give either gamma or grf, not both"));
        }
        if gamma.is_empty() {
            return Err(RequestError::invalid("gamma", "must hold at least one frame"));
        }
        let max = self.config.max_frames(rate);
        if gamma.len() > max {
            return Err(RequestError::invalid(
                "gamma",
                format!("{} frames exceed the {max}-frame limit", gamma.len()),
            ));
        }
        if let Some(i) = gamma.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(RequestError::invalid(
                &format!("gamma[{i}]"),
                format!("{} is not a finite non-negative value", gamma[i]),
            ));
        }
        if let Some(d) = req.duration {
            if frames_for_duration(d, rate) != gamma.len() {
                return Err(RequestError::invalid(
                    "duration",
                    format!("{d} s does not match {} gamma frames at {rate} Hz", gamma.len()),
                ));
            }
        }
        let values = gamma.iter().map(|&v| v as f32).collect();
        Ok((ControlSignal::new(values, 1, rate)?, false))
    }

    pub fn render(&self, req: &SynthRequest) -> Result<Rendered, RequestError> {
        let (gamma, generated) = self.control_curve(req)?;
        match req.engine {
            EngineKind::Pa => {
                let recipe = self
                    .recipes
                    .iter()
                    .find(|r| r.name == req.surface)
                    .ok_or_else(|| RequestError::UnknownSurface(req.surface.clone()))?;
                let audio = pa_synthesize(recipe, &gamma, req.synth_seed, self.sample_rate())?;
                Ok(Rendered { audio, gamma })
            }
            EngineKind::Learned => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| RequestError::Unavailable("no checkpoint loaded".into()))?;
                let label = model
                    .label(&req.surface)
                    .map_err(|_| RequestError::UnknownSurface(req.surface.clone()))?;
                let gamma = if generated {
                    gamma.scaled(self.grf_gain as f32)
                } else {
                    gamma
                };
                let u = control_noise(req.u_seed, gamma.frames(), gamma.dims, gamma.control_rate);
                let tuple = ControlTuple::new(label, gamma.clone(), u)?;
                let audio = model.synthesize(&tuple, &NoiseSpec::new(req.synth_seed))?;
                Ok(Rendered { audio, gamma })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engines() -> Engines {
        Engines::new(EngineConfig::default(), None).unwrap()
    }

    #[test]
    fn period_alias_is_accepted() {
        let req: GrfRequest = serde_json::from_str(r#"{"period": 0.25, "duration": 2}"#).unwrap();
        assert_eq!(req.spec().params().step_period, 0.25);
        assert_eq!(engines().grf(&req).unwrap().frames(), 500);
    }

    #[test]
    fn explicit_gamma_is_validated() {
        let e = engines();
        let mut req = SynthRequest::new("wood");
        req.engine = EngineKind::Pa;
        req.gamma = Some(vec![0.1, -0.2]);
        assert!(matches!(e.render(&req), Err(RequestError::Invalid { field, .. }) if field == "gamma[1]"));
        req.gamma = Some(vec![0.1; 7501]);
        assert!(matches!(e.render(&req), Err(RequestError::Invalid { .. })));
        req.gamma = Some(vec![0.1; 7500]);
        assert_eq!(e.render(&req).unwrap().audio.len(), 7500 * 64);
        req.duration = Some(1.0);
        assert!(matches!(e.render(&req), Err(RequestError::Invalid { field, .. }) if field == "duration"));
    }

    #[test]
    fn learned_engine_needs_a_checkpoint() {
        let req = SynthRequest::new("wood");
        assert!(matches!(engines().render(&req), Err(RequestError::Unavailable(_))));
    }

    #[test]
    fn unknown_recipe_is_reported() {
        let mut req = SynthRequest::new("lava");
        req.engine = EngineKind::Pa;
        assert!(matches!(engines().render(&req), Err(RequestError::UnknownSurface(_))));
    }
}
