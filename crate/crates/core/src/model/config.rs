use serde::{Deserialize, Serialize};

use crate::dsp::{AnalysisConfig, MfccConfig};
use crate::error::{Error, Result};

/// Rates, network dimensions and analysis settings shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub control_rate: u32,
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub control_hidden: usize,
    pub n_bands: usize,
    pub ir_length: usize,
    pub n_gamma: usize,
    /// Factor applied after the decoder's softplus.
    pub magnitude_scale: f64,
    pub mfcc: MfccConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            control_rate: 250,
            latent_dim: 512,
            encoder_hidden: 512,
            decoder_hidden: 512,
            control_hidden: 512,
            n_bands: 65,
            ir_length: 129,
            n_gamma: 1,
            magnitude_scale: 2.0,
            mfcc: MfccConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Full-width latent with narrower recurrent layers, sized for
    /// single-core training runs.
    pub fn desk() -> Self {
        Self {
            encoder_hidden: 64,
            decoder_hidden: 64,
            control_hidden: 64,
            ..Self::default()
        }
    }

    pub fn hop(&self) -> usize {
        (self.sample_rate / self.control_rate) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.control_rate == 0 || self.sample_rate % self.control_rate != 0 {
            return Err(Error::config(format!(
                "sample rate {} must be a positive multiple of control rate {}",
                self.sample_rate, self.control_rate
            )));
        }
        self.analysis.validate()?;
        if self.analysis.sample_rate != self.sample_rate || self.analysis.control_rate != self.control_rate {
            return Err(Error::config("analysis rates differ from model rates"));
        }
        if self.mfcc.sample_rate != self.sample_rate || self.mfcc.hop != self.hop() {
            return Err(Error::config("MFCC frames must sit on the control grid"));
        }
        let dims = [
            self.latent_dim,
            self.encoder_hidden,
            self.decoder_hidden,
            self.control_hidden,
            self.n_gamma,
            self.mfcc.n_coeffs,
        ];
        if dims.contains(&0) {
            return Err(Error::config("network dimensions must be positive"));
        }
        if self.n_bands < 2 || self.ir_length % 2 == 0 || self.ir_length > 2 * (self.n_bands - 1) + 1 {
            return Err(Error::config(format!(
                "ir_length {} must be odd and at most {} for {} bands",
                self.ir_length,
                2 * (self.n_bands - 1) + 1,
                self.n_bands
            )));
        }
        if !(self.magnitude_scale > 0.0 && self.magnitude_scale.is_finite()) {
            return Err(Error::config("magnitude_scale must be positive"));
        }
        Ok(())
    }
}
