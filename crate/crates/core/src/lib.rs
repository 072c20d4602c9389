//! Controllable neural procedural audio for footsteps.
//!
//! A filtered-noise autoencoder learns surface texture from audio; a control
//! encoder maps (surface label, GRF-like envelope, noise) into its latent
//! space. Around it sit the envelope analysis, the procedural baseline, a
//! small reverse-mode autodiff and the evaluation metrics.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f32` (training and inference) or `f64` (reference computations).

pub mod audio;
pub mod autodiff;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod farnell;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type AudioClip32 = audio::AudioClip<f32>;
pub type AudioClip64 = audio::AudioClip<f64>;
pub type ControlSignal32 = dsp::ControlSignal<f32>;
pub type ControlSignal64 = dsp::ControlSignal<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Checkpoint32 = model::Checkpoint<f32>;
pub type Checkpoint64 = model::Checkpoint<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type TrainingItem32 = training::TrainingItem<f32>;
