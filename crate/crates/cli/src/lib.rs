//! Command-line pipeline and HTTP service for the footfall engine.

pub mod commands;
pub mod config;
pub mod engine;
pub mod service;

pub use commands::{run, Cli};
pub use config::EngineConfig;
pub use engine::{EngineKind, Engines, GrfRequest, GrfSpec, RequestError, SynthRequest};
