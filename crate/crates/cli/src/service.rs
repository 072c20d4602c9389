//! HTTP API for the companion UI.
//!
//! | route | body | response |
//! |---|---|---|
//! | `GET /api/health` | | `{status, version, config_hash, checkpoint, grf_gain}` |
//! | `GET /api/surfaces` | | `{surfaces: [..], engines: [..]}` |
//! | `POST /api/grf` | [`GrfRequest`] | control-signal JSON |
//! | `POST /api/synthesize` | [`SynthRequest`] | float32 mono WAV |
//! | `POST /api/analyze` | WAV bytes | control-signal JSON |
//!
//! Errors are `{error, field?}` JSON: 400 for malformed requests, 422 for an
//! unknown surface, 503 for the learned engine without a checkpoint.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use footfall_core::audio::{read_wav_bytes, resample, wav_bytes};
use footfall_core::dsp::control_proxy;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::engine::{Engines, GrfRequest, RequestError, SynthRequest};

/// Upload limit for `/api/analyze`; a 30 s float32 clip at 48 kHz is ~5.8 MB.
pub const MAX_BODY_BYTES: usize = 16 << 20;

/// Names the follow-up request that returns the result's envelope.
pub const ENVELOPE_HEADER: &str = "x-envelope";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn bad_request(field: Option<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field,
            message: message.into(),
        }
    }
}

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        let message = e.to_string();
        match e {
            RequestError::Invalid { field, message } => Self::bad_request(Some(field), message),
            RequestError::UnknownSurface(_) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                field: Some("surface".into()),
                message,
            },
            RequestError::Unavailable(_) => Self {
                status: StatusCode::SERVICE_UNAVAILABLE,
                field: None,
                message,
            },
            RequestError::Failed(footfall_core::Error::Contract(m)) => Self::bad_request(None, m),
            RequestError::Failed(_) => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                field: None,
                message,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match &self.field {
            Some(f) => json!({ "error": self.message, "field": f }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

/// Deserializes a JSON body, naming the offending field on failure.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        ApiError::bad_request(field, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| ApiError::bad_request(None, e.to_string()))?;
    Ok(value)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        field: None,
        message: e.to_string(),
    })?
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'static str,
    version: &'static str,
    config_hash: &'a str,
    checkpoint: bool,
    grf_gain: f64,
}

async fn health(State(engines): State<Arc<Engines>>) -> Response {
    Json(Health {
        status: "ok",
        version: env!("CARGO_PKG_VERSION"),
        config_hash: &engines.config_hash,
        checkpoint: engines.model().is_some(),
        grf_gain: engines.grf_gain(),
    })
    .into_response()
}

async fn surfaces(State(engines): State<Arc<Engines>>) -> Response {
    let mut available = vec!["pa"];
    if engines.model().is_some() {
        available.insert(0, "learned");
    }
    Json(json!({ "surfaces": engines.surfaces(), "engines": available })).into_response()
}

async fn grf(State(engines): State<Arc<Engines>>, body: Bytes) -> Result<Response, ApiError> {
    let req: GrfRequest = parse(&body)?;
    Ok(Json(engines.grf(&req)?).into_response())
}

async fn synthesize(State(engines): State<Arc<Engines>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SynthRequest = parse(&body)?;
    let hash = engines.config_hash.clone();
    let (wav, frames) = blocking(move || {
        let out = engines.render(&req)?;
        let wav = wav_bytes(&out.audio).map_err(RequestError::from)?;
        Ok((wav, out.gamma.frames()))
    })
    .await?;
    let mut response = wav.into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("audio/wav"));
    headers.insert(ENVELOPE_HEADER, HeaderValue::from_static("/api/analyze"));
    headers.insert("x-control-frames", HeaderValue::from(frames));
    if let Ok(v) = HeaderValue::from_str(&hash) {
        headers.insert("x-config-hash", v);
    }
    Ok(response)
}

async fn analyze(State(engines): State<Arc<Engines>>, body: Bytes) -> Result<Response, ApiError> {
    let signal = blocking(move || {
        let clip = read_wav_bytes::<f32>(&body).map_err(|e| ApiError::bad_request(None, e.to_string()))?;
        let analysis = match engines.model() {
            Some(m) => m.config().analysis,
            None => engines.config.model.analysis,
        };
        let max_secs = engines.config.max_duration;
        if clip.duration_secs() > max_secs + 1e-9 {
            return Err(ApiError::bad_request(None, format!("clip longer than {max_secs} s")));
        }
        let clip = resample(&clip, analysis.sample_rate).map_err(RequestError::from)?;
        Ok(control_proxy(&clip, &analysis).map_err(RequestError::from)?)
    })
    .await?;
    Ok(Json(signal).into_response())
}

async fn no_ui() -> &'static str {
    "footfall engine: see /api/health\n"
}

/// The API routes plus static UI files from `static_dir` at `/`.
pub fn router(engines: Arc<Engines>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/surfaces", get(surfaces))
        .route("/api/grf", post(grf))
        .route("/api/synthesize", post(synthesize))
        .route("/api/analyze", post(analyze))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(engines);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(no_ui)),
    }
}
