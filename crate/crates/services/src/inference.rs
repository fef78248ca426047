//! Session classifier over HTTP. The model is loaded once before the listener opens
//! and never changes afterwards.

use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskwatch_core::nn::load_model;
use riskwatch_core::session::assess_session;
use riskwatch_core::{Bundle, SessionVerdict};

use crate::wire::{ErrorBody, Health, PredictRequest};
use crate::ServiceError;

#[derive(Clone)]
pub struct InferenceState {
    bundle: Arc<Bundle>,
    fingerprint: Arc<str>,
}

impl InferenceState {
    pub fn new(bundle: Bundle) -> Self {
        let fingerprint = bundle.fingerprint().into();
        InferenceState {
            bundle: Arc::new(bundle),
            fingerprint,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let bundle = load_model(path)?;
        log::info!(
            "loaded model {} ({} parameters)",
            path.display(),
            bundle.params.num_parameters()
        );
        Ok(Self::new(bundle))
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// The request handler's computation without HTTP.
    pub fn predict(&self, req: &PredictRequest) -> riskwatch_core::Result<SessionVerdict> {
        let rows: Vec<_> = req.samples.iter().map(|r| r.to_array()).collect();
        assess_session(
            &self.bundle,
            &self.fingerprint,
            &rows,
            req.aggregation.unwrap_or_default(),
        )
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/predict", post(predict))
            .route("/health", get(health))
            .with_state(self)
    }
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

async fn predict(
    State(st): State<InferenceState>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(e.status(), e.body_text()),
    };
    let n = req.samples.len();
    let worker = st.clone();
    match tokio::task::spawn_blocking(move || worker.predict(&req)).await {
        Ok(Ok(verdict)) => {
            log::debug!("{n} samples -> {}", verdict.label);
            Json(verdict).into_response()
        }
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(st): State<InferenceState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_loaded: true,
        model_fingerprint: st.fingerprint.to_string(),
    })
}
