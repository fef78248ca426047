//! Session buffer in front of the inference engine.
//!
//! Samples accumulate while the session is `Filling`. The sample that brings the
//! buffer to `threshold` moves it to `Forwarding` and spawns the single dispatch for
//! that session; its outcome moves it to `Complete`. Samples arriving while a
//! session is forwarding or complete go to a pre-buffer that seeds the next session
//! (or are dropped in single-session mode).

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskwatch_core::pipeline::WINDOW;
use riskwatch_core::{SensorSample, SessionVerdict};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::wire::{ErrorBody, PredictRequest, Reading};
use crate::ServiceError;

#[derive(Clone, Debug)]
pub struct GatewayConfig {
    pub threshold: usize,
    pub inference_url: String,
    pub single_session: bool,
    /// Dispatch attempts per session, counting the first.
    pub retry_attempts: u32,
    pub retry_delay: Duration,
    pub request_timeout: Duration,
    pub history_limit: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            threshold: 180,
            inference_url: "http://localhost:5000".into(),
            single_session: false,
            retry_attempts: 3,
            retry_delay: Duration::from_secs(1),
            request_timeout: Duration::from_secs(30),
            history_limit: 16,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.threshold < WINDOW {
            return Err(ServiceError::Config(format!(
                "threshold {} is below the window size {WINDOW}",
                self.threshold
            )));
        }
        if self.retry_attempts == 0 {
            return Err(ServiceError::Config("retry_attempts must be >= 1".into()));
        }
        if self.history_limit == 0 {
            return Err(ServiceError::Config("history_limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Filling,
    Forwarding,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub session_id: String,
    pub state: SessionState,
    pub buffered: usize,
    pub threshold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SessionVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Dispatch attempts made for this session so far.
    pub attempts: u32,
    /// Threshold sample to verdict (or final failure), in milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    pub pre_buffered: usize,
    pub dropped: u64,
    pub single_session: bool,
    pub history_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub state: SessionState,
    pub buffered: usize,
    pub threshold: usize,
    pub pre_buffered: usize,
    /// False when the sample was dropped (single-session mode after the threshold).
    pub accepted: bool,
}

/// A finished session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SessionVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SensorSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetResponse {
    pub session_id: String,
    pub previous_session_id: String,
}

struct Session {
    id: String,
    samples: Vec<SensorSample>,
    state: SessionState,
    verdict: Option<SessionVerdict>,
    error: Option<String>,
    attempts: u32,
    latency_ms: Option<f64>,
    threshold_at: Option<Instant>,
    settled: Option<watch::Receiver<bool>>,
}

impl Session {
    fn new(id: String) -> Self {
        Session {
            id,
            samples: Vec::new(),
            state: SessionState::Filling,
            verdict: None,
            error: None,
            attempts: 0,
            latency_ms: None,
            threshold_at: None,
            settled: None,
        }
    }

    fn record(&self) -> SessionRecord {
        SessionRecord {
            session_id: self.id.clone(),
            verdict: self.verdict.clone(),
            error: self.error.clone(),
            attempts: self.attempts,
            latency_ms: self.latency_ms,
            samples: self.samples.clone(),
        }
    }
}

struct Inner {
    session: Session,
    pre_buffer: Vec<SensorSample>,
    history: VecDeque<SessionRecord>,
    dropped: u64,
    sessions_started: u64,
}

enum DispatchError {
    Retryable(String),
    Fatal(String),
}

pub struct Gateway {
    cfg: GatewayConfig,
    inner: Mutex<Inner>,
    client: reqwest::Client,
    boot: u64,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Arc<Gateway>, ServiceError> {
        cfg.validate()?;
        let client = reqwest::Client::builder()
            .timeout(cfg.request_timeout)
            .build()?;
        let boot = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        let gw = Gateway {
            cfg,
            inner: Mutex::new(Inner {
                session: Session::new(String::new()),
                pre_buffer: Vec::new(),
                history: VecDeque::new(),
                dropped: 0,
                sessions_started: 0,
            }),
            client,
            boot,
        };
        {
            let mut g = gw.lock();
            g.session = Session::new(gw.next_id(&mut g));
        }
        Ok(Arc::new(gw))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn next_id(&self, g: &mut Inner) -> String {
        g.sessions_started += 1;
        format!("{:x}-{:04}", self.boot, g.sessions_started)
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new()
            .route("/ingest", post(ingest))
            .route("/status", get(status))
            .route("/reset", post(reset))
            .route("/history", get(history))
            .route("/sessions/{id}", get(session))
            .with_state(self)
    }

    pub fn ingest(self: &Arc<Self>, sample: SensorSample) -> Ack {
        let mut g = self.lock();
        let accepted = self.accept(&mut g, sample);
        Ack {
            session_id: g.session.id.clone(),
            state: g.session.state,
            buffered: g.session.samples.len(),
            threshold: self.cfg.threshold,
            pre_buffered: g.pre_buffer.len(),
            accepted,
        }
    }

    fn accept(self: &Arc<Self>, g: &mut Inner, sample: SensorSample) -> bool {
        match g.session.state {
            SessionState::Filling => {
                g.session.samples.push(sample);
                if g.session.samples.len() == self.cfg.threshold {
                    self.start_dispatch(g);
                }
                true
            }
            _ if self.cfg.single_session => {
                g.dropped += 1;
                false
            }
            SessionState::Forwarding => {
                g.pre_buffer.push(sample);
                true
            }
            SessionState::Complete => {
                // continuous operation: the finished session stays visible until
                // new telemetry arrives, then the pre-buffer seeds the next one
                let pending = std::mem::take(&mut g.pre_buffer);
                g.session = Session::new(self.next_id(g));
                for s in pending {
                    self.accept(g, s);
                }
                self.accept(g, sample)
            }
        }
    }

    fn start_dispatch(self: &Arc<Self>, g: &mut Inner) {
        let (tx, rx) = watch::channel(false);
        let s = &mut g.session;
        s.state = SessionState::Forwarding;
        s.threshold_at = Some(Instant::now());
        s.settled = Some(rx);
        let req = PredictRequest {
            samples: s.samples.iter().map(Reading::from).collect(),
            aggregation: None,
        };
        log::info!("session {} reached {} samples, forwarding", s.id, s.samples.len());
        let gw = Arc::clone(self);
        let id = s.id.clone();
        tokio::spawn(async move {
            let outcome = gw.dispatch(&id, &req).await;
            gw.finish(&id, outcome);
            let _ = tx.send(true);
        });
    }

    async fn dispatch(&self, id: &str, req: &PredictRequest) -> Result<SessionVerdict, String> {
        let mut last = String::new();
        for attempt in 1..=self.cfg.retry_attempts {
            {
                let mut g = self.lock();
                if g.session.id == id {
                    g.session.attempts = attempt;
                }
            }
            match self.post(req).await {
                Ok(v) => return Ok(v),
                Err(DispatchError::Fatal(e)) => return Err(e),
                Err(DispatchError::Retryable(e)) => {
                    log::warn!("session {id}: dispatch attempt {attempt} failed: {e}");
                    last = e;
                }
            }
            if attempt < self.cfg.retry_attempts {
                tokio::time::sleep(self.cfg.retry_delay).await;
            }
        }
        Err(format!(
            "inference engine unavailable after {} attempts: {last}",
            self.cfg.retry_attempts
        ))
    }

    async fn post(&self, req: &PredictRequest) -> Result<SessionVerdict, DispatchError> {
        let url = format!("{}/predict", self.cfg.inference_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(&url)
            .json(req)
            .send()
            .await
            .map_err(|e| DispatchError::Retryable(e.to_string()))?;
        let code = resp.status();
        if code.is_success() {
            return resp
                .json::<SessionVerdict>()
                .await
                .map_err(|e| DispatchError::Fatal(format!("bad verdict body: {e}")));
        }
        let body = resp.text().await.unwrap_or_default();
        let msg = format!("inference engine returned {code}: {body}");
        if code.is_server_error() {
            Err(DispatchError::Retryable(msg))
        } else {
            Err(DispatchError::Fatal(msg))
        }
    }

    fn finish(&self, id: &str, outcome: Result<SessionVerdict, String>) {
        let mut g = self.lock();
        if g.session.id != id {
            return;
        }
        let s = &mut g.session;
        s.state = SessionState::Complete;
        s.latency_ms = s.threshold_at.map(|t| t.elapsed().as_secs_f64() * 1e3);
        match outcome {
            Ok(v) => {
                log::info!("session {id}: {} ({:.3})", v.label, v.confidence);
                s.verdict = Some(v);
            }
            Err(e) => {
                log::error!("session {id}: {e}");
                s.error = Some(e);
            }
        }
        let record = s.record();
        g.history.push_back(record);
        while g.history.len() > self.cfg.history_limit {
            g.history.pop_front();
        }
    }

    pub fn status(&self) -> Status {
        let g = self.lock();
        let s = &g.session;
        Status {
            session_id: s.id.clone(),
            state: s.state,
            buffered: s.samples.len(),
            threshold: self.cfg.threshold,
            verdict: s.verdict.clone(),
            error: s.error.clone(),
            attempts: s.attempts,
            latency_ms: s.latency_ms,
            pre_buffered: g.pre_buffer.len(),
            dropped: g.dropped,
            single_session: self.cfg.single_session,
            history_len: g.history.len(),
        }
    }

    /// Starts a fresh, empty session. An in-flight dispatch is allowed to settle
    /// first so its verdict lands in the history.
    pub async fn reset(&self) -> ResetResponse {
        loop {
            let (id, mut settled) = {
                let mut g = self.lock();
                if g.session.state != SessionState::Forwarding {
                    let previous_session_id = g.session.id.clone();
                    g.pre_buffer.clear();
                    g.dropped = 0;
                    g.session = Session::new(self.next_id(&mut g));
                    return ResetResponse {
                        session_id: g.session.id.clone(),
                        previous_session_id,
                    };
                }
                let rx = g.session.settled.clone().expect("forwarding session has a settle signal");
                (g.session.id.clone(), rx)
            };
            if settled.wait_for(|done| *done).await.is_err() {
                // the dispatch task vanished without reporting
                self.finish(&id, Err("dispatch task aborted".into()));
            }
        }
    }

    /// Finished sessions, oldest first, without their samples.
    pub fn history(&self) -> Vec<SessionRecord> {
        self.lock()
            .history
            .iter()
            .map(|r| SessionRecord {
                samples: Vec::new(),
                ..r.clone()
            })
            .collect()
    }

    /// The current or a remembered session, including its samples.
    pub fn session(&self, id: &str) -> Option<SessionRecord> {
        let g = self.lock();
        if g.session.id == id {
            return Some(g.session.record());
        }
        g.history.iter().find(|r| r.session_id == id).cloned()
    }
}

fn bad_request(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: msg })).into_response()
}

async fn ingest(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    let sample: SensorSample = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return bad_request(format!("malformed sample: {e}")),
    };
    if sample.is_corrupt() {
        return bad_request("sample contains non-finite values".into());
    }
    (StatusCode::ACCEPTED, Json(gw.ingest(sample))).into_response()
}

async fn status(State(gw): State<Arc<Gateway>>) -> Json<Status> {
    Json(gw.status())
}

async fn reset(State(gw): State<Arc<Gateway>>) -> Json<ResetResponse> {
    Json(gw.reset().await)
}

async fn history(State(gw): State<Arc<Gateway>>) -> Json<Vec<SessionRecord>> {
    Json(gw.history())
}

async fn session(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> Response {
    match gw.session(&id) {
        Some(r) => Json(r).into_response(),
        None => (
            StatusCode::NOT_FOUND,
            Json(ErrorBody {
                error: format!("unknown session {id}"),
            }),
        )
            .into_response(),
    }
}
