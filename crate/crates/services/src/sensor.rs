//! Streams samples to the gateway on a fixed-rate clock: tick `n` is scheduled at
//! `start + n / rate`, so a slow request delays one send without shifting the rest.

use std::time::Duration;

use riskwatch_core::SensorSample;
use serde::{Deserialize, Serialize};
use tokio::time::{sleep_until, Instant};

use crate::ServiceError;

#[derive(Clone, Debug)]
pub struct StreamConfig {
    pub gateway_url: String,
    pub rate_hz: f64,
    /// Abort after this many failed sends in a row.
    pub max_consecutive_failures: u32,
    pub request_timeout: Duration,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            gateway_url: "http://localhost:8080".into(),
            rate_hz: 1.0,
            max_consecutive_failures: 3,
            request_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub sent: u64,
    pub acked: u64,
    pub failed: u64,
    pub aborted: bool,
    /// Largest lateness of a tick relative to its ideal time.
    pub max_drift_ms: f64,
    pub elapsed_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

pub async fn stream(
    cfg: &StreamConfig,
    samples: impl IntoIterator<Item = SensorSample>,
) -> Result<StreamReport, ServiceError> {
    if !(cfg.rate_hz > 0.0 && cfg.rate_hz.is_finite()) {
        return Err(ServiceError::Config(format!("rate {} Hz must be positive", cfg.rate_hz)));
    }
    let client = reqwest::Client::builder()
        .timeout(cfg.request_timeout)
        .build()?;
    let url = format!("{}/ingest", cfg.gateway_url.trim_end_matches('/'));
    let period = Duration::from_secs_f64(1.0 / cfg.rate_hz);
    let mut report = StreamReport::default();
    let mut consecutive = 0;
    let start = Instant::now();
    for (n, sample) in samples.into_iter().enumerate() {
        let tick = start + period.mul_f64(n as f64);
        sleep_until(tick).await;
        let drift = Instant::now().saturating_duration_since(tick);
        report.max_drift_ms = report.max_drift_ms.max(drift.as_secs_f64() * 1e3);
        report.sent += 1;
        let outcome = match client.post(&url).json(&sample).send().await {
            Ok(r) if r.status().is_success() => Ok(()),
            Ok(r) => Err(format!("gateway returned {}", r.status())),
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok(()) => {
                report.acked += 1;
                consecutive = 0;
            }
            Err(e) => {
                log::warn!("sample {n}: {e}");
                report.failed += 1;
                report.last_error = Some(e);
                consecutive += 1;
                if consecutive >= cfg.max_consecutive_failures {
                    report.aborted = true;
                    break;
                }
            }
        }
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    Ok(report)
}
