use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use riskwatch_core::sensor::{Generator, Scenario};
use riskwatch_services::{stream, StreamConfig};

async fn counting_gateway() -> (String, Arc<AtomicUsize>) {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/ingest",
            post(|State(h): State<Arc<AtomicUsize>>| async move {
                h.fetch_add(1, Ordering::SeqCst);
                StatusCode::ACCEPTED
            }),
        )
        .with_state(hits.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}"), hits)
}

#[tokio::test]
async fn fixed_rate_stream() {
    let (url, hits) = counting_gateway().await;
    let samples: Vec<_> = Generator::new(Scenario::two_phase().with_duration(60), "x").unwrap().collect();
    let cfg = StreamConfig { gateway_url: url, rate_hz: 20.0, ..StreamConfig::default() };
    let report = stream(&cfg, samples).await.unwrap();
    assert_eq!((report.sent, report.acked, report.failed), (60, 60, 0));
    assert_eq!(hits.load(Ordering::SeqCst), 60);
    assert!(!report.aborted);
    assert!(report.max_drift_ms < 50.0, "{}", report.max_drift_ms);
    // 60 ticks at 20 Hz: the last fires 2.95 s after the first
    assert!(report.elapsed_s >= 2.95 && report.elapsed_s < 3.5, "{}", report.elapsed_s);
}

#[tokio::test]
async fn gateway_down_aborts_with_report() {
    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let samples: Vec<_> = Generator::new(Scenario::two_phase(), "x").unwrap().collect();
    let cfg = StreamConfig { gateway_url: dead, rate_hz: 50.0, ..StreamConfig::default() };
    let report = stream(&cfg, samples).await.unwrap();
    assert!(report.aborted);
    assert_eq!(report.failed, 3);
    assert_eq!(report.acked, 0);
    assert!(report.last_error.is_some());
}

#[tokio::test]
async fn rejects_bad_rate() {
    let cfg = StreamConfig { rate_hz: 0.0, ..StreamConfig::default() };
    assert!(stream(&cfg, Vec::new()).await.is_err());
}
