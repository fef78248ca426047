use std::time::Instant;

use riskwatch_core::nn::{init_model, save_model, ModelConfig};
use riskwatch_core::{Bundle, RiskLabel, SessionVerdict};
use riskwatch_services::wire::Health;
use riskwatch_services::{InferenceState, PredictRequest, Reading};

fn bundle(cfg: ModelConfig) -> Bundle {
    Bundle::new(cfg.clone(), init_model(&cfg, 3))
}

fn small() -> ModelConfig {
    ModelConfig {
        conv_filters: 8,
        lstm_units: 8,
        ..ModelConfig::default()
    }
}

fn readings(n: usize) -> Vec<Reading> {
    (0..n)
        .map(|i| {
            let x = i as f64;
            Reading {
                heart_rate_bpm: 70.0 + (x * 0.1).sin() * 10.0,
                gsr_us: 2.0 + x * 0.01,
                temperature_c: 22.0,
                light_lux: 5000.0 + (x * 0.3).cos() * 100.0,
                sound_db: 40.0 + (x % 7.0),
            }
        })
        .collect()
}

async fn spawn(state: InferenceState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, state.router()).await.unwrap() });
    format!("http://{addr}")
}

async fn predict(client: &reqwest::Client, url: &str, req: &PredictRequest) -> reqwest::Response {
    client.post(format!("{url}/predict")).json(req).send().await.unwrap()
}

#[tokio::test]
async fn verdict_shape_and_determinism() {
    let state = InferenceState::new(bundle(small()));
    let fp = state.fingerprint().to_string();
    let url = spawn(state).await;
    let client = reqwest::Client::new();

    let req = PredictRequest { samples: readings(30), aggregation: None };
    let v: SessionVerdict = predict(&client, &url, &req).await.json().await.unwrap();
    assert_eq!(v.window_count, 1);
    assert_eq!(v.per_class_fraction[&v.label], 1.0);
    assert_eq!(v.model_fingerprint, fp);

    let req = PredictRequest { samples: readings(120), aggregation: None };
    let a = predict(&client, &url, &req).await.text().await.unwrap();
    let b = predict(&client, &url, &req).await.text().await.unwrap();
    assert_eq!(a, b);
    let v: SessionVerdict = serde_json::from_str(&a).unwrap();
    assert_eq!(v.window_count, 91);
    let total: f64 = v.per_class_fraction.values().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!((0.0..=1.0).contains(&v.confidence));

    let req = PredictRequest { samples: readings(120), aggregation: Some(riskwatch_core::Aggregation::MaxRisk) };
    let m: SessionVerdict = predict(&client, &url, &req).await.json().await.unwrap();
    let highest = RiskLabel::ALL.iter().rev().find(|l| m.per_class_fraction[l] > 0.0).unwrap();
    assert_eq!(m.label, *highest);
}

#[tokio::test]
async fn invalid_requests() {
    let state = InferenceState::new(bundle(small()));
    let url = spawn(state.clone()).await;
    let client = reqwest::Client::new();

    let short = PredictRequest { samples: readings(29), aggregation: None };
    let r = predict(&client, &url, &short).await;
    assert_eq!(r.status(), 422);
    assert!(r.text().await.unwrap().contains("30"));

    let r = client
        .post(format!("{url}/predict"))
        .header("content-type", "application/json")
        .body("{\"samples\": [")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);

    let mut samples = readings(40);
    samples[17].gsr_us = f64::NAN;
    let err = state.predict(&PredictRequest { samples, aggregation: None }).unwrap_err();
    assert!(err.to_string().contains("index 17"), "{err}");
    assert!(err.to_string().contains("gsr_us"), "{err}");
}

#[tokio::test]
async fn concurrent_health_probes() {
    let state = InferenceState::new(bundle(small()));
    let url = spawn(state).await;
    let client = reqwest::Client::new();
    let (a, b) = tokio::join!(
        client.get(format!("{url}/health")).send(),
        client.get(format!("{url}/health")).send()
    );
    for r in [a.unwrap(), b.unwrap()] {
        assert!(r.status().is_success());
        let h: Health = r.json().await.unwrap();
        assert!(h.model_loaded);
        assert_eq!(h.status, "ok");
    }
}

#[tokio::test]
async fn full_model_latency_for_300_samples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_model(&bundle(ModelConfig::default()), &path).unwrap();
    let state = InferenceState::load(&path).unwrap();
    let url = spawn(state).await;
    let client = reqwest::Client::new();
    let req = PredictRequest { samples: readings(300), aggregation: None };
    let t = Instant::now();
    let r = predict(&client, &url, &req).await;
    let elapsed = t.elapsed().as_secs_f64();
    assert!(r.status().is_success());
    assert!(elapsed <= 2.0, "{elapsed:.3}s");
}

#[test]
fn unreadable_model_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    assert!(InferenceState::load(&dir.path().join("none.bin")).is_err());
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a model").unwrap();
    assert!(InferenceState::load(&bad).is_err());
}
