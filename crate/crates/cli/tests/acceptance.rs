//! Acceptance suite. Each test checks one criterion and prints a single
//! `PASS`/`FAIL` line before asserting. Tests share one lock so the training runs
//! never compete for cores and the lines come out whole.
//!
//! `cargo test -p riskwatch-cli --test acceptance`

use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwatch_core::container::Container;
use riskwatch_core::eval::{auc_midrank, confusion_matrix, leakage_experiment, metrics, run_cv};
use riskwatch_core::nn::{gradient_check, init_model, load_model, save_model, train, ModelConfig, TrainingConfig};
use riskwatch_core::pipeline::{
    build_dataset, split_by_subject, write_samples_csv, zscore_per_subject, LabeledDataset, SubjectSeries,
};
use riskwatch_core::risk::{assess_sample, assign_label, overall_score};
use riskwatch_core::sensor::{corpus_samples, Generator, Scenario, ScenarioLibrary};
use riskwatch_core::{Bundle, Error, RiskLabel, ScoringConfig, SensorSample, SessionVerdict};
use riskwatch_services::{stream, Gateway, GatewayConfig, InferenceState, SessionState, Status, StreamConfig};

const CORPUS_SEED: u64 = 0;
const LEAKAGE_SEEDS: [u64; 3] = [1, 2, 3];

/// Budget for the single held-out training run.
fn learnability_training() -> TrainingConfig {
    TrainingConfig {
        max_epochs: 12,
        train_subsample: 4,
        ..TrainingConfig::default()
    }
}

/// Budget for each of the cross-validation and leakage runs.
fn protocol_training(seed: u64) -> TrainingConfig {
    TrainingConfig {
        max_epochs: 8,
        train_subsample: 4,
        seed,
        ..TrainingConfig::default()
    }
}

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict_line(n: u8, name: &str, ok: bool, detail: &str) {
    // straight to the process stdout so the line shows without --nocapture
    let line = format!("[{}] criterion {n:>2} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes()).and_then(|()| out.flush());
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn dataset(lib: &ScenarioLibrary) -> LabeledDataset {
    let subjects = corpus_samples(14, 43, lib, CORPUS_SEED).unwrap();
    let series = subjects
        .into_iter()
        .map(|s| SubjectSeries::new(s[0].subject_id.clone(), s))
        .collect();
    build_dataset(series, &ScoringConfig::default()).unwrap().0
}

/// The default 14-subject corpus.
fn corpus() -> &'static LabeledDataset {
    static DS: OnceLock<LabeledDataset> = OnceLock::new();
    DS.get_or_init(|| dataset(&ScenarioLibrary::default()))
}

// Brute-force scorer with the constants written out by hand.
fn oracle(t: f64, s: f64, l: f64, hr: f64, gsr: f64) -> (f64, RiskLabel) {
    fn band(x: f64, edges: &[f64], scores: &[f64]) -> f64 {
        let mut i = 0;
        while i < edges.len() && x >= edges[i] {
            i += 1;
        }
        scores[i]
    }
    let ts = band(t, &[18.0, 20.0, 24.0, 26.0, 28.0], &[0.3, 0.6, 1.0, 0.8, 0.5, 0.2]);
    let ss = band(s, &[30.0, 50.0, 60.0, 75.0], &[1.0, 0.9, 0.7, 0.4, 0.2]);
    let ls = band(l, &[500.0, 2000.0, 10000.0, 20000.0], &[0.2, 0.4, 1.0, 0.7, 0.3]);
    let cog = (ts + ss + ls) / 3.0;
    let stress = 0.7 * hr + 0.3 * gsr;
    let overall = (0.7 * stress + 0.3 * (1.0 - cog)).clamp(0.0, 1.0);
    let label = match overall {
        x if x < 0.25 => RiskLabel::RunAsUsual,
        x if x < 0.50 => RiskLabel::ShowWarning,
        x if x < 0.75 => RiskLabel::LimitAccess,
        _ => RiskLabel::InformBackupPerson,
    };
    (overall, label)
}

#[test]
fn c01_labeling_matches_oracle() {
    let _g = serial();
    let cfg = ScoringConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let edges_t = [18.0, 20.0, 24.0, 26.0, 28.0];
    let edges_s = [30.0, 50.0, 60.0, 75.0];
    let edges_l = [500.0, 2000.0, 10000.0, 20000.0];
    // a quarter of the draws sit exactly on a band edge
    let pick = |edges: &[f64], lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.25) {
            edges[rng.random_range(0..edges.len())]
        } else {
            rng.random_range(lo..hi)
        }
    };
    let start = Instant::now();
    let mut mismatches = 0;
    let n = 10_000;
    for _ in 0..n {
        let t = pick(&edges_t, 5.0, 40.0, &mut rng);
        let s = pick(&edges_s, 0.0, 110.0, &mut rng);
        let l = pick(&edges_l, 0.0, 60_000.0, &mut rng);
        let hr: f64 = rng.random_range(0.0..=1.0);
        let gsr: f64 = rng.random_range(0.0..=1.0);
        let sample = SensorSample {
            subject_id: "o".into(),
            timestamp_s: 0,
            heart_rate_bpm: 70.0,
            gsr_us: 2.0,
            temperature_c: t,
            light_lux: l,
            sound_db: s,
        };
        let b = assess_sample(&sample, hr, gsr, &cfg).unwrap();
        let (overall, label) = oracle(t, s, l, hr, gsr);
        if b.overall_score != overall || b.label != label {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict_line(
        1,
        "labeling oracle",
        mismatches == 0 && elapsed < 1.0,
        &format!("{mismatches} mismatches in {n} tuples, {elapsed:.3}s"),
    );
}

#[test]
fn c02_monotonicity() {
    let _g = serial();
    let cfg = ScoringConfig::default();
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let mut violations = 0;
    for &a in &grid {
        for w in grid.windows(2) {
            if overall_score(w[1], a, &cfg).unwrap() < overall_score(w[0], a, &cfg).unwrap() {
                violations += 1;
            }
            if overall_score(a, w[1], &cfg).unwrap() > overall_score(a, w[0], &cfg).unwrap() {
                violations += 1;
            }
        }
    }
    // every representable score step between the grid points would be too many;
    // 1e6 steps plus each threshold and its neighbours covers every label change
    let mut label_violations = 0;
    let mut prev = assign_label(0.0, &cfg).unwrap();
    let mut points: Vec<f64> = (0..=1_000_000).map(|i| i as f64 / 1e6).collect();
    for th in cfg.label_thresholds {
        points.extend([th.next_down(), th, th.next_up()]);
    }
    points.sort_by(f64::total_cmp);
    for &x in &points {
        let l = assign_label(x, &cfg).unwrap();
        if l < prev {
            label_violations += 1;
        }
        prev = l;
    }
    verdict_line(
        2,
        "score monotonicity",
        violations == 0 && label_violations == 0,
        &format!("{violations} grid violations, {label_violations} label violations"),
    );
}

#[test]
fn c03_gradient_check() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Array3::from_shape_fn((3, 30, 5), |_| rng.random_range(-2.0..2.0));
    let y = [0, 2, 3];
    let mut worst = 0.0f64;
    for l2 in [0.0, 0.01] {
        let cfg = ModelConfig {
            conv_filters: 4,
            lstm_units: 8,
            num_classes: 4,
            l2_lambda: l2,
            ..ModelConfig::default()
        };
        let report = gradient_check(&cfg, x.view(), &y, 1e-6, 5).unwrap();
        for t in &report.tensors {
            worst = worst.max(t.max_rel_error);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict_line(
        3,
        "gradient check",
        worst <= 1e-4 && elapsed < 60.0,
        &format!("max relative error {worst:.2e}, {elapsed:.1}s"),
    );
}

#[test]
fn c04_learnability() {
    let _g = serial();
    let ds = corpus();
    let split = split_by_subject(&ds.subjects(), 0.8, 0).unwrap();
    assert_eq!((split.train_subjects.len(), split.val_subjects.len()), (11, 3));
    let start = Instant::now();
    let out = train::<f32>(ds, &split, &ModelConfig::default(), &learnability_training()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    verdict_line(
        4,
        "held-out subject accuracy",
        out.best_val_acc >= 0.80 && elapsed < 600.0,
        &format!(
            "{:.4} on {:?} (epoch {}), {elapsed:.0}s",
            out.best_val_acc, split.val_subjects, out.best_epoch
        ),
    );
}

#[test]
fn c05_leakage_gap() {
    let _g = serial();
    let ds = &dataset(&ScenarioLibrary::distinct_rooms());
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for seed in LEAKAGE_SEEDS {
        let r = leakage_experiment::<f32>(ds, &ModelConfig::default(), &protocol_training(seed), seed).unwrap();
        detail.push(format!(
            "seed {seed}: {:.3} - {:.3} = {:+.3}",
            r.accuracy_random_split, r.accuracy_subject_split, r.gap
        ));
        gaps.push(r.gap);
    }
    verdict_line(
        5,
        "leakage gap",
        gaps.iter().all(|&g| g >= 0.05),
        &detail.join("; "),
    );
}

#[test]
fn c06_grouped_cv() {
    let _g = serial();
    let ds = corpus();
    let report = run_cv::<f32>(ds, &ModelConfig::default(), &protocol_training(0), 5, 0).unwrap();
    let mut sizes: Vec<usize> = report.folds.iter().map(|f| f.val_subjects.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut disjoint = true;
    for (i, a) in report.folds.iter().enumerate() {
        disjoint &= a.train_subjects.is_disjoint(&a.val_subjects);
        for b in &report.folds[i + 1..] {
            disjoint &= a.val_subjects.is_disjoint(&b.val_subjects);
        }
    }
    let covered: BTreeSet<&String> = report.folds.iter().flat_map(|f| &f.val_subjects).collect();
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    let has_summary = json["mean"].is_f64() && json["std"].is_f64() && json["folds"].as_array().map(Vec::len) == Some(5);
    verdict_line(
        6,
        "grouped cross-validation",
        sizes == [3, 3, 3, 3, 2] && disjoint && covered.len() == 14 && has_summary && report.mean >= 0.75,
        &format!(
            "folds {sizes:?}, disjoint {disjoint}, accuracy {:.4} ± {:.4} {:?}",
            report.mean, report.std, report.accuracies
        ),
    );
}

// Exhaustive pair counting with ties worth one half.
fn auc_pairs(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0u64);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

#[test]
fn c07_metric_oracles() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad_confusion = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let truth: Vec<RiskLabel> = (0..n).map(|_| RiskLabel::ALL[rng.random_range(0..4)]).collect();
        let pred: Vec<RiskLabel> = (0..n).map(|_| RiskLabel::ALL[rng.random_range(0..4)]).collect();
        let cm = confusion_matrix(&truth, &pred).unwrap();
        let m = metrics(&cm).unwrap();
        let correct = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as u64;
        let mut ok = cm.total() == n as u64 && cm.trace() == correct;
        ok &= (0..4).map(|i| cm.row_sum(i)).sum::<u64>() == cm.total();
        ok &= (0..4).map(|j| cm.col_sum(j)).sum::<u64>() == cm.total();
        for (i, l) in RiskLabel::ALL.iter().enumerate() {
            ok &= cm.row_sum(i) == truth.iter().filter(|t| *t == l).count() as u64;
            ok &= cm.col_sum(i) == pred.iter().filter(|p| *p == l).count() as u64;
            ok &= m.per_class[i].support == cm.row_sum(i);
        }
        ok &= m.accuracy == correct as f64 / n as f64;
        if !ok {
            bad_confusion += 1;
        }
    }

    let mut datasets = 0;
    let mut worst = 0.0f64;
    let mut undefined_mismatch = 0;
    for n in 1..=50 {
        for _ in 0..200 {
            // coarse scores force plenty of ties
            let levels = rng.random_range(1..=n.max(2));
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            match (auc_midrank(&scores, &positive), auc_pairs(&scores, &positive)) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => undefined_mismatch += 1,
            }
            datasets += 1;
        }
    }
    verdict_line(
        7,
        "metric oracles",
        bad_confusion == 0 && undefined_mismatch == 0 && worst <= 1e-12,
        &format!(
            "{bad_confusion}/1000 confusion violations; {datasets} AUC datasets, max |diff| {worst:.1e}"
        ),
    );
}

#[test]
fn c08_standardization() {
    let _g = serial();
    let subjects = corpus_samples(14, 43, &ScenarioLibrary::default(), CORPUS_SEED).unwrap();
    let mut series: Vec<SubjectSeries> = subjects
        .into_iter()
        .map(|s| SubjectSeries::new(s[0].subject_id.clone(), s))
        .collect();
    // a subject with a constant light column and an odd length
    let mut flat = series[0].samples[..457].to_vec();
    for s in &mut flat {
        s.subject_id = "FLAT".into();
        s.light_lux = 3000.0;
    }
    series.push(SubjectSeries::new("FLAT", flat));

    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    let mut constant_ok = true;
    for s in &series {
        let z = zscore_per_subject(s).unwrap();
        for (j, col) in z.values.columns().into_iter().enumerate() {
            if z.stats[j].std == 0.0 {
                constant_ok &= col.iter().all(|&v| v == 0.0);
                continue;
            }
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((std - 1.0).abs());
        }
    }
    let lengths: Vec<usize> = series.iter().map(SubjectSeries::len).collect();
    let (_, reports) = build_dataset(series, &ScoringConfig::default()).unwrap();
    let counts_ok = reports.iter().zip(&lengths).all(|(r, _)| r.windows + 29 == r.samples)
        && reports.iter().map(|r| r.samples).sum::<usize>() == lengths.iter().sum::<usize>();
    verdict_line(
        8,
        "standardization contract",
        worst_mean < 1e-9 && worst_std < 1e-9 && constant_ok && counts_ok,
        &format!(
            "max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}, constant columns zero {constant_ok}, windows = L-29 {counts_ok}"
        ),
    );
}

#[test]
fn c09_serialization() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let cfg = ModelConfig::default();
    let bundle = Bundle::new(cfg.clone(), init_model(&cfg, 23));
    save_model(&bundle, &path).unwrap();
    let loaded = load_model(&path).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let windows: Vec<Array2<f64>> = (0..256)
        .map(|_| Array2::from_shape_fn((30, 5), |_| rng.random_range(-3.0..3.0)))
        .collect();
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let bits = |b: &Bundle| -> Vec<u64> {
        b.predict(&views)
            .unwrap()
            .iter()
            .flat_map(|p| p.probabilities.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let bitwise = bits(&bundle) == bits(&loaded);

    let bytes = std::fs::read(&path).unwrap();
    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    let truncated = &bytes[..bytes.len() - 200];
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x01;
    let e_magic = Container::decode(&magic);
    let e_trunc = Container::decode(truncated);
    let e_crc = Container::decode(&flipped);
    let distinct = matches!(e_magic, Err(Error::BadMagic))
        && matches!(e_trunc, Err(Error::Truncated(_)))
        && matches!(e_crc, Err(Error::ChecksumMismatch { .. }));
    verdict_line(
        9,
        "serialization",
        bitwise && distinct,
        &format!(
            "bitwise predict {bitwise}; magic -> {:?}, truncated -> {:?}, flipped byte -> {:?}",
            e_magic.err().map(|e| e.to_string()),
            e_trunc.err().map(|e| e.to_string()),
            e_crc.err().map(|e| e.to_string())
        ),
    );
}

async fn spawn(app: axum::Router) -> String {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn assess_with_binary(dir: &Path, samples: &[SensorSample], model: &Path) -> SessionVerdict {
    let csv = dir.join("captured.csv");
    write_samples_csv(&csv, samples).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_riskwatch"))
        .env_remove("RISKWATCH_CONFIG")
        .env("RUST_LOG", "warn")
        .args(["assess", "--input"])
        .arg(&csv)
        .arg("--model")
        .arg(model)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn verdict_bits(v: &SessionVerdict) -> (RiskLabel, u64, usize, Vec<u64>, String) {
    (
        v.label,
        v.confidence.to_bits(),
        v.window_count,
        v.per_class_fraction.values().map(|f| f.to_bits()).collect(),
        v.model_fingerprint.clone(),
    )
}

#[test]
fn c10_end_to_end() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.bin");
    let cfg = ModelConfig::default();
    save_model(&Bundle::new(cfg.clone(), init_model(&cfg, 5)), &model).unwrap();

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (statuses, records, calls, stream_report) = rt.block_on(async {
        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let inference = InferenceState::load(&model).unwrap().router().layer(axum::middleware::from_fn(
            move |req: axum::extract::Request, next: axum::middleware::Next| {
                if req.uri().path() == "/predict" {
                    counter.fetch_add(1, Ordering::SeqCst);
                }
                next.run(req)
            },
        ));
        let inference_url = spawn(inference).await;
        let gw = Gateway::new(GatewayConfig {
            threshold: 180,
            inference_url,
            ..GatewayConfig::default()
        })
        .unwrap();
        let gateway_url = spawn(gw.clone().router()).await;

        // two consecutive sessions from the default scenario
        let first: Vec<_> = Generator::new(Scenario::two_phase(), "live").unwrap().collect();
        let second: Vec<_> = Generator::new(Scenario { seed: 1, ..Scenario::two_phase() }, "live")
            .unwrap()
            .map(|mut s| {
                s.timestamp_s += 180;
                s
            })
            .collect();
        assert_eq!((first.len(), second.len()), (180, 180));

        let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let pollers: Vec<_> = (0..4)
            .map(|_| {
                let url = format!("{gateway_url}/status");
                let done = done.clone();
                tokio::spawn(async move {
                    let client = reqwest::Client::new();
                    let mut seen = Vec::new();
                    while !done.load(Ordering::SeqCst) {
                        if let Ok(r) = client.get(&url).send().await {
                            seen.push(r.json::<Status>().await.unwrap());
                        }
                        tokio::time::sleep(Duration::from_millis(5)).await;
                    }
                    seen
                })
            })
            .collect();

        let report = stream(
            &StreamConfig {
                gateway_url: gateway_url.clone(),
                rate_hz: 100.0,
                ..StreamConfig::default()
            },
            first.into_iter().chain(second),
        )
        .await
        .unwrap();
        for _ in 0..500 {
            if gw.history().len() == 2 {
                break;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
        done.store(true, Ordering::SeqCst);
        let mut statuses = Vec::new();
        for p in pollers {
            statuses.extend(p.await.unwrap());
        }
        let records: Vec<_> = gw
            .history()
            .iter()
            .map(|r| gw.session(&r.session_id).unwrap())
            .collect();
        (statuses, records, calls.load(Ordering::SeqCst), report)
    });

    let mut problems = Vec::new();
    if stream_report.failed > 0 || stream_report.acked != 360 {
        problems.push(format!("stream {stream_report:?}"));
    }
    if records.len() != 2 || calls != 2 {
        problems.push(format!("{} sessions, {calls} inference calls", records.len()));
    }
    // every poll that saw a verdict for a session saw the same one
    for r in &records {
        let served = r.verdict.as_ref();
        let observed: Vec<_> = statuses
            .iter()
            .filter(|s| s.session_id == r.session_id && s.state == SessionState::Complete)
            .collect();
        if observed.iter().any(|s| s.verdict.as_ref() != served || s.attempts != 1) {
            problems.push(format!("{} changed after completion", r.session_id));
        }
    }
    let latencies: Vec<f64> = records.iter().filter_map(|r| r.latency_ms).collect();
    if latencies.len() != records.len() || latencies.iter().any(|&l| l >= 2000.0) {
        problems.push(format!("latencies {latencies:?}"));
    }
    let mut reproduced = 0;
    for r in &records {
        let Some(served) = &r.verdict else {
            problems.push(format!("{}: {:?}", r.session_id, r.error));
            continue;
        };
        if r.samples.len() != 180 {
            problems.push(format!("{} captured {} samples", r.session_id, r.samples.len()));
        }
        let offline = assess_with_binary(dir.path(), &r.samples, &model);
        if verdict_bits(&offline) == verdict_bits(served) {
            reproduced += 1;
        } else {
            problems.push(format!("{}: served {served:?}, offline {offline:?}", r.session_id));
        }
    }
    verdict_line(
        10,
        "end-to-end protocol",
        problems.is_empty(),
        &format!(
            "{} sessions, {calls} dispatches, {} status polls, latency {:?} ms, {reproduced} verdicts reproduced offline{}",
            records.len(),
            statuses.len(),
            latencies.iter().map(|l| l.round()).collect::<Vec<_>>(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    );
}
