use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use riskwatch_core::eval::{
    config_fingerprint, confusion_matrix, leakage_experiment, metrics, roc_auc_ovr, roc_curve, run_cv,
    write_roc_csv,
};
use riskwatch_core::nn::{load_model, save_model, train};
use riskwatch_core::pipeline::{build_dataset, load_csv, split_by_subject, LabeledDataset};
use riskwatch_core::sensor::{generate_corpus, Generator, Scenario, ScenarioLibrary};
use riskwatch_core::session::assess_session;
use riskwatch_core::{RiskLabel, SessionVerdict};
use riskwatch_services::{stream, Gateway, GatewayConfig, InferenceState, Status, StreamConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::render::status_line;
use crate::{Cli, Command, TrainingOverrides, UsageError};

struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    cfg.training.seed = seed;
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Label(a) => label(&ctx, a),
        Command::Train(a) => train_cmd(ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Cv(a) => cv(ctx, a),
        Command::Leakage(a) => leakage(ctx, a),
        Command::ServeInference(a) => serve_inference(&ctx, a),
        Command::ServeGateway(a) => serve_gateway(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Corpus(a) => corpus(&ctx, &a.out, a.subjects, a.minutes, a.library.as_deref()),
        Command::Assess(a) => assess(&ctx, a),
        Command::Status(a) => status(&ctx, a),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn apply(ctx: &mut Ctx, o: &TrainingOverrides) -> Result<()> {
    let t = &mut ctx.cfg.training;
    if let Some(e) = o.epochs {
        t.max_epochs = e;
    }
    if let Some(s) = o.subsample {
        t.train_subsample = s;
    }
    if o.patience.is_some() {
        t.patience = o.patience;
    }
    t.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(())
}

/// Writes `result` wrapped with the effective configuration and its fingerprint.
fn write_report(ctx: &Ctx, name: &str, fingerprint: &str, result: &impl Serialize) -> Result<PathBuf> {
    let dir = &ctx.cfg.paths.reports_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{name}.json"));
    let body = json!({
        "command": name,
        "fingerprint": fingerprint,
        "config": ctx.cfg,
        "result": result,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&body)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn csv_input(ctx: &Ctx, input: Option<PathBuf>) -> Result<PathBuf> {
    input
        .or_else(|| ctx.cfg.paths.dataset_csv.clone())
        .ok_or_else(|| UsageError("no input CSV given (--input or paths.dataset_csv)".into()).into())
}

fn label_csv(ctx: &Ctx, path: &Path) -> Result<LabeledDataset> {
    let report = load_csv(path, &ctx.cfg.columns)?;
    log::info!(
        "{}: {} rows, {} skipped, {} subjects",
        path.display(),
        report.rows_read,
        report.rows_skipped,
        report.series.len()
    );
    let (ds, subjects) = build_dataset(report.series, &ctx.cfg.scoring)?;
    for s in &subjects {
        log::debug!("{}: {} samples, {} dropped, {} windows", s.subject_id, s.samples, s.dropped, s.windows);
    }
    Ok(ds)
}

fn dataset(ctx: &Ctx, arg: &crate::DatasetArg) -> Result<LabeledDataset> {
    match &arg.dataset {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => label_csv(ctx, p),
        Some(p) => Ok(LabeledDataset::load(p)?),
        None => {
            let p = csv_input(ctx, None)?;
            label_csv(ctx, &p)
        }
    }
}

fn histogram_json(ds: &LabeledDataset) -> serde_json::Value {
    let h = ds.label_histogram();
    RiskLabel::ALL
        .iter()
        .map(|l| (l.to_string(), json!(h.get(l).copied().unwrap_or(0))))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn label(ctx: &Ctx, a: crate::LabelArgs) -> Result<()> {
    let input = csv_input(ctx, a.input)?;
    let ds = label_csv(ctx, &input)?;
    ds.save(&a.out)?;
    if let Some(p) = &a.summary_csv {
        ds.write_summary_csv(p)?;
    }
    let digest = ds.digest();
    let hist = histogram_json(&ds);
    println!("{} windows from {} subjects", ds.len(), ds.subjects().len());
    for (l, n) in hist.as_object().expect("object") {
        println!("  {l:<22} {n}");
    }
    println!("digest {digest}");
    let report = write_report(
        ctx,
        "label",
        &digest,
        &json!({"input": input, "output": a.out, "windows": ds.len(), "histogram": hist, "digest": digest}),
    )?;
    log::info!("report written to {}", report.display());
    Ok(())
}

fn train_cmd(mut ctx: Ctx, a: crate::TrainArgs) -> Result<()> {
    apply(&mut ctx, &a.overrides)?;
    let ds = dataset(&ctx, &a.data)?;
    let split = split_by_subject(&ds.subjects(), 0.8, ctx.seed)?;
    log::info!(
        "training on {:?}, validating on {:?}",
        split.train_subjects,
        split.val_subjects
    );
    let out = train::<f32>(&ds, &split, &ctx.cfg.model, &ctx.cfg.training)?;
    let model_path = a.model_out.unwrap_or_else(|| ctx.cfg.paths.model.clone());
    save_model(&out.bundle, &model_path)?;
    let history_path = a
        .history
        .unwrap_or_else(|| ctx.cfg.paths.reports_dir.join("history.csv"));
    if let Some(dir) = history_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&history_path, out.history.to_csv())?;
    println!(
        "held-out accuracy {:.4} (epoch {}, {:.1}s); model {}",
        out.best_val_acc,
        out.best_epoch,
        out.elapsed_s,
        model_path.display()
    );
    let fp = config_fingerprint(&ctx.cfg.model, &ctx.cfg.training, &ds.digest());
    write_report(
        &ctx,
        "train",
        &fp,
        &json!({
            "model": model_path,
            "model_fingerprint": out.bundle.fingerprint(),
            "train_subjects": split.train_subjects,
            "val_subjects": split.val_subjects,
            "best_epoch": out.best_epoch,
            "best_val_acc": out.best_val_acc,
            "elapsed_s": out.elapsed_s,
            "history": out.history.epochs,
        }),
    )?;
    Ok(())
}

fn evaluate(ctx: &Ctx, a: crate::EvaluateArgs) -> Result<()> {
    let ds = dataset(ctx, &a.data)?;
    let model_path = a.model.unwrap_or_else(|| ctx.cfg.paths.model.clone());
    let bundle = load_model(&model_path)?;
    let idx: Vec<usize> = if a.all {
        (0..ds.len()).collect()
    } else {
        split_by_subject(&ds.subjects(), 0.8, ctx.seed)?.partition(&ds).1
    };
    let views: Vec<_> = idx.iter().map(|&i| ds.windows[i].values.view()).collect();
    let preds = bundle.predict(&views)?;
    let labels = ds.labels()?;
    let truth: Vec<RiskLabel> = idx.iter().map(|&i| labels[i]).collect();
    let predicted: Vec<RiskLabel> = preds.iter().map(|p| bundle.label_of(p.class)).collect();
    let cm = confusion_matrix(&truth, &predicted)?;
    let m = metrics(&cm)?;
    let classes = bundle.config.num_classes;
    let probs = Array2::from_shape_fn((preds.len(), classes), |(i, c)| preds[i].probabilities[c]);
    let auc = roc_auc_ovr(probs.view(), &truth)?;

    let dir = &ctx.cfg.paths.reports_dir;
    std::fs::create_dir_all(dir)?;
    for (c, label) in bundle.labels.iter().enumerate() {
        let scores: Vec<f64> = preds.iter().map(|p| p.probabilities[c]).collect();
        let positive: Vec<bool> = truth.iter().map(|t| t == label).collect();
        let name = label.as_str().to_lowercase().replace(' ', "_");
        write_roc_csv(&dir.join(format!("roc_{name}.csv")), &roc_curve(&scores, &positive))?;
    }

    println!("accuracy {:.4} on {} windows", m.accuracy, truth.len());
    println!("{:<22} {:>9} {:>9} {:>9} {:>8} {:>8}", "label", "precision", "recall", "f1", "support", "auc");
    for (c, auc_c) in m.per_class.iter().zip(&auc.per_class) {
        println!(
            "{:<22} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>8}",
            c.label.as_str(),
            c.precision,
            c.recall,
            c.f1,
            c.support,
            auc_c.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    println!("confusion (rows = truth):");
    for row in &cm.counts {
        println!("  {row:?}");
    }
    write_report(
        ctx,
        "evaluate",
        &bundle.fingerprint(),
        &json!({"model": model_path, "windows": truth.len(), "confusion": cm.counts, "metrics": m, "auc": auc}),
    )?;
    Ok(())
}

fn cv(mut ctx: Ctx, a: crate::CvArgs) -> Result<()> {
    apply(&mut ctx, &a.overrides)?;
    let ds = dataset(&ctx, &a.data)?;
    let report = run_cv::<f32>(&ds, &ctx.cfg.model, &ctx.cfg.training, a.folds, ctx.seed)?;
    for f in &report.folds {
        println!(
            "fold {}: {} validation subjects, accuracy {:.4}",
            f.fold + 1,
            f.val_subjects.len(),
            f.accuracy
        );
    }
    println!("mean {:.4} ± {:.4}", report.mean, report.std);
    let path = write_report(&ctx, "cv", &report.fingerprint.clone(), &report)?;
    println!("report {}", path.display());
    Ok(())
}

fn leakage(mut ctx: Ctx, a: crate::LeakageArgs) -> Result<()> {
    apply(&mut ctx, &a.overrides)?;
    if a.seeds.is_empty() {
        bail!(UsageError("at least one seed is required".into()));
    }
    let ds = dataset(&ctx, &a.data)?;
    let mut reports = Vec::new();
    for &seed in &a.seeds {
        let tcfg = riskwatch_core::nn::TrainingConfig {
            seed,
            ..ctx.cfg.training.clone()
        };
        let r = leakage_experiment::<f32>(&ds, &ctx.cfg.model, &tcfg, seed)?;
        println!(
            "seed {seed}: random split {:.4}, subject split {:.4}, gap {:+.4}",
            r.accuracy_random_split, r.accuracy_subject_split, r.gap
        );
        reports.push(r);
    }
    let fp = config_fingerprint(&ctx.cfg.model, &ctx.cfg.training, &ds.digest());
    let path = write_report(&ctx, "leakage", &fp, &reports)?;
    println!("report {}", path.display());
    Ok(())
}

fn addr(host: &str, port: u16) -> Result<SocketAddr> {
    let ip: IpAddr = host
        .parse()
        .map_err(|_| UsageError(format!("invalid host address `{host}`")))?;
    Ok(SocketAddr::new(ip, port))
}

async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
    log::info!("shutting down");
}

fn serve_inference(ctx: &Ctx, a: crate::ServeInferenceArgs) -> Result<()> {
    let model = a.model.unwrap_or_else(|| ctx.cfg.paths.model.clone());
    let addr = addr(&a.host, a.port.unwrap_or(ctx.cfg.services.inference_port))?;
    // load before listening so no request ever sees a cold model
    let state = InferenceState::load(&model)?;
    runtime()?.block_on(async move {
        let listener = riskwatch_services::bind(addr).await?;
        eprintln!("inference engine on http://{} (model {})", listener.local_addr()?, state.fingerprint());
        riskwatch_services::serve(listener, state.router(), ctrl_c()).await?;
        Ok(())
    })
}

fn serve_gateway(ctx: &Ctx, a: crate::ServeGatewayArgs) -> Result<()> {
    let s = &ctx.cfg.services;
    let cfg = GatewayConfig {
        threshold: a.threshold.unwrap_or(s.threshold),
        inference_url: a.inference_url.unwrap_or_else(|| s.inference_url.clone()),
        single_session: a.single_session || s.single_session,
        ..GatewayConfig::default()
    };
    let addr = addr(&a.host, a.port.unwrap_or(s.gateway_port))?;
    runtime()?.block_on(async move {
        let gw = Gateway::new(cfg)?;
        let listener = riskwatch_services::bind(addr).await?;
        eprintln!(
            "gateway on http://{} (threshold {}, inference {})",
            listener.local_addr()?,
            gw.config().threshold,
            gw.config().inference_url
        );
        riskwatch_services::serve(listener, gw.router(), ctrl_c()).await?;
        Ok(())
    })
}

fn scenario(name: &str, seed: u64) -> Result<Scenario> {
    let mut sc = match Scenario::builtin(name) {
        Some(s) => s,
        None => {
            let path = Path::new(name);
            if !path.exists() {
                bail!(UsageError(format!("`{name}` is neither a built-in scenario nor a file")));
            }
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("scenario {name}: {e}")))?
        }
    };
    sc.seed = seed;
    sc.validate()?;
    Ok(sc)
}

fn simulate(ctx: &Ctx, a: crate::SimulateArgs) -> Result<()> {
    if let Some(out) = &a.corpus_out {
        return corpus(ctx, out, a.subjects, a.minutes, a.library.as_deref());
    }
    let mut sc = scenario(&a.scenario, ctx.seed)?;
    if let Some(d) = a.duration_s {
        if d == 0 {
            bail!(UsageError("--duration-s must be positive".into()));
        }
        sc = sc.with_duration(d);
    }
    let samples: Vec<_> = Generator::new(sc, a.subject_id)?.collect();
    let cfg = StreamConfig {
        gateway_url: a.gateway_url.unwrap_or_else(|| ctx.cfg.services.gateway_url.clone()),
        rate_hz: a.rate_hz,
        ..StreamConfig::default()
    };
    eprintln!("streaming {} samples to {} at {} Hz", samples.len(), cfg.gateway_url, cfg.rate_hz);
    let report = runtime()?.block_on(stream(&cfg, samples))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.aborted || report.failed > 0 {
        bail!(
            "{} of {} sends failed{}",
            report.failed,
            report.sent,
            report.last_error.map(|e| format!(": {e}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn corpus(ctx: &Ctx, out: &Path, subjects: usize, minutes: u64, library: Option<&str>) -> Result<()> {
    if subjects == 0 || minutes == 0 {
        bail!(UsageError("--subjects and --minutes must be positive".into()));
    }
    let lib = match library {
        Some(name) => ScenarioLibrary::preset(name)
            .ok_or_else(|| UsageError(format!("unknown library preset `{name}`")))?,
        None => ctx.cfg.corpus.clone(),
    };
    let rows = generate_corpus(out, subjects, minutes, &lib, ctx.seed)?;
    println!("{rows} rows for {subjects} subjects written to {}", out.display());
    Ok(())
}

/// Offline equivalent of the inference engine's predict handler.
pub fn assess_file(
    input: &Path,
    model: &Path,
    aggregation: riskwatch_core::Aggregation,
    subject: Option<&str>,
    cfg: &RunConfig,
) -> Result<SessionVerdict> {
    let bundle = load_model(model)?;
    let report = load_csv(input, &cfg.columns)?;
    let series = match subject {
        Some(id) => report
            .series
            .into_iter()
            .find(|s| s.subject_id == id)
            .ok_or_else(|| UsageError(format!("subject `{id}` not in {}", input.display())))?,
        None => {
            let mut all = report.series;
            if all.len() != 1 {
                bail!(UsageError(format!(
                    "{} holds {} subjects; pick one with --subject",
                    input.display(),
                    all.len()
                )));
            }
            all.remove(0)
        }
    };
    let rows: Vec<_> = series.samples.iter().map(|s| s.features()).collect();
    Ok(assess_session(&bundle, &bundle.fingerprint(), &rows, aggregation)?)
}

fn assess(ctx: &Ctx, a: crate::AssessArgs) -> Result<()> {
    let model = a.model.unwrap_or_else(|| ctx.cfg.paths.model.clone());
    let v = assess_file(&a.input, &model, a.aggregation.into(), a.subject.as_deref(), &ctx.cfg)?;
    println!("{}", serde_json::to_string(&v)?);
    Ok(())
}

fn status(ctx: &Ctx, a: crate::StatusArgs) -> Result<()> {
    let base = a.gateway_url.unwrap_or_else(|| ctx.cfg.services.gateway_url.clone());
    let url = format!("{}/status", base.trim_end_matches('/'));
    runtime()?.block_on(async move {
        let client = reqwest::Client::builder().timeout(Duration::from_secs(5)).build()?;
        let mut last: Option<Status> = None;
        loop {
            let s: Status = client
                .get(&url)
                .send()
                .await
                .and_then(|r| r.error_for_status())
                .with_context(|| format!("querying {url}"))?
                .json()
                .await?;
            let changed = last.as_ref().is_none_or(|p| {
                (p.session_id.as_str(), p.state, p.buffered) != (s.session_id.as_str(), s.state, s.buffered)
            });
            if changed {
                println!("{}", status_line(&s));
            }
            let complete = s.state == riskwatch_services::SessionState::Complete;
            last = Some(s);
            if !a.watch || (a.until_complete && complete) {
                return Ok(());
            }
            tokio::time::sleep(Duration::from_millis(a.interval_ms)).await;
        }
    })
}
