//! Preprocessing: CSV ingestion, list-wise cleaning, per-subject standardization,
//! sliding-window segmentation, window labeling and dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::risk::{self, RiskBreakdown, RiskLabel, ScoringConfig, SensorSample, NUM_FEATURES};

/// Time steps per window.
pub const WINDOW: usize = 30;
/// Window advance in samples.
pub const STRIDE: usize = 1;

/// CSV header names for each required field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub subject_id: String,
    pub timestamp_s: String,
    pub heart_rate_bpm: String,
    pub gsr_us: String,
    pub temperature_c: String,
    pub light_lux: String,
    pub sound_db: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            subject_id: "subject_id".into(),
            timestamp_s: "timestamp_s".into(),
            heart_rate_bpm: "heart_rate_bpm".into(),
            gsr_us: "gsr_us".into(),
            temperature_c: "temperature_c".into(),
            light_lux: "light_lux".into(),
            sound_db: "sound_db".into(),
        }
    }
}

impl ColumnMapping {
    fn columns(&self) -> [&str; 7] {
        [
            &self.subject_id,
            &self.timestamp_s,
            &self.heart_rate_bpm,
            &self.gsr_us,
            &self.temperature_c,
            &self.light_lux,
            &self.sound_db,
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl FeatureStats {
    /// Statistics over the finite entries of `values`.
    pub fn of<'a>(values: impl IntoIterator<Item = &'a f64> + Clone) -> FeatureStats {
        let (mut n, mut sum) = (0usize, 0.0f64);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.clone().into_iter().filter(|v| v.is_finite()) {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return FeatureStats {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        if min == max {
            // summation rounding would otherwise leave a tiny spurious spread
            return FeatureStats { mean: min, std: 0.0, min, max };
        }
        let mean = sum / n as f64;
        let var = values
            .into_iter()
            .filter(|v| v.is_finite())
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        FeatureStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}

/// One subject's time-ordered session.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSeries {
    pub subject_id: String,
    pub samples: Vec<SensorSample>,
    /// Per-feature statistics over finite values, in [`risk::FEATURE_NAMES`] order.
    pub stats: [FeatureStats; NUM_FEATURES],
}

impl SubjectSeries {
    pub fn new(subject_id: impl Into<String>, samples: Vec<SensorSample>) -> Self {
        let stats = feature_stats(&samples);
        SubjectSeries {
            subject_id: subject_id.into(),
            samples,
            stats,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The five features as an `L x 5` matrix.
    pub fn matrix(&self) -> Array2<f64> {
        samples_matrix(&self.samples)
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.features()[feature]).collect()
    }
}

pub fn samples_matrix(samples: &[SensorSample]) -> Array2<f64> {
    let mut m = Array2::zeros((samples.len(), NUM_FEATURES));
    for (mut row, s) in m.rows_mut().into_iter().zip(samples) {
        for (dst, v) in row.iter_mut().zip(s.features()) {
            *dst = v;
        }
    }
    m
}

fn feature_stats(samples: &[SensorSample]) -> [FeatureStats; NUM_FEATURES] {
    std::array::from_fn(|f| {
        let col: Vec<f64> = samples.iter().map(|s| s.features()[f]).collect();
        FeatureStats::of(&col)
    })
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub series: Vec<SubjectSeries>,
    pub rows_read: usize,
    /// Rows whose subject or timestamp could not be parsed.
    pub rows_skipped: usize,
}

fn parse_feature(field: Option<&str>) -> f64 {
    // Empty or garbled numeric cells become NaN so cleaning can drop and count them.
    field
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(f64::NAN)
}

fn parse_timestamp(field: &str) -> Option<i64> {
    let field = field.trim();
    field.parse::<i64>().ok().or_else(|| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && v.fract() == 0.0)
            .map(|v| v as i64)
    })
}

/// Writes samples in the default column layout. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_samples_csv(path: &Path, samples: &[SensorSample]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let m = ColumnMapping::default();
    writeln!(out, "{}", m.columns().join(",")).map_err(io)?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.subject_id, s.timestamp_s, s.heart_rate_bpm, s.gsr_us, s.temperature_c, s.light_lux, s.sound_db
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a CSV with a header row and groups rows by subject, sorted by timestamp.
pub fn load_csv(path: &Path, mapping: &ColumnMapping) -> Result<LoadReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = mapping
        .columns()
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        })
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<String, Vec<SensorSample>> = BTreeMap::new();
    let (mut rows_read, mut rows_skipped) = (0usize, 0usize);
    for record in reader.records() {
        rows_read += 1;
        let Ok(record) = record else {
            rows_skipped += 1;
            continue;
        };
        let subject = record.get(idx[0]).map(str::trim).unwrap_or("");
        let ts = record.get(idx[1]).and_then(parse_timestamp);
        let (false, Some(timestamp_s)) = (subject.is_empty(), ts) else {
            rows_skipped += 1;
            continue;
        };
        let f = |k: usize| parse_feature(record.get(idx[k]));
        groups
            .entry(subject.to_string())
            .or_default()
            .push(SensorSample {
                subject_id: subject.to_string(),
                timestamp_s,
                heart_rate_bpm: f(2),
                gsr_us: f(3),
                temperature_c: f(4),
                light_lux: f(5),
                sound_db: f(6),
            });
    }
    if groups.is_empty() {
        return Err(Error::NoUsableRows(path.to_path_buf()));
    }
    let series = groups
        .into_iter()
        .map(|(id, mut samples)| {
            samples.sort_by_key(|s| s.timestamp_s);
            SubjectSeries::new(id, samples)
        })
        .collect();
    Ok(LoadReport {
        series,
        rows_read,
        rows_skipped,
    })
}

#[derive(Clone, Debug)]
pub struct Cleaned {
    pub series: SubjectSeries,
    pub dropped: usize,
}

/// List-wise deletion of corrupt samples; survivors are re-indexed onto a contiguous
/// 1 Hz grid starting at the first surviving timestamp.
pub fn clean(series: SubjectSeries) -> Result<Cleaned> {
    let before = series.samples.len();
    let mut kept: Vec<SensorSample> = series
        .samples
        .into_iter()
        .filter(|s| !s.is_corrupt())
        .collect();
    let Some(t0) = kept.first().map(|s| s.timestamp_s) else {
        return Err(Error::EmptySeries(series.subject_id));
    };
    for (i, s) in kept.iter_mut().enumerate() {
        s.timestamp_s = t0 + i as i64;
    }
    Ok(Cleaned {
        dropped: before - kept.len(),
        series: SubjectSeries::new(series.subject_id, kept),
    })
}

/// Column-wise z-scores with population standard deviation; zero-variance columns
/// become all zeros.
pub fn zscore_columns(values: ArrayView2<f64>) -> (Array2<f64>, Vec<FeatureStats>) {
    let mut out = values.to_owned();
    let mut stats = Vec::with_capacity(values.ncols());
    for mut col in out.columns_mut() {
        let st = FeatureStats::of(&col.to_vec());
        if st.std > 0.0 {
            col.mapv_inplace(|x| (x - st.mean) / st.std);
        } else {
            col.fill(0.0);
        }
        stats.push(st);
    }
    (out, stats)
}

/// A subject's session after per-subject z-scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub subject_id: String,
    /// `L x 5` standardized features.
    pub values: Array2<f64>,
    /// Raw statistics the standardization used.
    pub stats: [FeatureStats; NUM_FEATURES],
}

pub fn zscore_per_subject(series: &SubjectSeries) -> Result<Standardized> {
    if series.is_empty() {
        return Err(Error::EmptySeries(series.subject_id.clone()));
    }
    let (values, stats) = zscore_columns(series.matrix().view());
    Ok(Standardized {
        subject_id: series.subject_id.clone(),
        values,
        stats: stats.try_into().expect("five feature columns"),
    })
}

/// Min-max scaling to [0, 1] over the whole slice; a constant slice maps to 0.5.
pub fn minmax_per_subject(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::validation("cannot min-max normalize an empty series"));
    }
    let st = FeatureStats::of(values);
    let range = st.max - st.min;
    if !(range > 0.0) {
        return Ok(vec![0.5; values.len()]);
    }
    // clamp guards the rounding of (x - min) / range for the extreme elements
    Ok(values
        .iter()
        .map(|&x| ((x - st.min) / range).clamp(0.0, 1.0))
        .collect())
}

/// `L - window + 1` for `L >= window`, else zero.
pub fn window_count(len: usize, window: usize) -> usize {
    (len + 1).saturating_sub(window)
}

/// One model input: `window x 5` standardized features from a single subject.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    pub subject_id: String,
    pub start_index: usize,
    pub values: Array2<f64>,
    pub risk: Option<RiskBreakdown>,
}

impl FeatureWindow {
    pub fn label(&self) -> Option<RiskLabel> {
        self.risk.map(|r| r.label)
    }
}

pub fn segment(series: &Standardized, window: usize, stride: usize) -> Result<Vec<FeatureWindow>> {
    if window == 0 || stride == 0 {
        return Err(Error::validation("window and stride must be positive"));
    }
    let len = series.values.nrows();
    if len < window {
        return Err(Error::SeriesTooShort { len, window });
    }
    Ok((0..=len - window)
        .step_by(stride)
        .map(|start| FeatureWindow {
            subject_id: series.subject_id.clone(),
            start_index: start,
            values: series.values.slice(s![start..start + window, ..]).to_owned(),
            risk: None,
        })
        .collect())
}

/// Labels windows from the raw physical values of their span. The stored feature
/// matrices are left untouched.
pub fn label_windows(
    windows: Vec<FeatureWindow>,
    raw: &SubjectSeries,
    norm_hr: &[f64],
    norm_gsr: &[f64],
    cfg: &ScoringConfig,
) -> Result<Vec<FeatureWindow>> {
    let len = raw.len();
    if norm_hr.len() != len || norm_gsr.len() != len {
        return Err(Error::LengthMismatch {
            left: len,
            right: norm_hr.len().min(norm_gsr.len()),
        });
    }
    windows
        .into_iter()
        .map(|mut w| {
            let end = w.start_index + w.values.nrows();
            if end > len {
                return Err(Error::IndexOutOfRange {
                    index: end - 1,
                    len,
                });
            }
            let span = w.start_index..end;
            w.risk = Some(risk::assess_window(
                &raw.samples[span.clone()],
                &norm_hr[span.clone()],
                &norm_gsr[span],
                cfg,
            )?);
            Ok(w)
        })
        .collect()
}

/// Per-subject outcome of [`build_dataset`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub samples: usize,
    pub dropped: usize,
    pub windows: usize,
}

/// Runs clean, standardize, segment and label for one subject.
pub fn prepare_subject(
    series: SubjectSeries,
    cfg: &ScoringConfig,
) -> Result<(Vec<FeatureWindow>, SubjectReport)> {
    let Cleaned { series, dropped } = clean(series)?;
    let standardized = zscore_per_subject(&series)?;
    let hr = minmax_per_subject(&series.column(risk::HR))?;
    let gsr = minmax_per_subject(&series.column(risk::GSR))?;
    let windows = segment(&standardized, WINDOW, STRIDE)?;
    let windows = label_windows(windows, &series, &hr, &gsr, cfg)?;
    let report = SubjectReport {
        subject_id: series.subject_id.clone(),
        samples: series.len(),
        dropped,
        windows: windows.len(),
    };
    Ok((windows, report))
}

/// Processes every subject (in parallel) and concatenates their windows ordered by
/// subject id, then start index.
pub fn build_dataset(
    series: Vec<SubjectSeries>,
    cfg: &ScoringConfig,
) -> Result<(LabeledDataset, Vec<SubjectReport>)> {
    cfg.validate()?;
    let mut results: Vec<(Vec<FeatureWindow>, SubjectReport)> = series
        .into_par_iter()
        .map(|s| prepare_subject(s, cfg))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.1.subject_id.cmp(&b.1.subject_id));
    let mut windows = Vec::new();
    let mut reports = Vec::new();
    for (w, r) in results {
        windows.extend(w);
        reports.push(r);
    }
    Ok((LabeledDataset { windows }, reports))
}

/// Labeled windows from any number of subjects.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub windows: Vec<FeatureWindow>,
}

const DATASET_KIND: &str = "riskwatch.dataset";

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        self.windows
            .iter()
            .map(|w| w.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    pub fn labels(&self) -> Result<Vec<RiskLabel>> {
        self.windows
            .iter()
            .map(|w| {
                w.label().ok_or_else(|| {
                    Error::validation(format!(
                        "window {}@{} is unlabeled",
                        w.subject_id, w.start_index
                    ))
                })
            })
            .collect()
    }

    pub fn label_histogram(&self) -> BTreeMap<RiskLabel, usize> {
        let mut h: BTreeMap<RiskLabel, usize> = RiskLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for l in self.windows.iter().filter_map(FeatureWindow::label) {
            *h.entry(l).or_default() += 1;
        }
        h
    }

    /// Indices of windows belonging to the given subjects.
    pub fn indices_for(&self, subjects: &BTreeSet<String>) -> Vec<usize> {
        self.windows
            .iter()
            .enumerate()
            .filter(|(_, w)| subjects.contains(&w.subject_id))
            .map(|(i, _)| i)
            .collect()
    }

    /// SHA-256 over ids, offsets, labels and feature bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.windows {
            h.update(w.subject_id.as_bytes());
            h.update([0u8]);
            h.update((w.start_index as u64).to_le_bytes());
            h.update([w.label().map_or(255, |l| l.index() as u8)]);
            for v in &w.values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_container(&self) -> Result<Container> {
        let labels = self.labels()?;
        let subjects = self.subjects();
        let subject_index: BTreeMap<&str, usize> = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let steps = self.windows.first().map_or(WINDOW, |w| w.values.nrows());
        let n = self.windows.len();

        let mut meta = Map::new();
        meta.insert("kind".into(), Value::from(DATASET_KIND));
        meta.insert("subjects".into(), serde_json::to_value(&subjects)?);
        meta.insert(
            "label_vocabulary".into(),
            serde_json::to_value(RiskLabel::ALL)?,
        );
        let mut c = Container::new(meta);

        let mut features = Vec::with_capacity(n * steps * NUM_FEATURES);
        let mut scores = Vec::with_capacity(n * 6);
        for w in &self.windows {
            if w.values.dim() != (steps, NUM_FEATURES) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{steps}x{NUM_FEATURES}"),
                    actual: format!("{:?}", w.values.dim()),
                });
            }
            features.extend(w.values.iter().map(|&v| v as f32));
            let r = w.risk.expect("labels() checked every window");
            scores.extend(
                [
                    r.temp_score,
                    r.sound_score,
                    r.light_score,
                    r.cognitive_score,
                    r.stress_score,
                    r.overall_score,
                ]
                .map(|v| v as f32),
            );
        }
        c.push("features", &[n, steps, NUM_FEATURES], features);
        c.push("scores", &[n, 6], scores);
        c.push(
            "labels",
            &[n],
            labels.iter().map(|l| l.index() as f32).collect(),
        );
        c.push(
            "start_index",
            &[n],
            self.windows.iter().map(|w| w.start_index as f32).collect(),
        );
        c.push(
            "subject_index",
            &[n],
            self.windows
                .iter()
                .map(|w| subject_index[w.subject_id.as_str()] as f32)
                .collect(),
        );
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<LabeledDataset> {
        if c.meta.get("kind").and_then(Value::as_str) != Some(DATASET_KIND) {
            return Err(Error::Manifest("not a labeled dataset container".into()));
        }
        let subjects: Vec<String> = serde_json::from_value(
            c.meta
                .get("subjects")
                .cloned()
                .ok_or_else(|| Error::Manifest("missing subjects".into()))?,
        )?;
        let feat = c.tensor("features")?;
        let [n, steps, nf] = feat.shape[..] else {
            return Err(Error::Manifest("features must be rank 3".into()));
        };
        if nf != NUM_FEATURES {
            return Err(Error::Manifest(format!("expected {NUM_FEATURES} features")));
        }
        let scores = c.tensor_shaped("scores", &[n, 6])?;
        let labels = c.tensor_shaped("labels", &[n])?;
        let starts = c.tensor_shaped("start_index", &[n])?;
        let subj = c.tensor_shaped("subject_index", &[n])?;
        let per = steps * NUM_FEATURES;
        let windows = (0..n)
            .map(|i| {
                let label = RiskLabel::from_index(labels[i] as usize)
                    .ok_or_else(|| Error::Manifest(format!("bad label {}", labels[i])))?;
                let subject_id = subjects
                    .get(subj[i] as usize)
                    .ok_or_else(|| Error::Manifest(format!("bad subject index {}", subj[i])))?
                    .clone();
                let values = Array2::from_shape_vec(
                    (steps, NUM_FEATURES),
                    feat.data[i * per..(i + 1) * per]
                        .iter()
                        .map(|&v| v as f64)
                        .collect(),
                )
                .expect("slice length matches shape");
                let sc = &scores[i * 6..i * 6 + 6];
                Ok(FeatureWindow {
                    subject_id,
                    start_index: starts[i] as usize,
                    values,
                    risk: Some(RiskBreakdown {
                        temp_score: sc[0] as f64,
                        sound_score: sc[1] as f64,
                        light_score: sc[2] as f64,
                        cognitive_score: sc[3] as f64,
                        stress_score: sc[4] as f64,
                        overall_score: sc[5] as f64,
                        label,
                    }),
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabeledDataset { windows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn load(path: &Path) -> Result<LabeledDataset> {
        Self::from_container(&Container::read(path)?)
    }

    /// One row per window: ids, label, component scores and the window's mean
    /// standardized features.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(
            out,
            "subject_id,start_index,label,temp_score,sound_score,light_score,cognitive_score,stress_score,overall_score"
        )
        .map_err(io)?;
        for name in risk::FEATURE_NAMES {
            write!(out, ",mean_z_{name}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for w in &self.windows {
            let Some(r) = w.risk else { continue };
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                w.subject_id,
                w.start_index,
                r.label,
                r.temp_score,
                r.sound_score,
                r.light_score,
                r.cognitive_score,
                r.stress_score,
                r.overall_score
            )
            .map_err(io)?;
            for m in w.values.mean_axis(Axis(0)).expect("non-empty window") {
                write!(out, ",{m}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Subject-level train/validation partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_subjects: BTreeSet<String>,
    pub val_subjects: BTreeSet<String>,
    pub seed: u64,
}

impl DatasetSplit {
    /// Window indices on each side.
    pub fn partition(&self, dataset: &LabeledDataset) -> (Vec<usize>, Vec<usize>) {
        (
            dataset.indices_for(&self.train_subjects),
            dataset.indices_for(&self.val_subjects),
        )
    }
}

/// Seeded shuffle of the (sorted, de-duplicated) subjects; the first
/// `floor(ratio * n)` go to training.
pub fn split_by_subject(subject_ids: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    let mut ids: Vec<String> = subject_ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < 2 {
        return Err(Error::TooFew {
            what: "subjects",
            needed: 2,
            got: ids.len(),
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!("split ratio {ratio} outside (0, 1)")));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * ids.len() as f64).floor() as usize).clamp(1, ids.len() - 1);
    let val = ids.split_off(n_train);
    Ok(DatasetSplit {
        train_subjects: ids.into_iter().collect(),
        val_subjects: val.into_iter().collect(),
        seed,
    })
}

/// Subject-agnostic shuffle of window indices `0..n`. Windows of one subject land on
/// both sides; only the leakage experiment should use this.
pub fn random_window_split(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::TooFew {
            what: "windows",
            needed: 2,
            got: n,
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::validation(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64).floor() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str, t: i64, hr: f64) -> SensorSample {
        SensorSample {
            subject_id: id.into(),
            timestamp_s: t,
            heart_rate_bpm: hr,
            gsr_us: 2.0,
            temperature_c: 22.0,
            light_lux: 5000.0,
            sound_db: 25.0,
        }
    }

    #[test]
    fn clean_identity_and_deletion() {
        let series = SubjectSeries::new("a", (0..3).map(|t| s("a", t, 70.0)).collect());
        let c = clean(series.clone()).unwrap();
        assert_eq!(c.series, series);
        assert_eq!(c.dropped, 0);

        let mut samples: Vec<_> = (0..3).map(|t| s("a", t, 70.0)).collect();
        samples[1].gsr_us = f64::NAN;
        let c = clean(SubjectSeries::new("a", samples)).unwrap();
        assert_eq!(c.dropped, 1);
        let ts: Vec<_> = c.series.samples.iter().map(|s| s.timestamp_s).collect();
        assert_eq!(ts, vec![0, 1]);

        let samples = (0..3).map(|t| s("a", t, f64::NAN)).collect();
        assert!(matches!(
            clean(SubjectSeries::new("a", samples)),
            Err(Error::EmptySeries(_))
        ));
    }

    #[test]
    fn zscore_examples() {
        let m = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let (z, stats) = zscore_columns(m.view());
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[[0, 0]] + expected).abs() < 1e-12);
        assert!(z[[1, 0]].abs() < 1e-15);
        assert!((z[[2, 0]] - expected).abs() < 1e-12);
        assert!((z[[2, 0]] - 1.22474).abs() < 1e-5);
        assert_eq!(z.column(1).to_vec(), vec![0.0; 3]);
        assert_eq!(stats[0].mean, 2.0);
        assert!((stats[0].std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let (zz, _) = zscore_columns(z.view());
        let st = FeatureStats::of(&zz.column(0).to_vec());
        assert!(st.mean.abs() < 1e-9 && (st.std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_per_subject(&[60.0, 80.0, 100.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_per_subject(&[70.0, 70.0]).unwrap(), vec![0.5, 0.5]);
        assert!(minmax_per_subject(&[]).is_err());
        let v = minmax_per_subject(&[3.3, -1.7, 9.1, 0.2]).unwrap();
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 1.0);
    }

    fn standardized(len: usize) -> Standardized {
        let series = SubjectSeries::new("a", (0..len as i64).map(|t| s("a", t, 60.0 + t as f64)).collect());
        zscore_per_subject(&series).unwrap()
    }

    #[test]
    fn segment_counts() {
        assert_eq!(segment(&standardized(30), 30, 1).unwrap().len(), 1);
        assert!(matches!(
            segment(&standardized(29), 30, 1),
            Err(Error::SeriesTooShort { len: 29, window: 30 })
        ));
        let w = segment(&standardized(2580), 30, 1).unwrap();
        assert_eq!(w.len(), 2551);
        assert_eq!(w[7].start_index, 7);
        assert_eq!(w[7].values.dim(), (30, 5));
        assert_eq!(window_count(2580, 30), 2551);
        assert_eq!(window_count(10, 30), 0);
    }

    #[test]
    fn label_windows_rejects_out_of_range() {
        let st = standardized(40);
        let raw = SubjectSeries::new("a", (0..35).map(|t| s("a", t, 70.0)).collect());
        let windows = segment(&st, 30, 1).unwrap();
        let n = vec![0.5; 35];
        assert!(matches!(
            label_windows(windows, &raw, &n, &n, &ScoringConfig::default()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn subject_split_examples() {
        let ids: Vec<String> = (0..14).map(|i| format!("S{i:02}")).collect();
        let a = split_by_subject(&ids, 0.8, 7).unwrap();
        assert_eq!(a.train_subjects.len(), 11);
        assert_eq!(a.val_subjects.len(), 3);
        assert!(a.train_subjects.is_disjoint(&a.val_subjects));
        assert_eq!(a, split_by_subject(&ids, 0.8, 7).unwrap());

        let two = split_by_subject(&ids[..2], 0.8, 1).unwrap();
        assert_eq!((two.train_subjects.len(), two.val_subjects.len()), (1, 1));
        assert!(split_by_subject(&ids[..1], 0.8, 1).is_err());
    }

    #[test]
    fn random_split_examples() {
        let (a, b) = random_window_split(101, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (80, 21));
        assert_eq!((a.clone(), b.clone()), random_window_split(101, 0.8, 3).unwrap());
        let mut all: Vec<_> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert!(random_window_split(1, 0.8, 3).is_err());
    }
}
