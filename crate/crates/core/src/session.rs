//! Session-level inference shared by the inference server and offline assessment:
//! standardize the session on its own statistics, window it, classify every window
//! and reduce the window predictions to one verdict.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelBundle, Prediction};
use crate::pipeline::{zscore_columns, WINDOW};
use crate::risk::{RiskLabel, FEATURE_NAMES, NUM_FEATURES};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Most frequent window label; ties go to the higher risk.
    #[default]
    Majority,
    /// Highest-risk label predicted for any window.
    MaxRisk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionVerdict {
    pub label: RiskLabel,
    /// Mean winning-class probability over the windows that voted for the winner.
    pub confidence: f64,
    pub window_count: usize,
    /// Share of windows predicted as each label.
    pub per_class_fraction: BTreeMap<RiskLabel, f64>,
    pub model_fingerprint: String,
}

/// Reduces per-window predictions to a verdict. `labels` maps class index to label.
pub fn aggregate_verdict(
    labels: &[RiskLabel],
    predictions: &[Prediction],
    aggregation: Aggregation,
    model_fingerprint: &str,
) -> Result<SessionVerdict> {
    if predictions.is_empty() {
        return Err(Error::validation("no window predictions to aggregate"));
    }
    let mut votes: BTreeMap<RiskLabel, (usize, f64)> = BTreeMap::new();
    for p in predictions {
        let label = *labels
            .get(p.class)
            .ok_or_else(|| Error::validation(format!("class {} has no label", p.class)))?;
        let e = votes.entry(label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += p.confidence;
    }
    // BTreeMap iterates in ascending risk, so `>=` lets the higher risk win ties.
    let winner = match aggregation {
        Aggregation::Majority => votes
            .iter()
            .fold(None, |best: Option<(RiskLabel, usize)>, (&l, &(n, _))| match best {
                Some((_, bn)) if bn > n => best,
                _ => Some((l, n)),
            })
            .map(|(l, _)| l),
        Aggregation::MaxRisk => votes.keys().next_back().copied(),
    }
    .expect("at least one vote");
    let (n_win, conf_sum) = votes[&winner];
    let total = predictions.len() as f64;
    let per_class_fraction = RiskLabel::ALL
        .iter()
        .map(|&l| (l, votes.get(&l).map_or(0.0, |v| v.0 as f64 / total)))
        .collect();
    Ok(SessionVerdict {
        label: winner,
        confidence: conf_sum / n_win as f64,
        window_count: predictions.len(),
        per_class_fraction,
        model_fingerprint: model_fingerprint.to_string(),
    })
}

/// Checks length and finiteness of a raw session (`[hr, gsr, temp, lux, sound]` rows).
pub fn validate_session(samples: &[[f64; NUM_FEATURES]]) -> Result<()> {
    if samples.len() < WINDOW {
        return Err(Error::TooFew {
            what: "samples (one full window)",
            needed: WINDOW,
            got: samples.len(),
        });
    }
    for (i, row) in samples.iter().enumerate() {
        if let Some(f) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite {} at sample index {i}",
                FEATURE_NAMES[f]
            )));
        }
    }
    Ok(())
}

/// Z-scores every feature over the session itself (zero-variance features become 0).
pub fn standardize_session(samples: &[[f64; NUM_FEATURES]]) -> Array2<f64> {
    let raw = Array2::from_shape_fn((samples.len(), NUM_FEATURES), |(i, f)| samples[i][f]);
    zscore_columns(raw.view()).0
}

/// Per-window predictions for a raw session.
pub fn predict_session<F: Scalar>(
    bundle: &ModelBundle<F>,
    samples: &[[f64; NUM_FEATURES]],
) -> Result<Vec<Prediction>> {
    validate_session(samples)?;
    let z = standardize_session(samples);
    let windows: Vec<_> = z.windows((WINDOW, NUM_FEATURES)).into_iter().collect();
    bundle.predict(&windows)
}

/// Standardize, window, classify and aggregate one session.
pub fn assess_session<F: Scalar>(
    bundle: &ModelBundle<F>,
    model_fingerprint: &str,
    samples: &[[f64; NUM_FEATURES]],
    aggregation: Aggregation,
) -> Result<SessionVerdict> {
    let preds = predict_session(bundle, samples)?;
    aggregate_verdict(&bundle.labels, &preds, aggregation, model_fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RiskLabel::*;

    fn pred(class: usize, conf: f64) -> Prediction {
        let mut probabilities = vec![(1.0 - conf) / 3.0; 4];
        probabilities[class] = conf;
        Prediction {
            class,
            confidence: conf,
            probabilities,
        }
    }

    #[test]
    fn unanimous() {
        let v = aggregate_verdict(&RiskLabel::ALL, &[pred(1, 0.6), pred(1, 0.8)], Aggregation::Majority, "fp").unwrap();
        assert_eq!(v.label, ShowWarning);
        assert!((v.confidence - 0.7).abs() < 1e-12);
        assert_eq!(v.per_class_fraction[&ShowWarning], 1.0);
        assert_eq!(v.per_class_fraction[&RunAsUsual], 0.0);
        assert_eq!(v.window_count, 2);
    }

    #[test]
    fn tie_goes_to_higher_risk() {
        let p = [pred(1, 0.9), pred(2, 0.5), pred(1, 0.9), pred(2, 0.7)];
        let v = aggregate_verdict(&RiskLabel::ALL, &p, Aggregation::Majority, "fp").unwrap();
        assert_eq!(v.label, LimitAccess);
        assert!((v.confidence - 0.6).abs() < 1e-12);
    }

    #[test]
    fn max_risk_mode() {
        let p = [pred(0, 0.9), pred(0, 0.9), pred(3, 0.4)];
        let v = aggregate_verdict(&RiskLabel::ALL, &p, Aggregation::MaxRisk, "fp").unwrap();
        assert_eq!(v.label, InformBackupPerson);
        assert_eq!(v.confidence, 0.4);
        let v = aggregate_verdict(&RiskLabel::ALL, &p, Aggregation::Majority, "fp").unwrap();
        assert_eq!(v.label, RunAsUsual);
    }

    #[test]
    fn empty_and_short_inputs() {
        assert!(aggregate_verdict(&RiskLabel::ALL, &[], Aggregation::Majority, "fp").is_err());
        assert!(matches!(
            validate_session(&[[70.0, 2.0, 22.0, 500.0, 40.0]; 29]),
            Err(Error::TooFew { got: 29, .. })
        ));
        let mut s = vec![[70.0, 2.0, 22.0, 500.0, 40.0]; 30];
        s[17][3] = f64::NAN;
        let err = validate_session(&s).unwrap_err().to_string();
        assert!(err.contains("17") && err.contains("light_lux"), "{err}");
    }

    #[test]
    fn verdict_json_shape() {
        let v = aggregate_verdict(&RiskLabel::ALL, &[pred(1, 0.87)], Aggregation::Majority, "abc").unwrap();
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(j["label"], "Show warning");
        assert_eq!(j["window_count"], 1);
        assert_eq!(j["per_class_fraction"]["Show warning"], 1.0);
        assert_eq!(j["model_fingerprint"], "abc");
        let back: SessionVerdict = serde_json::from_value(j).unwrap();
        assert_eq!(back, v);
    }
}
