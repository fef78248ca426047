//! Deterministic risk labeling: environmental score tables, cognitive and stress
//! scores, the weighted overall score, and the four-level label.
//!
//! All band tables are lower-inclusive and upper-exclusive. The last label interval
//! is closed so that an overall score of exactly 1.0 is still labeled.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of model input features.
pub const NUM_FEATURES: usize = 5;

/// Canonical feature order used by every matrix in the crate.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "heart_rate_bpm",
    "gsr_us",
    "temperature_c",
    "light_lux",
    "sound_db",
];

pub const HR: usize = 0;
pub const GSR: usize = 1;
pub const TEMP: usize = 2;
pub const LUX: usize = 3;
pub const SOUND: usize = 4;

/// One 1 Hz reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub subject_id: String,
    pub timestamp_s: i64,
    pub heart_rate_bpm: f64,
    pub gsr_us: f64,
    pub temperature_c: f64,
    pub light_lux: f64,
    pub sound_db: f64,
}

impl SensorSample {
    pub fn features(&self) -> [f64; NUM_FEATURES] {
        [
            self.heart_rate_bpm,
            self.gsr_us,
            self.temperature_c,
            self.light_lux,
            self.sound_db,
        ]
    }

    /// A sample with any non-finite field is dropped during cleaning.
    pub fn is_corrupt(&self) -> bool {
        self.features().iter().any(|v| !v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLabel {
    #[serde(rename = "Run as usual")]
    RunAsUsual,
    #[serde(rename = "Show warning")]
    ShowWarning,
    #[serde(rename = "Limit access")]
    LimitAccess,
    #[serde(rename = "Inform backup person")]
    InformBackupPerson,
}

impl RiskLabel {
    /// All labels in ascending risk order; this is also the class index order.
    pub const ALL: [RiskLabel; 4] = [
        RiskLabel::RunAsUsual,
        RiskLabel::ShowWarning,
        RiskLabel::LimitAccess,
        RiskLabel::InformBackupPerson,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RiskLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::RunAsUsual => "Run as usual",
            RiskLabel::ShowWarning => "Show warning",
            RiskLabel::LimitAccess => "Limit access",
            RiskLabel::InformBackupPerson => "Inform backup person",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation(format!("unknown risk label `{s}`")))
    }
}

/// One row of a score table. `upper == None` marks the open-ended last band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub upper: Option<f64>,
    pub score: f64,
}

impl Band {
    const fn to(upper: f64, score: f64) -> Band {
        Band {
            upper: Some(upper),
            score,
        }
    }

    const fn rest(score: f64) -> Band {
        Band { upper: None, score }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub temp_bands: Vec<Band>,
    pub sound_bands: Vec<Band>,
    pub light_bands: Vec<Band>,
    pub w_hr: f64,
    pub w_gsr: f64,
    pub w_stress: f64,
    pub w_cognitive_complement: f64,
    pub label_thresholds: [f64; 3],
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            temp_bands: vec![
                Band::to(18.0, 0.3),
                Band::to(20.0, 0.6),
                Band::to(24.0, 1.0),
                Band::to(26.0, 0.8),
                Band::to(28.0, 0.5),
                Band::rest(0.2),
            ],
            sound_bands: vec![
                Band::to(30.0, 1.0),
                Band::to(50.0, 0.9),
                Band::to(60.0, 0.7),
                Band::to(75.0, 0.4),
                Band::rest(0.2),
            ],
            light_bands: vec![
                Band::to(500.0, 0.2),
                Band::to(2000.0, 0.4),
                Band::to(10000.0, 1.0),
                Band::to(20000.0, 0.7),
                Band::rest(0.3),
            ],
            w_hr: 0.7,
            w_gsr: 0.3,
            w_stress: 0.7,
            w_cognitive_complement: 0.3,
            label_thresholds: [0.25, 0.50, 0.75],
        }
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        validate_bands("temp_bands", &self.temp_bands)?;
        validate_bands("sound_bands", &self.sound_bands)?;
        validate_bands("light_bands", &self.light_bands)?;
        for (name, w) in [
            ("w_hr", self.w_hr),
            ("w_gsr", self.w_gsr),
            ("w_stress", self.w_stress),
            ("w_cognitive_complement", self.w_cognitive_complement),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("{name} = {w} outside [0, 1]")));
            }
        }
        if (self.w_hr + self.w_gsr - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config("w_hr + w_gsr must equal 1".into()));
        }
        if (self.w_stress + self.w_cognitive_complement - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(
                "w_stress + w_cognitive_complement must equal 1".into(),
            ));
        }
        let t = self.label_thresholds;
        if !(0.0 < t[0] && t[0] < t[1] && t[1] < t[2] && t[2] < 1.0) {
            return Err(Error::Config(format!(
                "label_thresholds {t:?} must be strictly increasing inside (0, 1)"
            )));
        }
        Ok(())
    }
}

fn validate_bands(name: &str, bands: &[Band]) -> Result<()> {
    let Some((last, init)) = bands.split_last() else {
        return Err(Error::Config(format!("{name} is empty")));
    };
    if last.upper.is_some() {
        return Err(Error::Config(format!("{name}: last band must be open-ended")));
    }
    let mut prev = f64::NEG_INFINITY;
    for b in init {
        let Some(upper) = b.upper else {
            return Err(Error::Config(format!(
                "{name}: only the last band may be open-ended"
            )));
        };
        if !upper.is_finite() || upper <= prev {
            return Err(Error::Config(format!(
                "{name}: band bounds must be finite and strictly increasing"
            )));
        }
        prev = upper;
    }
    if bands.iter().any(|b| !(0.0..=1.0).contains(&b.score)) {
        return Err(Error::Config(format!("{name}: scores must lie in [0, 1]")));
    }
    Ok(())
}

fn lookup(bands: &[Band], x: f64) -> f64 {
    bands
        .iter()
        .find(|b| b.upper.is_none_or(|u| x < u))
        .map(|b| b.score)
        // validated tables always end with an open band
        .unwrap_or(f64::NAN)
}

fn check_finite(what: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be finite, got {x}")))
    }
}

fn check_non_negative(what: &str, x: f64) -> Result<()> {
    check_finite(what, x)?;
    if x < 0.0 {
        return Err(Error::validation(format!("{what} must be >= 0, got {x}")));
    }
    Ok(())
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must lie in [0, 1], got {x}")))
    }
}

pub fn score_temperature(celsius: f64, cfg: &ScoringConfig) -> Result<f64> {
    check_finite("temperature", celsius)?;
    Ok(lookup(&cfg.temp_bands, celsius))
}

pub fn score_sound(db: f64, cfg: &ScoringConfig) -> Result<f64> {
    check_non_negative("sound level", db)?;
    Ok(lookup(&cfg.sound_bands, db))
}

pub fn score_light(lux: f64, cfg: &ScoringConfig) -> Result<f64> {
    check_non_negative("illuminance", lux)?;
    Ok(lookup(&cfg.light_bands, lux))
}

/// Mean of the three environmental scores.
pub fn cognitive_score(temp: f64, sound: f64, light: f64) -> Result<f64> {
    check_unit("temperature score", temp)?;
    check_unit("sound score", sound)?;
    check_unit("light score", light)?;
    Ok((temp + sound + light) / 3.0)
}

/// Weighted physiological arousal from per-subject min-max normalized HR and GSR.
pub fn stress_score(hr_norm: f64, gsr_norm: f64, cfg: &ScoringConfig) -> Result<f64> {
    check_unit("normalized heart rate", hr_norm)?;
    check_unit("normalized GSR", gsr_norm)?;
    Ok(cfg.w_hr * hr_norm + cfg.w_gsr * gsr_norm)
}

pub fn overall_score(stress: f64, cognitive: f64, cfg: &ScoringConfig) -> Result<f64> {
    check_unit("stress score", stress)?;
    check_unit("cognitive score", cognitive)?;
    let s = cfg.w_stress * stress + cfg.w_cognitive_complement * (1.0 - cognitive);
    Ok(s.clamp(0.0, 1.0))
}

pub fn assign_label(overall: f64, cfg: &ScoringConfig) -> Result<RiskLabel> {
    check_unit("overall score", overall)?;
    let [a, b, c] = cfg.label_thresholds;
    Ok(if overall < a {
        RiskLabel::RunAsUsual
    } else if overall < b {
        RiskLabel::ShowWarning
    } else if overall < c {
        RiskLabel::LimitAccess
    } else {
        RiskLabel::InformBackupPerson
    })
}

/// Component scores for one sample or window, plus its label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub temp_score: f64,
    pub sound_score: f64,
    pub light_score: f64,
    pub cognitive_score: f64,
    pub stress_score: f64,
    pub overall_score: f64,
    pub label: RiskLabel,
}

/// Scores a single reading given its already-normalized HR and GSR.
pub fn assess_sample(
    sample: &SensorSample,
    hr_norm: f64,
    gsr_norm: f64,
    cfg: &ScoringConfig,
) -> Result<RiskBreakdown> {
    let temp_score = score_temperature(sample.temperature_c, cfg)?;
    let sound_score = score_sound(sample.sound_db, cfg)?;
    let light_score = score_light(sample.light_lux, cfg)?;
    let cognitive = cognitive_score(temp_score, sound_score, light_score)?;
    let stress = stress_score(hr_norm, gsr_norm, cfg)?;
    let overall = overall_score(stress, cognitive, cfg)?;
    Ok(RiskBreakdown {
        temp_score,
        sound_score,
        light_score,
        cognitive_score: cognitive,
        stress_score: stress,
        overall_score: overall,
        label: assign_label(overall, cfg)?,
    })
}

/// Scores a window: every component is the window mean of the per-sample values and
/// the label is assigned from the mean overall score.
pub fn assess_window(
    raw: &[SensorSample],
    norm_hr: &[f64],
    norm_gsr: &[f64],
    cfg: &ScoringConfig,
) -> Result<RiskBreakdown> {
    if raw.is_empty() {
        return Err(Error::validation("cannot assess an empty window"));
    }
    if norm_hr.len() != raw.len() {
        return Err(Error::LengthMismatch {
            left: raw.len(),
            right: norm_hr.len(),
        });
    }
    if norm_gsr.len() != raw.len() {
        return Err(Error::LengthMismatch {
            left: raw.len(),
            right: norm_gsr.len(),
        });
    }

    let mut sums = [0.0f64; 6];
    for ((s, &h), &g) in raw.iter().zip(norm_hr).zip(norm_gsr) {
        let b = assess_sample(s, h, g, cfg)?;
        for (acc, v) in sums.iter_mut().zip([
            b.temp_score,
            b.sound_score,
            b.light_score,
            b.cognitive_score,
            b.stress_score,
            b.overall_score,
        ]) {
            *acc += v;
        }
    }
    let n = raw.len() as f64;
    let [t, s, l, c, st, o] = sums.map(|v| v / n);
    // means of values in [0, 1] can drift past the ends by an ulp
    let overall = o.clamp(0.0, 1.0);
    Ok(RiskBreakdown {
        temp_score: t,
        sound_score: s,
        light_score: l,
        cognitive_score: c,
        stress_score: st,
        overall_score: overall,
        label: assign_label(overall, cfg)?,
    })
}
