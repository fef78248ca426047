//! Synthetic telemetry: scenario-driven sample generation and corpus export.
//!
//! Each feature is `phase target (ramped across boundaries) + subject offset + AR(1)
//! noise`, clipped to a plausible range. The AR(1) innovations are scaled by
//! `sqrt(1 - phi^2)` so a phase's `noise` value is the stationary noise std.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{SensorSample, NUM_FEATURES};

/// A value per feature, named like the CSV and wire format.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSet {
    pub heart_rate_bpm: f64,
    pub gsr_us: f64,
    pub temperature_c: f64,
    pub light_lux: f64,
    pub sound_db: f64,
}

impl FeatureSet {
    pub const fn new(hr: f64, gsr: f64, temp: f64, lux: f64, sound: f64) -> Self {
        FeatureSet {
            heart_rate_bpm: hr,
            gsr_us: gsr,
            temperature_c: temp,
            light_lux: lux,
            sound_db: sound,
        }
    }

    pub fn to_array(self) -> [f64; NUM_FEATURES] {
        [
            self.heart_rate_bpm,
            self.gsr_us,
            self.temperature_c,
            self.light_lux,
            self.sound_db,
        ]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        FeatureSet::new(a[0], a[1], a[2], a[3], a[4])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub name: String,
    pub duration_s: u64,
    pub target: FeatureSet,
    /// Stationary std of the AR(1) noise per feature.
    pub noise: FeatureSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub phases: Vec<Phase>,
    pub baseline_offset: FeatureSet,
    /// AR(1) persistence in [0, 1).
    pub phi: f64,
    /// Length of the linear ramp at the start of every phase after the first.
    pub ramp_s: f64,
    pub clip_min: FeatureSet,
    pub clip_max: FeatureSet,
    pub seed: u64,
    /// Period of a sinusoidal drift added to every target (an HVAC or lighting
    /// cycle). 0 disables it.
    pub cycle_period_s: f64,
    pub cycle_amplitude: FeatureSet,
}

pub const DEFAULT_PHI: f64 = 0.9;
pub const DEFAULT_RAMP_S: f64 = 10.0;
pub const CLIP_MIN: FeatureSet = FeatureSet::new(40.0, 0.1, 10.0, 0.0, 20.0);
pub const CLIP_MAX: FeatureSet = FeatureSet::new(180.0, 20.0, 40.0, 120_000.0, 110.0);

pub const CALM: FeatureSet = FeatureSet::new(70.0, 2.0, 22.0, 5_000.0, 40.0);
pub const STRESS: FeatureSet = FeatureSet::new(100.0, 8.0, 29.0, 15_000.0, 80.0);

impl Default for Scenario {
    fn default() -> Self {
        Scenario::two_phase()
    }
}

impl Scenario {
    /// 90 s calm followed by 90 s of stress.
    pub fn two_phase() -> Scenario {
        Scenario {
            name: "two-phase".into(),
            phases: vec![
                Phase {
                    name: "calm".into(),
                    duration_s: 90,
                    target: CALM,
                    noise: FeatureSet::new(2.5, 0.25, 0.2, 300.0, 2.5),
                },
                Phase {
                    name: "stress".into(),
                    duration_s: 90,
                    target: STRESS,
                    noise: FeatureSet::new(4.0, 0.6, 0.3, 800.0, 4.0),
                },
            ],
            baseline_offset: FeatureSet::default(),
            phi: DEFAULT_PHI,
            ramp_s: DEFAULT_RAMP_S,
            clip_min: CLIP_MIN,
            clip_max: CLIP_MAX,
            seed: 0,
            cycle_period_s: 0.0,
            cycle_amplitude: FeatureSet::default(),
        }
    }

    /// Built-in scenarios by name: `two-phase`, `calm`, `stress`.
    pub fn builtin(name: &str) -> Option<Scenario> {
        let mut s = Scenario::two_phase();
        match name {
            "two-phase" => Some(s),
            "calm" | "stress" => {
                let idx = usize::from(name == "stress");
                let mut p = s.phases.swap_remove(idx);
                p.duration_s = 180;
                s.phases = vec![p];
                s.name = name.into();
                Some(s)
            }
            _ => None,
        }
    }

    pub fn total_duration_s(&self) -> u64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    pub fn with_duration(mut self, duration_s: u64) -> Scenario {
        // stretch or trim the last phases to fit
        let mut remaining = duration_s;
        let mut phases = Vec::new();
        for mut p in std::mem::take(&mut self.phases) {
            if remaining == 0 {
                break;
            }
            p.duration_s = p.duration_s.min(remaining);
            remaining -= p.duration_s;
            phases.push(p);
        }
        if let Some(last) = phases.last_mut() {
            last.duration_s += remaining;
        }
        self.phases = phases;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("scenario has no phases".into()));
        }
        if !(0.0..1.0).contains(&self.phi) {
            return Err(Error::Config(format!("phi = {} outside [0, 1)", self.phi)));
        }
        if !(self.cycle_period_s >= 0.0 && self.cycle_period_s.is_finite())
            || self.cycle_amplitude.to_array().iter().any(|a| !(a.is_finite() && *a >= 0.0))
        {
            return Err(Error::Config("cycle period and amplitudes must be finite and >= 0".into()));
        }
        if !(self.ramp_s >= 0.0) {
            return Err(Error::Config("ramp_s must be >= 0".into()));
        }
        let (lo, hi) = (self.clip_min.to_array(), self.clip_max.to_array());
        for p in &self.phases {
            if p.duration_s == 0 {
                return Err(Error::Config(format!("phase `{}` has zero duration", p.name)));
            }
            let t = p.target.to_array();
            let n = p.noise.to_array();
            for f in 0..NUM_FEATURES {
                if !(lo[f] <= t[f] && t[f] <= hi[f]) {
                    return Err(Error::Config(format!(
                        "phase `{}`: target {} outside clip range [{}, {}]",
                        p.name, t[f], lo[f], hi[f]
                    )));
                }
                if !(n[f] >= 0.0 && n[f].is_finite()) {
                    return Err(Error::Config(format!("phase `{}`: bad noise scale", p.name)));
                }
            }
        }
        Ok(())
    }

    /// Phase index containing second `t`.
    fn phase_at(&self, t: u64) -> Option<(usize, u64)> {
        let mut start = 0;
        for (i, p) in self.phases.iter().enumerate() {
            if t < start + p.duration_s {
                return Some((i, t - start));
            }
            start += p.duration_s;
        }
        None
    }

    /// Noise-free value at second `t`: phase target ramped from the previous phase's
    /// target over the first `ramp_s` seconds, plus the baseline offset.
    pub fn target_at(&self, t: u64) -> Option<[f64; NUM_FEATURES]> {
        let (i, offset) = self.phase_at(t)?;
        let cur = self.phases[i].target.to_array();
        let base = self.baseline_offset.to_array();
        let frac = if i > 0 && (offset as f64) < self.ramp_s {
            offset as f64 / self.ramp_s
        } else {
            1.0
        };
        let prev = if i > 0 {
            self.phases[i - 1].target.to_array()
        } else {
            cur
        };
        let wave = if self.cycle_period_s > 0.0 {
            (std::f64::consts::TAU * t as f64 / self.cycle_period_s).sin()
        } else {
            0.0
        };
        let amp = self.cycle_amplitude.to_array();
        Some(std::array::from_fn(|f| {
            prev[f] + (cur[f] - prev[f]) * frac + base[f] + amp[f] * wave
        }))
    }
}

/// Sequential sample source for one subject; holds the AR(1) noise state.
#[derive(Clone, Debug)]
pub struct Generator {
    scenario: Scenario,
    subject_id: String,
    rng: ChaCha8Rng,
    noise: [f64; NUM_FEATURES],
    next_t: u64,
}

impl Generator {
    pub fn new(scenario: Scenario, subject_id: impl Into<String>) -> Result<Generator> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        // start from the stationary distribution of the first phase
        let scale = scenario.phases[0].noise.to_array();
        let noise = std::array::from_fn(|f| scale[f] * rng.sample::<f64, _>(StandardNormal));
        Ok(Generator {
            scenario,
            subject_id: subject_id.into(),
            rng,
            noise,
            next_t: 0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Sample for second `t`. The noise state advances once per call, so callers
    /// stream `t = 0, 1, 2, ...`.
    pub fn sample(&mut self, t: u64) -> Result<SensorSample> {
        let target = self.scenario.target_at(t).ok_or_else(|| {
            Error::validation(format!(
                "t = {t} s beyond scenario duration {} s",
                self.scenario.total_duration_s()
            ))
        })?;
        let (phase, _) = self.scenario.phase_at(t).expect("target_at succeeded");
        let scale = self.scenario.phases[phase].noise.to_array();
        let phi = self.scenario.phi;
        let innov = (1.0 - phi * phi).sqrt();
        if t > 0 {
            for f in 0..NUM_FEATURES {
                let eps: f64 = self.rng.sample(StandardNormal);
                self.noise[f] = phi * self.noise[f] + scale[f] * innov * eps;
            }
        }
        let (lo, hi) = (
            self.scenario.clip_min.to_array(),
            self.scenario.clip_max.to_array(),
        );
        let v: [f64; NUM_FEATURES] =
            std::array::from_fn(|f| (target[f] + self.noise[f]).clamp(lo[f], hi[f]));
        self.next_t = t + 1;
        Ok(SensorSample {
            subject_id: self.subject_id.clone(),
            timestamp_s: t as i64,
            heart_rate_bpm: v[0],
            gsr_us: v[1],
            temperature_c: v[2],
            light_lux: v[3],
            sound_db: v[4],
        })
    }
}

impl Iterator for Generator {
    type Item = SensorSample;

    fn next(&mut self) -> Option<SensorSample> {
        let t = self.next_t;
        self.sample(t).ok()
    }
}

/// Template for a corpus phase; durations are drawn per occurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseTemplate {
    pub name: String,
    pub weight: f64,
    pub min_duration_s: u64,
    pub max_duration_s: u64,
    pub target: FeatureSet,
    pub noise: FeatureSet,
}

/// Parameters for generating a multi-subject corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioLibrary {
    /// Every session opens with this phase (a relaxed baseline).
    pub warmup: PhaseTemplate,
    pub phases: Vec<PhaseTemplate>,
    /// Subject HR offsets are stratified across `[-hr_offset_span, +hr_offset_span]`.
    pub hr_offset_span: f64,
    /// Half-widths of the uniform per-subject offsets for the other features.
    pub offset_spread: FeatureSet,
    /// Per-subject multiplier range applied to deviations from the warmup target.
    pub reactivity: (f64, f64),
    /// Per-subject, per-feature multiplier range for the phase noise scales.
    pub noise_scale: (f64, f64),
    /// Each subject scales every phase weight by `exp(u)`, `u ~ U(-mix_spread, mix_spread)`.
    pub mix_spread: f64,
    pub phi: f64,
    /// When set, each subject draws its own noise persistence from this range
    /// instead of using `phi`.
    pub phi_range: Option<(f64, f64)>,
    /// Per-subject cycle period range; the cycle is off while every amplitude is 0.
    pub cycle_period_s: (f64, f64),
    pub cycle_amplitude: FeatureSet,
    pub ramp_s: f64,
    pub clip_min: FeatureSet,
    pub clip_max: FeatureSet,
}

impl Default for ScenarioLibrary {
    fn default() -> Self {
        let calm_noise = FeatureSet::new(3.0, 0.35, 0.3, 400.0, 3.0);
        let t = |name: &str, weight, target, noise| PhaseTemplate {
            name: name.into(),
            weight,
            min_duration_s: 90,
            max_duration_s: 300,
            target,
            noise,
        };
        ScenarioLibrary {
            warmup: PhaseTemplate {
                min_duration_s: 180,
                max_duration_s: 300,
                ..t("baseline", 0.0, CALM, calm_noise)
            },
            phases: vec![
                t("calm", 0.30, CALM, calm_noise),
                t(
                    "busy",
                    0.28,
                    FeatureSet::new(82.0, 4.0, 25.0, 1_200.0, 55.0),
                    FeatureSet::new(3.5, 0.45, 0.3, 150.0, 3.0),
                ),
                t(
                    "strained",
                    0.24,
                    FeatureSet::new(92.0, 6.0, 27.0, 15_000.0, 68.0),
                    FeatureSet::new(4.0, 0.6, 0.3, 900.0, 3.5),
                ),
                t(
                    "acute",
                    0.18,
                    FeatureSet::new(108.0, 10.0, 31.0, 300.0, 85.0),
                    FeatureSet::new(4.5, 0.8, 0.4, 60.0, 4.0),
                ),
            ],
            hr_offset_span: 12.0,
            offset_spread: FeatureSet::new(0.0, 0.6, 1.5, 800.0, 5.0),
            reactivity: (0.8, 1.2),
            mix_spread: 1.0,
            noise_scale: (0.5, 2.0),
            phi: DEFAULT_PHI,
            phi_range: None,
            cycle_period_s: (0.0, 0.0),
            cycle_amplitude: FeatureSet::default(),
            ramp_s: DEFAULT_RAMP_S,
            clip_min: CLIP_MIN,
            clip_max: CLIP_MAX,
        }
    }
}

impl ScenarioLibrary {
    /// Every subject works in their own room: wide temperature, light and noise
    /// baselines, a room-specific climate cycle and individual noise persistence.
    /// Subjects are easy to tell apart even after per-subject standardization,
    /// which is what a leaky random-window split exploits.
    pub fn distinct_rooms() -> Self {
        ScenarioLibrary {
            offset_spread: FeatureSet::new(0.0, 0.6, 4.0, 3_000.0, 14.0),
            phi_range: Some((0.3, 0.97)),
            cycle_period_s: (6.0, 24.0),
            cycle_amplitude: FeatureSet::new(0.0, 0.0, 1.0, 0.0, 5.0),
            ..ScenarioLibrary::default()
        }
    }

    /// Named presets: `default`, `distinct-rooms`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(ScenarioLibrary::default()),
            "distinct-rooms" => Some(ScenarioLibrary::distinct_rooms()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale.0 >= 0.0 && self.noise_scale.0 <= self.noise_scale.1) {
            return Err(Error::Config("noise_scale must be an ordered non-negative range".into()));
        }
        if !(self.mix_spread >= 0.0) {
            return Err(Error::Config("mix_spread must be >= 0".into()));
        }
        if let Some((a, b)) = self.phi_range {
            if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) || a > b {
                return Err(Error::Config("phi_range must be an ordered range inside [0, 1)".into()));
            }
        }
        let (c_lo, c_hi) = self.cycle_period_s;
        if self.cycle_amplitude.to_array().iter().any(|&a| a > 0.0) && !(c_lo > 0.0 && c_lo <= c_hi) {
            return Err(Error::Config("cycle_period_s must be a positive ordered range".into()));
        }
        if self.phases.is_empty() || self.phases.iter().all(|p| p.weight <= 0.0) {
            return Err(Error::Config("library needs at least one weighted phase".into()));
        }
        for p in std::iter::once(&self.warmup).chain(&self.phases) {
            if p.min_duration_s == 0 || p.min_duration_s > p.max_duration_s {
                return Err(Error::Config(format!("phase `{}`: bad duration range", p.name)));
            }
        }
        Ok(())
    }

    fn pick<'a>(&'a self, weights: &[f64], rng: &mut impl Rng) -> &'a PhaseTemplate {
        let total: f64 = weights.iter().sum();
        let mut x = rng.random_range(0.0..total);
        for (p, w) in self.phases.iter().zip(weights) {
            x -= w;
            if x < 0.0 {
                return p;
            }
        }
        self.phases.last().expect("validated non-empty")
    }

    /// The scenario for subject `index` of `n`, `duration_s` seconds long.
    pub fn subject_scenario(&self, index: usize, n: usize, duration_s: u64, seed: u64) -> Result<Scenario> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let strat = (index as f64 + rng.random::<f64>()) / n.max(1) as f64;
        let hr_offset = -self.hr_offset_span + 2.0 * self.hr_offset_span * strat;
        let spread = self.offset_spread.to_array();
        let mut offset = [0.0; NUM_FEATURES];
        offset[0] = hr_offset;
        for f in 1..NUM_FEATURES {
            offset[f] = if spread[f] > 0.0 {
                rng.random_range(-spread[f]..spread[f])
            } else {
                0.0
            };
        }
        let (r_lo, r_hi) = self.reactivity;
        let reactivity = if r_hi > r_lo { rng.random_range(r_lo..r_hi) } else { r_lo };
        let (n_lo, n_hi) = self.noise_scale;
        let noise_gain: [f64; NUM_FEATURES] =
            std::array::from_fn(|_| if n_hi > n_lo { rng.random_range(n_lo..n_hi) } else { n_lo });
        let base = self.warmup.target.to_array();
        let weights: Vec<f64> = self
            .phases
            .iter()
            .map(|p| {
                let u = if self.mix_spread > 0.0 {
                    rng.random_range(-self.mix_spread..self.mix_spread)
                } else {
                    0.0
                };
                p.weight.max(0.0) * u.exp()
            })
            .collect();
        let phi = match self.phi_range {
            Some((a, b)) if b > a => rng.random_range(a..b),
            Some((a, _)) => a,
            None => self.phi,
        };
        let cycling = self.cycle_amplitude.to_array().iter().any(|&a| a > 0.0);
        let cycle_period_s = match self.cycle_period_s {
            (a, b) if cycling && b > a => rng.random_range(a..b),
            (a, _) if cycling => a,
            _ => 0.0,
        };

        let (lo, hi) = (self.clip_min.to_array(), self.clip_max.to_array());
        let make = |tpl: &PhaseTemplate, duration_s: u64| {
            let t = tpl.target.to_array();
            // physiological features react with subject-specific gain
            let target: [f64; NUM_FEATURES] = std::array::from_fn(|f| {
                let v = if f < 2 { base[f] + reactivity * (t[f] - base[f]) } else { t[f] };
                // keep targets inside the clip range once offsets are added
                v.clamp(lo[f] - offset[f].min(0.0), hi[f] - offset[f].max(0.0))
            });
            let noise = tpl.noise.to_array();
            Phase {
                name: tpl.name.clone(),
                duration_s,
                target: FeatureSet::from_array(target),
                noise: FeatureSet::from_array(std::array::from_fn(|f| noise[f] * noise_gain[f])),
            }
        };

        let mut phases = Vec::new();
        let mut remaining = duration_s;
        let d = rng.random_range(self.warmup.min_duration_s..=self.warmup.max_duration_s);
        phases.push(make(&self.warmup, d.min(remaining)));
        remaining -= d.min(remaining);
        while remaining > 0 {
            let tpl = self.pick(&weights, &mut rng);
            let d = rng.random_range(tpl.min_duration_s..=tpl.max_duration_s).min(remaining);
            phases.push(make(tpl, d));
            remaining -= d;
        }
        Ok(Scenario {
            name: format!("subject-{index}"),
            phases,
            baseline_offset: FeatureSet::from_array(offset),
            phi,
            ramp_s: self.ramp_s,
            clip_min: self.clip_min,
            clip_max: self.clip_max,
            seed: rng.random(),
            cycle_period_s,
            cycle_amplitude: self.cycle_amplitude,
        })
    }
}

pub const CSV_HEADER: &str = "subject_id,timestamp_s,heart_rate_bpm,gsr_us,temperature_c,light_lux,sound_db";

pub fn subject_name(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// Every sample of an `n_subjects x minutes` corpus, subject by subject.
pub fn corpus_samples(
    n_subjects: usize,
    minutes: u64,
    library: &ScenarioLibrary,
    seed: u64,
) -> Result<Vec<Vec<SensorSample>>> {
    (0..n_subjects)
        .map(|i| {
            let sc = library.subject_scenario(i, n_subjects, minutes * 60, seed)?;
            Ok(Generator::new(sc, subject_name(i))?.collect())
        })
        .collect()
}

/// Writes a corpus in the pipeline CSV format with three decimals per value.
pub fn generate_corpus(
    path: &Path,
    n_subjects: usize,
    minutes: u64,
    library: &ScenarioLibrary,
    seed: u64,
) -> Result<usize> {
    let subjects = corpus_samples(n_subjects, minutes, library, seed)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut rows = 0;
    for s in subjects.iter().flatten() {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            s.subject_id, s.timestamp_s, s.heart_rate_bpm, s.gsr_us, s.temperature_c, s.light_lux, s.sound_db
        )
        .map_err(io)?;
        rows += 1;
    }
    out.flush().map_err(io)?;
    Ok(rows)
}
