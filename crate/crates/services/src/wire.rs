//! JSON bodies shared by the services and their clients.

use riskwatch_core::risk::NUM_FEATURES;
use riskwatch_core::{Aggregation, SensorSample};
use serde::{Deserialize, Serialize};

/// The five features of one reading, without subject or time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub heart_rate_bpm: f64,
    pub gsr_us: f64,
    pub temperature_c: f64,
    pub light_lux: f64,
    pub sound_db: f64,
}

impl Reading {
    pub fn to_array(self) -> [f64; NUM_FEATURES] {
        [
            self.heart_rate_bpm,
            self.gsr_us,
            self.temperature_c,
            self.light_lux,
            self.sound_db,
        ]
    }
}

impl From<&SensorSample> for Reading {
    fn from(s: &SensorSample) -> Self {
        Reading {
            heart_rate_bpm: s.heart_rate_bpm,
            gsr_us: s.gsr_us,
            temperature_c: s.temperature_c,
            light_lux: s.light_lux,
            sound_db: s.sound_db,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub samples: Vec<Reading>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub model_fingerprint: String,
}
