//! Human-risk assessment over physiological and environmental sensor streams.
//!
//! The crate is organised bottom-up:
//!
//! * [`risk`] turns raw readings into component scores and a [`RiskLabel`].
//! * [`pipeline`] ingests CSV sessions, cleans, standardizes, windows and labels them.
//! * [`nn`] is a CNN-LSTM classifier with hand-written backpropagation through time.
//! * [`eval`] holds metrics, grouped cross-validation and the split-leakage experiment.
//! * [`session`] is the shared inference path: standardize a session, window it,
//!   classify every window and reduce to one [`SessionVerdict`].
//! * [`sensor`] is the synthetic telemetry generator used for demos and tests.
//!
//! Numeric code in [`nn`] is generic over [`Scalar`]; training uses `f32` and gradient
//! checking uses `f64`. The aliases below name the common instantiations.

pub mod container;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod risk;
pub mod scalar;
pub mod sensor;
pub mod session;

pub use error::{Error, Result};
pub use risk::{RiskBreakdown, RiskLabel, ScoringConfig, SensorSample};
pub use scalar::Scalar;
pub use session::{Aggregation, SessionVerdict};

/// Model parameters at training/serving precision.
pub type Params32 = nn::ModelParams<f32>;
/// Model parameters at gradient-check precision.
pub type Params64 = nn::ModelParams<f64>;
/// A serving bundle as stored on disk.
pub type Bundle = nn::ModelBundle<f32>;
/// A double-precision bundle, mostly useful for numerical verification.
pub type Bundle64 = nn::ModelBundle<f64>;
