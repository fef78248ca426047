//! Central finite-difference verification of [`backward`].

use ndarray::ArrayView3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward_infer, forward_train, loss};
use super::{init_model, ModelConfig, ModelParams, TENSOR_NAMES};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub tensor: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn objective(params: &ModelParams<f64>, cfg: &ModelConfig, x: ArrayView3<f64>, labels: &[usize]) -> Result<f64> {
    let probs = forward_infer(params, cfg, x)?;
    loss(probs.view(), labels, params, cfg.l2_lambda, None)
}

/// Compares `analytic` against central differences of the loss on up to
/// `per_tensor` randomly chosen coordinates of every tensor (all of them when the
/// tensor is smaller).
pub fn compare_gradients(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    x: ArrayView3<f64>,
    labels: &[usize],
    analytic: &ModelParams<f64>,
    epsilon: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let analytic = analytic.slices();
    let mut tensors = Vec::new();
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let len = analytic[ti].len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, per_tensor).into_vec()
        };
        let mut worst = 0.0f64;
        for &c in &coords {
            let orig = probe.slices()[ti][c];
            probe.slices_mut()[ti][c] = orig + epsilon;
            let up = objective(&probe, cfg, x, labels)?;
            probe.slices_mut()[ti][c] = orig - epsilon;
            let down = objective(&probe, cfg, x, labels)?;
            probe.slices_mut()[ti][c] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic[ti][c], numeric));
        }
        tensors.push(TensorCheck {
            tensor: name.to_string(),
            coordinates: coords.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        max_rel_error: tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max),
        tensors,
    })
}

/// Initializes a model from `seed`, disables dropout and checks the analytic
/// gradients on the given batch in double precision.
pub fn gradient_check(
    cfg: &ModelConfig,
    x: ArrayView3<f64>,
    labels: &[usize],
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        dropout_post_cnn: 0.0,
        dropout_post_lstm: 0.0,
        ..cfg.clone()
    };
    cfg.validate()?;
    let params: ModelParams<f64> = init_model(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cache = forward_train(&params, &cfg, x, &mut rng)?;
    let grads = backward(&params, &cfg, &cache, labels, None)?;
    compare_gradients(&params, &cfg, x, labels, &grads, epsilon, 200, seed ^ 0x9e37)
}
