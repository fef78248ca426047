use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::scalar::Scalar;

/// Tensor names in registry (and model file) order.
pub const TENSOR_NAMES: [&str; 7] = [
    "conv.kernel",
    "conv.bias",
    "lstm.input_kernel",
    "lstm.recurrent_kernel",
    "lstm.bias",
    "dense.kernel",
    "dense.bias",
];

/// Whether each tensor in [`TENSOR_NAMES`] order carries an L2 penalty.
pub(crate) const REGULARIZED: [bool; 7] = [true, false, true, true, false, true, false];

/// All trainable tensors. LSTM gate blocks are laid out `[input, forget, cell, output]`
/// along the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    /// `(kernel * features) x filters`; row `tap * features + feature`.
    pub conv_kernel: Array2<F>,
    pub conv_bias: Array1<F>,
    /// `filters x 4*units`
    pub lstm_input: Array2<F>,
    /// `units x 4*units`
    pub lstm_recurrent: Array2<F>,
    pub lstm_bias: Array1<F>,
    /// `units x classes`
    pub dense_kernel: Array2<F>,
    pub dense_bias: Array1<F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let kc = cfg.conv_kernel * cfg.input_features;
        let g = 4 * cfg.lstm_units;
        ModelParams {
            conv_kernel: Array2::zeros((kc, cfg.conv_filters)),
            conv_bias: Array1::zeros(cfg.conv_filters),
            lstm_input: Array2::zeros((cfg.conv_filters, g)),
            lstm_recurrent: Array2::zeros((cfg.lstm_units, g)),
            lstm_bias: Array1::zeros(g),
            dense_kernel: Array2::zeros((cfg.lstm_units, cfg.num_classes)),
            dense_bias: Array1::zeros(cfg.num_classes),
        }
    }

    /// Logical tensor shapes, in [`TENSOR_NAMES`] order.
    pub fn shapes(cfg: &ModelConfig) -> [Vec<usize>; 7] {
        let g = 4 * cfg.lstm_units;
        [
            vec![cfg.conv_kernel, cfg.input_features, cfg.conv_filters],
            vec![cfg.conv_filters],
            vec![cfg.conv_filters, g],
            vec![cfg.lstm_units, g],
            vec![g],
            vec![cfg.lstm_units, cfg.num_classes],
            vec![cfg.num_classes],
        ]
    }

    pub fn slices(&self) -> [&[F]; 7] {
        [
            self.conv_kernel.as_slice().expect("standard layout"),
            self.conv_bias.as_slice().expect("standard layout"),
            self.lstm_input.as_slice().expect("standard layout"),
            self.lstm_recurrent.as_slice().expect("standard layout"),
            self.lstm_bias.as_slice().expect("standard layout"),
            self.dense_kernel.as_slice().expect("standard layout"),
            self.dense_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [F]; 7] {
        [
            self.conv_kernel.as_slice_mut().expect("standard layout"),
            self.conv_bias.as_slice_mut().expect("standard layout"),
            self.lstm_input.as_slice_mut().expect("standard layout"),
            self.lstm_recurrent.as_slice_mut().expect("standard layout"),
            self.lstm_bias.as_slice_mut().expect("standard layout"),
            self.dense_kernel.as_slice_mut().expect("standard layout"),
            self.dense_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Sum of squared entries of the regularized (non-bias) tensors.
    pub fn l2_sum(&self) -> F {
        self.slices()
            .iter()
            .zip(REGULARIZED)
            .filter(|(_, r)| *r)
            .flat_map(|(s, _)| s.iter())
            .fold(F::zero(), |acc, &w| acc + w * w)
    }

    /// The first non-finite tensor, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.slices()
            .iter()
            .zip(TENSOR_NAMES)
            .find(|(s, _)| s.iter().any(|v| !v.is_finite()))
            .map(|(_, n)| n)
    }

    pub fn num_parameters(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let c2 = |a: &Array2<F>| a.mapv(|v| G::of(v.to_f64_lossy()));
        let c1 = |a: &Array1<F>| a.mapv(|v| G::of(v.to_f64_lossy()));
        ModelParams {
            conv_kernel: c2(&self.conv_kernel),
            conv_bias: c1(&self.conv_bias),
            lstm_input: c2(&self.lstm_input),
            lstm_recurrent: c2(&self.lstm_recurrent),
            lstm_bias: c1(&self.lstm_bias),
            dense_kernel: c2(&self.dense_kernel),
            dense_bias: c1(&self.dense_bias),
        }
    }
}

fn fill_uniform<F: Scalar>(a: &mut Array2<F>, fan_in: usize, gain: f64, rng: &mut impl Rng) {
    let limit = (gain / fan_in as f64).sqrt();
    a.mapv_inplace(|_| F::of(rng.random_range(-limit..limit)));
}

/// Fan-in scaled uniform initialization; biases zero except the LSTM forget gate,
/// which starts at 1.
pub fn init_model<F: Scalar>(cfg: &ModelConfig, seed: u64) -> ModelParams<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(cfg);
    // ReLU conv gets the doubled (He) gain; tanh/sigmoid/softmax layers the LeCun one.
    fill_uniform(&mut p.conv_kernel, cfg.conv_kernel * cfg.input_features, 6.0, &mut rng);
    fill_uniform(&mut p.lstm_input, cfg.conv_filters, 3.0, &mut rng);
    fill_uniform(&mut p.lstm_recurrent, cfg.lstm_units, 3.0, &mut rng);
    fill_uniform(&mut p.dense_kernel, cfg.lstm_units, 3.0, &mut rng);
    let h = cfg.lstm_units;
    p.lstm_bias
        .slice_mut(ndarray::s![h..2 * h])
        .fill(F::one());
    p
}
