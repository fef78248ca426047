use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; output length is `steps - kernel + 1`.
    #[default]
    Valid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_steps: usize,
    pub input_features: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_padding: Padding,
    pub lstm_units: usize,
    pub num_classes: usize,
    pub l2_lambda: f64,
    pub dropout_post_cnn: f64,
    pub dropout_post_lstm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_steps: 30,
            input_features: 5,
            conv_filters: 64,
            conv_kernel: 3,
            conv_padding: Padding::Valid,
            lstm_units: 128,
            num_classes: 4,
            l2_lambda: 0.01,
            dropout_post_cnn: 0.1,
            dropout_post_lstm: 0.3,
        }
    }
}

impl ModelConfig {
    /// Sequence length seen by the LSTM.
    pub fn conv_steps(&self) -> usize {
        self.input_steps + 1 - self.conv_kernel
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_steps", self.input_steps),
            ("input_features", self.input_features),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("lstm_units", self.lstm_units),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.conv_kernel > self.input_steps {
            return Err(Error::Config(format!(
                "conv_kernel {} longer than input_steps {}",
                self.conv_kernel, self.input_steps
            )));
        }
        for (name, p) in [
            ("dropout_post_cnn", self.dropout_post_cnn),
            ("dropout_post_lstm", self.dropout_post_lstm),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!(
                "l2_lambda = {} must be finite and >= 0",
                self.l2_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// When set, `seed` alone fixes initialization, batch order and dropout masks.
    /// Otherwise dropout masks draw from OS entropy.
    pub deterministic: bool,
    /// Weight the loss by inverse class frequency of the training windows.
    pub class_weighting: bool,
    /// Each epoch visits one of `train_subsample` interleaved slices of the shuffled
    /// training windows, so consecutive epochs see different windows. 1 = all.
    pub train_subsample: usize,
    /// Stop after this many epochs without a validation-accuracy improvement.
    pub patience: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 30,
            seed: 0,
            deterministic: true,
            class_weighting: false,
            train_subsample: 1,
            patience: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("moment decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.train_subsample == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and train_subsample must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_architecture() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.conv_steps(), 28);
        assert_eq!((c.conv_filters, c.conv_kernel, c.lstm_units), (64, 3, 128));
        assert_eq!(c.l2_lambda, 0.01);
        assert_eq!((c.dropout_post_cnn, c.dropout_post_lstm), (0.1, 0.3));
        TrainingConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let c = ModelConfig {
            dropout_post_lstm: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            conv_kernel: 31,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let t = TrainingConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
        assert!(serde_json::from_str::<ModelConfig>(r#"{"lstm_unitz": 3}"#).is_err());
    }
}
