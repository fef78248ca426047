//! Model file: a [`Container`] of kind `riskwatch.model` whose manifest records the
//! model configuration, label vocabulary (ascending risk) and gate order.

use std::path::Path;

use ndarray::ArrayView2;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::model::{predict, Prediction};
use super::{ModelConfig, ModelParams, TrainingConfig, TENSOR_NAMES};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::risk::RiskLabel;
use crate::scalar::Scalar;

pub const MODEL_KIND: &str = "riskwatch.model";
const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

/// Everything needed to serve a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<F> {
    pub config: ModelConfig,
    pub params: ModelParams<F>,
    /// Class index to label, ascending risk.
    pub labels: Vec<RiskLabel>,
    pub training: Option<TrainingConfig>,
}

impl<F: Scalar> ModelBundle<F> {
    pub fn new(config: ModelConfig, params: ModelParams<F>) -> Self {
        let labels = RiskLabel::ALL.iter().copied().take(config.num_classes).collect();
        ModelBundle {
            config,
            params,
            labels,
            training: None,
        }
    }

    pub fn with_training(mut self, training: TrainingConfig) -> Self {
        self.training = Some(training);
        self
    }

    pub fn to_container(&self) -> Container {
        let mut meta = Map::new();
        meta.insert("kind".into(), Value::from(MODEL_KIND));
        meta.insert(
            "config".into(),
            serde_json::to_value(&self.config).expect("config serializes"),
        );
        meta.insert(
            "label_vocabulary".into(),
            serde_json::to_value(&self.labels).expect("labels serialize"),
        );
        meta.insert("gate_order".into(), serde_json::to_value(GATE_ORDER).expect("static"));
        if let Some(t) = &self.training {
            meta.insert(
                "training".into(),
                serde_json::to_value(t).expect("training config serializes"),
            );
        }
        let mut c = Container::new(meta);
        let shapes = ModelParams::<F>::shapes(&self.config);
        for ((name, shape), data) in TENSOR_NAMES.iter().zip(&shapes).zip(self.params.slices()) {
            c.push(
                name,
                shape,
                data.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect(),
            );
        }
        c
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().encode()
    }

    /// SHA-256 (hex) of the serialized model.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta.get("kind").and_then(Value::as_str) != Some(MODEL_KIND) {
            return Err(Error::Manifest("not a model container".into()));
        }
        let field = |k: &str| {
            c.meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Manifest(format!("missing `{k}`")))
        };
        let config: ModelConfig = serde_json::from_value(field("config")?)
            .map_err(|e| Error::Manifest(format!("config: {e}")))?;
        config
            .validate()
            .map_err(|e| Error::Manifest(e.to_string()))?;
        let labels: Vec<RiskLabel> = serde_json::from_value(field("label_vocabulary")?)
            .map_err(|e| Error::Manifest(format!("label_vocabulary: {e}")))?;
        if labels.len() != config.num_classes {
            return Err(Error::Manifest(format!(
                "{} labels for {} classes",
                labels.len(),
                config.num_classes
            )));
        }
        let gate_order: Vec<String> = serde_json::from_value(field("gate_order")?)
            .map_err(|e| Error::Manifest(format!("gate_order: {e}")))?;
        if gate_order != GATE_ORDER {
            return Err(Error::Manifest(format!("unsupported gate order {gate_order:?}")));
        }
        let training = c
            .meta
            .get("training")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::Manifest(format!("training: {e}")))?;

        let shapes = ModelParams::<F>::shapes(&config);
        let mut params = ModelParams::<F>::zeros(&config);
        for ((dst, name), shape) in params.slices_mut().into_iter().zip(TENSOR_NAMES).zip(&shapes) {
            let src = c.tensor_shaped(name, shape)?;
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = F::from_f32(s).unwrap_or_else(F::nan);
            }
        }
        if let Some(t) = params.first_non_finite() {
            return Err(Error::Manifest(format!("non-finite values in `{t}`")));
        }
        Ok(ModelBundle {
            config,
            params,
            labels,
            training,
        })
    }

    pub fn cast<G: Scalar>(&self) -> ModelBundle<G> {
        ModelBundle {
            config: self.config.clone(),
            params: self.params.cast(),
            labels: self.labels.clone(),
            training: self.training.clone(),
        }
    }

    /// Predictions for standardized windows.
    pub fn predict(&self, windows: &[ArrayView2<f64>]) -> Result<Vec<Prediction>> {
        predict(&self.params, &self.config, windows)
    }

    pub fn label_of(&self, class: usize) -> RiskLabel {
        self.labels[class]
    }
}

pub fn save_model<F: Scalar>(bundle: &ModelBundle<F>, path: &Path) -> Result<()> {
    bundle.to_container().write(path)
}

pub fn load_model(path: &Path) -> Result<ModelBundle<f32>> {
    ModelBundle::from_container(&Container::read(path)?)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_model;

    #[test]
    fn bundle_round_trip_is_bitwise() {
        let cfg = ModelConfig {
            conv_filters: 6,
            lstm_units: 5,
            ..Default::default()
        };
        let b = ModelBundle::new(cfg.clone(), init_model::<f32>(&cfg, 3))
            .with_training(TrainingConfig::default());
        let c = Container::decode(&b.to_bytes()).unwrap();
        let back = ModelBundle::<f32>::from_container(&c).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.fingerprint(), b.fingerprint());
        assert_eq!(
            c.meta["label_vocabulary"],
            serde_json::json!(["Run as usual", "Show warning", "Limit access", "Inform backup person"])
        );
        assert_eq!(c.tensor("conv.kernel").unwrap().shape, vec![3, 5, 6]);
    }

    #[test]
    fn rejects_other_kinds() {
        let c = Container::new(Map::new());
        assert!(matches!(
            ModelBundle::<f32>::from_container(&c),
            Err(Error::Manifest(_))
        ));
    }
}
