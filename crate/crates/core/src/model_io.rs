//! Trained-model serialization. The JSON layout round-trips to identical
//! predictions: serde_json emits f64 with shortest round-trip precision.

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoricalEncoding, ColumnScaling, EncodedColumn, EncodingMeta, Schema};
use crate::explain::PerturbStats;
use crate::network::{Network, OutputActivation, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ModelIoError {
    #[error("model file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEncoding {
    pub columns: Vec<EncodedColumn>,
    pub categoricals: Vec<CategoricalEncoding>,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    /// [d_in, d_hidden, d_out]
    pub dims: [usize; 3],
    pub decay: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub encoding: ModelEncoding,
    pub scaling: indexmap::IndexMap<String, ColumnScaling>,
    pub class_labels: Vec<String>,
    pub seed: u64,
    pub config: TrainConfig,
    #[serde(default)]
    pub output: OutputActivation,
    pub schema: Schema,
    /// Training statistics the LIME perturber needs.
    pub perturb: PerturbStats,
}

impl ModelFile {
    pub fn new(
        net: &Network,
        meta: &EncodingMeta,
        schema: &Schema,
        class_labels: &[String],
        seed: u64,
        config: &TrainConfig,
        perturb: PerturbStats,
    ) -> ModelFile {
        ModelFile {
            dims: [net.d_in, net.d_hidden, net.d_out],
            decay: net.decay,
            w1: net.w1.clone(),
            b1: net.b1.clone(),
            w2: net.w2.clone(),
            b2: net.b2.clone(),
            encoding: ModelEncoding {
                columns: meta.columns.clone(),
                categoricals: meta.categoricals.clone(),
            },
            scaling: meta.scaling.clone(),
            class_labels: class_labels.to_vec(),
            seed,
            config: *config,
            output: net.output,
            schema: schema.clone(),
            perturb,
        }
    }

    pub fn network(&self) -> Result<Network, ModelIoError> {
        let [d_in, d_hidden, d_out] = self.dims;
        if self.w1.len() != d_hidden * d_in
            || self.b1.len() != d_hidden
            || self.w2.len() != d_out * d_hidden
            || self.b2.len() != d_out
        {
            return Err(ModelIoError::Format(
                "weight array lengths do not match dims".into(),
            ));
        }
        Ok(Network {
            d_in,
            d_hidden,
            d_out,
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2.clone(),
            decay: self.decay,
            output: self.output,
        })
    }

    pub fn meta(&self) -> EncodingMeta {
        EncodingMeta {
            columns: self.encoding.columns.clone(),
            categoricals: self.encoding.categoricals.clone(),
            scaling: self.scaling.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<ModelFile, ModelIoError> {
        let model: ModelFile =
            serde_json::from_str(s).map_err(|e| ModelIoError::Format(e.to_string()))?;
        model.network()?;
        Ok(model)
    }
}
