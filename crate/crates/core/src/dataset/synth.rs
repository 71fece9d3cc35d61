//! Seeded synthetic survey generator.
//!
//! Feature marginals come from a JSON spec; the duration class is planted
//! by a softmax over a fixed linear score of the encoded features plus
//! small Gaussian noise, so a learnable signal exists by construction.

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    DatasetError, DurationClass, FeatureSpec, Record, Schema, Value, N_CLASSES,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureDist {
    Categorical { levels: Vec<String>, probs: Vec<f64> },
    Continuous {
        mean: f64,
        sd: f64,
        #[serde(default)]
        unit: String,
    },
}

/// Linear scoring rule that plants the target classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedRule {
    /// Per-class intercepts, length 5.
    pub bias: Vec<f64>,
    /// Standard deviation of the per-class score noise.
    pub noise_sd: f64,
    /// Per-class weights, length 5 each. Keys are `"<feature>"` for
    /// continuous (applied to the standardized value) and
    /// `"<feature>=<level>"` for categorical indicators.
    pub columns: IndexMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    #[serde(default = "default_target_name")]
    pub target_name: String,
    pub features: IndexMap<String, FeatureDist>,
    /// Intended class shares, length 5 summing to 1. Informational; the
    /// planted rule's biases are calibrated against these.
    pub class_marginals: Vec<f64>,
    pub planted_coefficients: PlantedRule,
    pub seed: u64,
}

fn default_target_name() -> String {
    "duration".to_string()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n == 0 {
            return Err(DatasetError::Spec("n must be positive".into()));
        }
        if self.features.is_empty() {
            return Err(DatasetError::Spec("at least one feature required".into()));
        }
        for (name, dist) in &self.features {
            match dist {
                FeatureDist::Categorical { levels, probs } => {
                    if levels.len() != probs.len() {
                        return Err(DatasetError::Spec(format!(
                            "/features/{name}: levels and probs lengths differ"
                        )));
                    }
                    if probs.iter().any(|p| *p < 0.0) {
                        return Err(DatasetError::Spec(format!(
                            "/features/{name}/probs: negative probability"
                        )));
                    }
                    let sum: f64 = probs.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(DatasetError::Spec(format!(
                            "/features/{name}/probs: sum {sum} is not 1"
                        )));
                    }
                }
                FeatureDist::Continuous { sd, .. } => {
                    if *sd <= 0.0 {
                        return Err(DatasetError::Spec(format!(
                            "/features/{name}/sd: must be positive"
                        )));
                    }
                }
            }
        }
        if self.class_marginals.len() != N_CLASSES {
            return Err(DatasetError::Spec(format!(
                "/class_marginals: expected {N_CLASSES} entries"
            )));
        }
        let sum: f64 = self.class_marginals.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Spec(format!(
                "/class_marginals: sum {sum} is not 1"
            )));
        }
        let rule = &self.planted_coefficients;
        if rule.bias.len() != N_CLASSES {
            return Err(DatasetError::Spec(
                "/planted_coefficients/bias: expected 5 entries".into(),
            ));
        }
        if rule.noise_sd < 0.0 {
            return Err(DatasetError::Spec(
                "/planted_coefficients/noise_sd: must be nonnegative".into(),
            ));
        }
        for (key, w) in &rule.columns {
            if w.len() != N_CLASSES {
                return Err(DatasetError::Spec(format!(
                    "/planted_coefficients/columns/{key}: expected 5 entries"
                )));
            }
        }
        Ok(())
    }

    /// The schema implied by the feature list.
    pub fn schema(&self) -> Result<Schema, DatasetError> {
        let features = self
            .features
            .iter()
            .map(|(name, dist)| match dist {
                FeatureDist::Categorical { levels, .. } => FeatureSpec {
                    name: name.clone(),
                    kind: super::FeatureKind::Categorical {
                        levels: levels.clone(),
                    },
                },
                FeatureDist::Continuous { unit, .. } => FeatureSpec {
                    name: name.clone(),
                    kind: super::FeatureKind::Continuous { unit: unit.clone() },
                },
            })
            .collect();
        Schema::new(features, &self.target_name)
    }

    pub fn from_json(reader: impl std::io::Read) -> Result<SynthSpec, DatasetError> {
        let spec: SynthSpec = serde_json::from_reader(reader)
            .map_err(|e| DatasetError::Spec(format!("invalid spec JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Generate `spec.n` records, deterministically for a given seed.
pub fn synthesize(spec: &SynthSpec, seed: u64) -> Result<Vec<Record>, DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(spec.n);

    for _ in 0..spec.n {
        let mut values = IndexMap::new();
        let mut scores = spec.planted_coefficients.bias.clone();

        for (name, dist) in &spec.features {
            match dist {
                FeatureDist::Categorical { levels, probs } => {
                    let level = sample_categorical(levels, probs, &mut rng);
                    let key = format!("{name}={level}");
                    if let Some(w) = spec.planted_coefficients.columns.get(&key) {
                        for (s, wc) in scores.iter_mut().zip(w) {
                            *s += wc;
                        }
                    }
                    values.insert(name.clone(), Value::Level(level));
                }
                FeatureDist::Continuous { mean, sd, .. } => {
                    let x = sample_truncated_normal(*mean, *sd, &mut rng)?;
                    if let Some(w) = spec.planted_coefficients.columns.get(name) {
                        let std = (x - mean) / sd;
                        for (s, wc) in scores.iter_mut().zip(w) {
                            *s += wc * std;
                        }
                    }
                    values.insert(name.clone(), Value::Number(x));
                }
            }
        }

        for s in scores.iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *s += spec.planted_coefficients.noise_sd * eps;
        }

        let class = sample_softmax(&scores, &mut rng);
        records.push(Record {
            values,
            target: Some(DurationClass::from_index(class).expect("5 scores")),
        });
    }
    Ok(records)
}

fn sample_categorical(levels: &[String], probs: &[f64], rng: &mut ChaCha8Rng) -> String {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (l, p) in levels.iter().zip(probs) {
        acc += p;
        if u < acc {
            return l.clone();
        }
    }
    levels.last().expect("nonempty levels").clone()
}

/// Normal draw, rejection-truncated at 0.
fn sample_truncated_normal(
    mean: f64,
    sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, DatasetError> {
    for _ in 0..10_000 {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + sd * z;
        if x >= 0.0 {
            return Ok(x);
        }
    }
    Err(DatasetError::Spec(format!(
        "truncated normal with mean {mean}, sd {sd} almost never lands above 0"
    )))
}

fn sample_softmax(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, e) in exps.iter().enumerate() {
        acc += e;
        if u < acc {
            return i;
        }
    }
    exps.len() - 1
}
