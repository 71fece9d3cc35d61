//! Single-hidden-layer feed-forward classifier.
//!
//! Hidden layer uses the logistic sigmoid. The output layer is softmax with
//! cross-entropy loss by default; a sigmoid-output / sum-of-squares variant
//! is available for fidelity experiments. Training is full-batch gradient
//! descent with L2 weight decay (biases unpenalized).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    /// Softmax outputs with cross-entropy loss.
    #[default]
    Softmax,
    /// Per-class sigmoid outputs with sum-of-squares loss, normalized to
    /// probabilities for reporting.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub seed: u64,
    pub init_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_iterations: 2000,
            grad_tolerance: 1e-5,
            seed: 0,
            init_range: 0.5,
        }
    }
}

/// Weights and biases of an input-hidden-output perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    /// Hidden weights, row-major d_hidden x d_in.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Output weights, row-major d_out x d_hidden.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// L2 weight-decay coefficient.
    pub decay: f64,
    #[serde(default)]
    pub output: OutputActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub label: usize,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// False when gradient descent failed to improve on the initial
    /// network, in which case `network` is the initial one.
    pub descended: bool,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Log-sum-exp-stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// Weights and biases drawn uniformly from [-init_range, init_range].
    pub fn init(
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        decay: f64,
        seed: u64,
        init_range: f64,
    ) -> Result<Network, NetworkError> {
        if d_in == 0 || d_hidden == 0 || d_out < 2 {
            return Err(NetworkError::Domain(format!(
                "dimensions must satisfy d_in >= 1, d_hidden >= 1, d_out >= 2 (got {d_in}, {d_hidden}, {d_out})"
            )));
        }
        if decay < 0.0 {
            return Err(NetworkError::Domain("decay must be nonnegative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if init_range == 0.0 {
                        0.0
                    } else {
                        rng.gen_range(-init_range..=init_range)
                    }
                })
                .collect()
        };
        Ok(Network {
            d_in,
            d_hidden,
            d_out,
            w1: draw(d_hidden * d_in),
            b1: draw(d_hidden),
            w2: draw(d_out * d_hidden),
            b2: draw(d_out),
            decay,
            output: OutputActivation::Softmax,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetworkError> {
        if x.len() != self.d_in {
            return Err(NetworkError::Dimension(format!(
                "expected input of length {}, got {}",
                self.d_in,
                x.len()
            )));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d_hidden)
            .map(|h| {
                let mut z = self.b1[h];
                let row = &self.w1[h * self.d_in..(h + 1) * self.d_in];
                for (w, xi) in row.iter().zip(x) {
                    z += w * xi;
                }
                sigmoid(z)
            })
            .collect()
    }

    fn output_logits(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.d_out)
            .map(|k| {
                let mut z = self.b2[k];
                let row = &self.w2[k * self.d_hidden..(k + 1) * self.d_hidden];
                for (w, hj) in row.iter().zip(hidden) {
                    z += w * hj;
                }
                z
            })
            .collect()
    }

    /// Raw output activations: softmax probabilities or per-class sigmoids.
    fn outputs(&self, logits: &[f64]) -> Vec<f64> {
        match self.output {
            OutputActivation::Softmax => softmax(logits),
            OutputActivation::Sigmoid => logits.iter().map(|l| sigmoid(*l)).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction, NetworkError> {
        self.check_input(x)?;
        let hidden = self.hidden_activations(x);
        let logits = self.output_logits(&hidden);
        let out = self.outputs(&logits);
        let probabilities = match self.output {
            OutputActivation::Softmax => out,
            OutputActivation::Sigmoid => {
                let total: f64 = out.iter().sum();
                if total > 0.0 {
                    out.iter().map(|o| o / total).collect()
                } else {
                    vec![1.0 / self.d_out as f64; self.d_out]
                }
            }
        };
        let label = argmax(&probabilities);
        Ok(Prediction {
            probabilities,
            label,
        })
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<Prediction>, NetworkError> {
        if x.rows() > 0 && x.cols() != self.d_in {
            return Err(NetworkError::Dimension(format!(
                "expected {} columns, got {}",
                self.d_in,
                x.cols()
            )));
        }
        (0..x.rows()).map(|i| self.forward(x.row(i))).collect()
    }

    fn weight_penalty(&self) -> f64 {
        self.decay
            * (self.w1.iter().map(|w| w * w).sum::<f64>()
                + self.w2.iter().map(|w| w * w).sum::<f64>())
    }

    fn check_batch(&self, x: &Matrix, y: &[usize]) -> Result<(), NetworkError> {
        if x.rows() != y.len() {
            return Err(NetworkError::Dimension(format!(
                "{} rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 {
            return Err(NetworkError::Domain("need at least one sample".into()));
        }
        if x.cols() != self.d_in {
            return Err(NetworkError::Dimension(format!(
                "expected {} columns, got {}",
                self.d_in,
                x.cols()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= self.d_out) {
            return Err(NetworkError::Domain(format!(
                "class index {bad} out of range for {} outputs",
                self.d_out
            )));
        }
        Ok(())
    }

    /// Mean data loss plus decay * sum of squared weights (biases excluded).
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> Result<f64, NetworkError> {
        self.check_batch(x, y)?;
        let n = x.rows() as f64;
        let mut total = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let hidden = self.hidden_activations(x.row(i));
            let logits = self.output_logits(&hidden);
            let out = self.outputs(&logits);
            match self.output {
                OutputActivation::Softmax => {
                    total -= out[yi].max(PROB_FLOOR).ln();
                }
                OutputActivation::Sigmoid => {
                    for (k, o) in out.iter().enumerate() {
                        let t = if k == yi { 1.0 } else { 0.0 };
                        total += (o - t) * (o - t);
                    }
                }
            }
        }
        Ok(total / n + self.weight_penalty())
    }

    /// Exact analytic gradient of `loss`, shaped like the network.
    pub fn gradient(&self, x: &Matrix, y: &[usize]) -> Result<Gradient, NetworkError> {
        self.check_batch(x, y)?;
        let n = x.rows() as f64;
        let mut g = Gradient::zeros(self.d_in, self.d_hidden, self.d_out);

        for (i, &yi) in y.iter().enumerate() {
            let xi = x.row(i);
            let hidden = self.hidden_activations(xi);
            let logits = self.output_logits(&hidden);
            let out = self.outputs(&logits);

            // dL/dlogit per output unit
            let dlogit: Vec<f64> = match self.output {
                OutputActivation::Softmax => out
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let t = if k == yi { 1.0 } else { 0.0 };
                        // d(-ln p_y)/dz_k = p_k - t_k; the clamp only binds
                        // when p_y underflows, where the same direction holds
                        (p - t) / n
                    })
                    .collect(),
                OutputActivation::Sigmoid => out
                    .iter()
                    .enumerate()
                    .map(|(k, o)| {
                        let t = if k == yi { 1.0 } else { 0.0 };
                        2.0 * (o - t) * o * (1.0 - o) / n
                    })
                    .collect(),
            };

            for k in 0..self.d_out {
                g.b2[k] += dlogit[k];
                for h in 0..self.d_hidden {
                    g.w2[k * self.d_hidden + h] += dlogit[k] * hidden[h];
                }
            }
            for h in 0..self.d_hidden {
                let mut dh = 0.0;
                for k in 0..self.d_out {
                    dh += dlogit[k] * self.w2[k * self.d_hidden + h];
                }
                let dpre = dh * hidden[h] * (1.0 - hidden[h]);
                g.b1[h] += dpre;
                for j in 0..self.d_in {
                    g.w1[h * self.d_in + j] += dpre * xi[j];
                }
            }
        }

        // decay term: d(decay * w^2)/dw = 2 * decay * w, biases excluded
        for (gw, w) in g.w1.iter_mut().zip(&self.w1) {
            *gw += 2.0 * self.decay * w;
        }
        for (gw, w) in g.w2.iter_mut().zip(&self.w2) {
            *gw += 2.0 * self.decay * w;
        }
        Ok(g)
    }

    /// Full-batch gradient descent. Stops at `max_iterations` or when the
    /// gradient infinity norm drops below `grad_tolerance`. If descent never
    /// improves on the initial loss, the initial network is returned with
    /// `descended == false`.
    pub fn train(
        &self,
        x: &Matrix,
        y: &[usize],
        cfg: &TrainConfig,
    ) -> Result<TrainOutcome, NetworkError> {
        self.check_batch(x, y)?;
        let initial_loss = self.loss(x, y)?;
        let mut net = self.clone();
        let mut iterations = 0;

        for iter in 0..cfg.max_iterations {
            let g = net.gradient(x, y)?;
            if !g.is_finite() {
                return Err(NetworkError::NonFinite { iteration: iter });
            }
            if g.inf_norm() < cfg.grad_tolerance {
                break;
            }
            net.step(&g, cfg.learning_rate);
            iterations = iter + 1;
        }

        let final_loss = net.loss(x, y)?;
        if !final_loss.is_finite() {
            return Err(NetworkError::NonFinite {
                iteration: iterations,
            });
        }
        if final_loss > initial_loss {
            return Ok(TrainOutcome {
                network: self.clone(),
                iterations,
                initial_loss,
                final_loss: initial_loss,
                descended: false,
            });
        }
        Ok(TrainOutcome {
            network: net,
            iterations,
            initial_loss,
            final_loss,
            descended: true,
        })
    }

    fn step(&mut self, g: &Gradient, lr: f64) {
        for (w, gw) in self.w1.iter_mut().zip(&g.w1) {
            *w -= lr * gw;
        }
        for (b, gb) in self.b1.iter_mut().zip(&g.b1) {
            *b -= lr * gb;
        }
        for (w, gw) in self.w2.iter_mut().zip(&g.w2) {
            *w -= lr * gw;
        }
        for (b, gb) in self.b2.iter_mut().zip(&g.b2) {
            *b -= lr * gb;
        }
    }
}

/// Network-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradient {
    fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Gradient {
        Gradient {
            w1: vec![0.0; d_hidden * d_in],
            b1: vec![0.0; d_hidden],
            w2: vec![0.0; d_out * d_hidden],
            b2: vec![0.0; d_out],
        }
    }

    pub fn inf_norm(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }
}
