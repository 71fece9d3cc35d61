//! Interpretable parking-duration modeling pipeline.
//!
//! A single-hidden-layer classifier over tabular survey data with
//! cross-validated (size, decay) tuning, confusion-matrix/kappa evaluation,
//! Garson connection-weight importance, LIME local explanations, and the
//! classical parking-generation-rate formulas. Everything is deterministic
//! given an explicit seed.

pub mod cli;
pub mod dataset;
pub mod demand;
pub mod explain;
pub mod matrix;
pub mod model_io;
pub mod network;
pub mod plot;
pub mod seed;
pub mod selection;

pub use dataset::{bin_duration, DurationClass, Record, Schema};
pub use network::{Network, Prediction, TrainConfig};
pub use selection::{accuracy, expected_accuracy, kappa, ConfusionMatrix, FitReport};
