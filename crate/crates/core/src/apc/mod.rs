//! Autoregressive predictive coding at toy scale.
//!
//! A stack of recurrent layers (LSTM or tanh RNN) reads frames causally; a
//! linear projection of the top layer predicts the frame `n` steps ahead
//! under an L1 loss. The top-layer activations are the learned features.
//!
//! All parameters live in one flat `Vec<f64>`, laid out layer by layer as
//! `[W_in (G·H × in), W_rec (G·H × H), b (G·H)]` with `G = 4` gates
//! (input, forget, cell, output) for LSTM and `G = 1` for the simple RNN,
//! followed by the projection `[W_out (d × H), b_out (d)]`. Matrices are
//! row-major. Checkpoints store the vector in exactly this order.

mod checkpoint;
mod gradcheck;
mod net;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, random_gradient_check, GradCheck, GRADCHECK_TOLERANCE};
pub use net::{apc_loss, ApcModel, ForwardOutput};
pub use train::{extract_features, train, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Lstm,
    SimpleRnn,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::SimpleRnn => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApcConfig {
    /// Prediction step n.
    pub prediction_step: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    /// Input feature dimension d; 0 means "take it from the training data".
    pub input_dim: usize,
    pub cell: CellKind,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Linearly anneal the learning rate towards zero over the epochs.
    pub linear_decay: bool,
    pub seed: u64,
}

impl Default for ApcConfig {
    fn default() -> Self {
        ApcConfig {
            prediction_step: 1,
            layers: 2,
            hidden_dim: 16,
            input_dim: 0,
            cell: CellKind::Lstm,
            optimizer: Optimizer::Adam,
            learning_rate: 0.03,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 200,
            batch_size: 4,
            linear_decay: true,
            seed: 42,
        }
    }
}

impl ApcConfig {
    /// Full-scale setting: 5 layers of 100 units, n = 5, Adam at 1e-4,
    /// batch 32, 100 epochs, 13-dimensional input.
    pub fn full_scale_preset() -> Self {
        ApcConfig {
            prediction_step: 5,
            layers: 5,
            hidden_dim: 100,
            input_dim: 13,
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 32,
            linear_decay: false,
            ..ApcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Argument(format!("invalid APC config: {what}")))
            }
        };
        check(self.prediction_step >= 1, "prediction_step must be >= 1")?;
        check(self.layers >= 1, "layers must be >= 1")?;
        check(self.hidden_dim >= 1, "hidden_dim must be >= 1")?;
        check(self.input_dim >= 1, "input_dim must be >= 1")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            "learning_rate must be positive",
        )?;
        check((0.0..1.0).contains(&self.beta1), "beta1 must be in [0, 1)")?;
        check((0.0..1.0).contains(&self.beta2), "beta2 must be in [0, 1)")?;
        check(self.adam_epsilon > 0.0, "adam_epsilon must be positive")
    }
}
