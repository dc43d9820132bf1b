//! Optimization, metrics, and the train/evaluate loops.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{
    compute_metrics, heat_color, render_confusion_heatmap, render_confusion_text, MetricsReport,
};
pub use optim::{rho_t, OptimState, RAdam, RectPolicy};
pub use trainer::{
    evaluate, predict, predict_probs, train, write_history_csv, Dataset, EpochStats, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for one training run. `class_weights` are BCE loss
/// weights indexed by label ([fake, real]); `None` leaves the loss
/// unweighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropconnect_rate: f64,
    pub class_weights: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            dropconnect_rate: 0.0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config { detail });
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be finite and > 0", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} must be in [0, 1)"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("eps {} must be finite and > 0", self.eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.dropconnect_rate.is_finite() || !(0.0..1.0).contains(&self.dropconnect_rate) {
            return bad(format!("dropconnect_rate {} must be in [0, 1)", self.dropconnect_rate));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad(format!("class_weights {w:?} must be finite and > 0"));
            }
        }
        Ok(())
    }
}
