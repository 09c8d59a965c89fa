//! Backpropagation through time, Adam with global-norm clipping, and the
//! state-retention policies applied between consecutive sequences.

mod bptt;
mod checkpoint;
mod loss;
mod optim;
mod trainer;

pub use bptt::{backward_sequence, forward_sequence, SequenceForward, SequenceGrads};
pub use checkpoint::{AdamDoc, Checkpoint};
pub use loss::{cross_entropy, mae, mse, softmax, LossKind};
pub use optim::{clip_global_norm, Adam};
pub use trainer::{EpochRecord, Trainer};

use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Which of `T` and `C` carry over from one sequence to the next. `S` always
/// restarts at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetPolicy {
    pub time_retained: bool,
    pub energy_retained: bool,
}

impl ResetPolicy {
    pub const RESET: ResetPolicy = ResetPolicy {
        time_retained: false,
        energy_retained: false,
    };
    pub const RETAIN: ResetPolicy = ResetPolicy {
        time_retained: true,
        energy_retained: true,
    };
    /// `(time, energy)` ∈ {(1,1), (1,0), (0,1), (0,0)}.
    pub const ALL: [ResetPolicy; 4] = [
        ResetPolicy::RETAIN,
        ResetPolicy {
            time_retained: true,
            energy_retained: false,
        },
        ResetPolicy {
            time_retained: false,
            energy_retained: true,
        },
        ResetPolicy::RESET,
    ];

    /// E.g. `"(1,0)"` for time retained, energy reset.
    pub fn label(&self) -> String {
        format!("({},{})", u8::from(self.time_retained), u8::from(self.energy_retained))
    }

    pub fn apply(&self, finished: &CellState) -> CellState {
        let h = finished.hidden_dim();
        CellState {
            t: if self.time_retained { finished.t.clone() } else { Vector::zeros(h) },
            c: if self.energy_retained { finished.c.clone() } else { Vector::zeros(h) },
            s: Vector::zeros(h),
        }
    }

    /// Initial state for the next sequence, given the previous one's final state.
    pub fn initial_state(&self, previous: Option<&CellState>, hidden_dim: usize) -> CellState {
        previous.map_or_else(|| CellState::zeros(hidden_dim), |s| self.apply(s))
    }
}

/// Free-function form of [`ResetPolicy::apply`].
pub fn apply_reset_policy(state: &CellState, policy: ResetPolicy) -> CellState {
    policy.apply(state)
}

fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_clip() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Filled from the run seed, never read from JSON.
    #[serde(skip)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: f64,
    /// Defaults to mse for regression and cross_entropy for classification.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub reset_policy: ResetPolicy,
    /// Truncation length for BPTT; `None` unrolls the full sequence.
    #[serde(default)]
    pub bptt_window: Option<usize>,
    /// Stop after this many epochs without validation-loss improvement.
    #[serde(default)]
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            grad_clip_norm: default_clip(),
            loss: None,
            reset_policy: ResetPolicy::RESET,
            bptt_window: None,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be > 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be > 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be > 0");
        }
        if self.bptt_window == Some(0) {
            return bad("bptt_window must be ≥ 1");
        }
        Ok(())
    }

    pub fn loss_kind(&self) -> Result<LossKind> {
        self.loss.ok_or_else(|| Error::Config("loss not resolved".into()))
    }
}
