//! Policy and blunder-risk networks with hand-written backpropagation,
//! mini-batch training, checkpoints and classifier metrics.
//!
//! Layers are generic over the float type so gradient checks can run in
//! `f64`; the models used everywhere else are `f32`.

mod blunder;
mod trunk;
mod checkpoint;
pub mod layers;
mod metrics;
mod policy;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use thiserror::Error;

pub use blunder::{blunder_forward, BlunderArch, BlunderNet, BlunderModel, RiskScorer};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, CheckpointError,
    CHECKPOINT_VERSION,
};
pub use metrics::{accuracy, auc};
pub use policy::{move_confidences, policy_forward, ConfidenceMap, PolicyArch, PolicyHeads, PolicyModel, PolicyNet};
pub use train::{
    train_blunder, train_blunder_from, train_policy, train_policy_from, BlunderTrainReport, OptimizerKind, PolicyLoss,
    TrainingConfig,
};

pub trait Scalar: Float + Sum + Send + Sync + Debug + Default + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// A network as an ordered list of named parameter tensors. The order is the
/// checkpoint payload order and the optimizer state order.
pub trait Network<T: Scalar>: Clone + Send + Sync {
    fn params(&self) -> Vec<&[T]>;
    fn params_mut(&mut self) -> Vec<&mut [T]>;
    /// Same architecture, all parameters zero (a gradient accumulator).
    fn zeros_like(&self) -> Self;
    fn named_shapes(&self) -> Vec<(String, Vec<usize>)>;

    fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
    }

    fn scale(&mut self, k: T) {
        for t in self.params_mut() {
            t.iter_mut().for_each(|v| *v = *v * k);
        }
    }

    fn sq_norm(&self) -> f64 {
        self.params().iter().flat_map(|t| t.iter()).map(|v| v.as_f64() * v.as_f64()).sum()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {found} values, the model expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains only {0} examples; both classes are required")]
    SingleClass(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (gradient norm {grad_norm})")]
    NonFinite { epoch: usize, batch: usize, grad_norm: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
}
