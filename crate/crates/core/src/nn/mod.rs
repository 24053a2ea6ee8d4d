//! Minimal two-head convolutional network: forward and backward passes,
//! softmax cross-entropy, SGD, and the binary checkpoint format.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient checks.

mod arch;
pub mod checkpoint;
mod loss;
mod network;
mod sgd;

pub use arch::{Architecture, ConvSpec, InputShape, CLASS_OUTPUTS, ROT_OUTPUTS};
pub use loss::{
    composite_loss, predict_confidence, softmax_cross_entropy, softmax_rows, LogitGrads, LossBundle, LossWeights,
};
pub use network::{ForwardCache, Gradients, ImageBatch, Logits, ParamBlock, TwoHeadNetwork};
pub use sgd::{train_step, Sgd, SgdConfig, StepContext};

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the network can be instantiated with.
pub trait Real: Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Default + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("every Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
