//! Teacher-student feature-transfer training toolkit.
//!
//! A student network is trained with softmax cross-entropy plus a mean-squared-error
//! regression onto the penultimate features of a frozen, pre-trained teacher network.
//! Batches can optionally be expanded with deterministic LCG-generated random images
//! that the teacher pseudo-labels.
//!
//! The numeric core is generic over the scalar type: `f64` for verification-grade
//! runs and gradient checking, `f32` for training and the on-disk checkpoint format.

pub mod augment;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod persist;
pub mod train;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

pub use error::{Error, Result};

pub use augment::{AugmentConfig, LabelMode, LcgState};
pub use autodiff::graph::{Graph, LossValue, NodeId, Reduction};
pub use autodiff::tensor::Tensor;
pub use data::{BatchPlan, Dataset};
pub use model::{build_model, validate_pair, CompatReport, LayerSpec, Mode, ModelState, NetworkSpec};
pub use optim::{Adam, AdamHyper, LrSchedule};
pub use train::{
    evaluate, train_student, train_teacher, write_metrics_csv, EpochMetrics, Seeds, TrainConfig,
    TrainMode,
};

/// Scalar element type for all tensor math: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` intermediates (seeding, schedules,
    /// random draws are computed in `f64` and narrowed once).
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type Model32 = ModelState<f32>;
pub type Model64 = ModelState<f64>;
