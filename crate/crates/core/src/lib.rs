//! Stochastic Quantization and the K-Means family.
//!
//! The library quantizes a weighted point cloud into `K` centers (quants) by
//! minimizing `F(y) = Σ_i p_i · min_k ‖ξ_i − y_k‖^r`. Two families of
//! solvers are provided:
//!
//! * [`sq`]: one-sample-per-iteration generalized-gradient descent with a
//!   projection step, driven by any of the update rules in [`optim`]
//!   (plain SGD, heavy-ball momentum, Nesterov, AdaGrad, RMSProp, ADAM).
//! * [`kmeans`]: Lloyd iteration, K-Means++ seeding, mini-batch K-Means,
//!   full-batch generalized gradient descent and stochastic K-Means.
//!
//! Supporting modules compute objectives and lower bounds ([`objective`]),
//! generalized gradients ([`gradients`]), classification scores
//! ([`eval`]), binary and text file formats ([`io`]), and deterministic
//! synthetic fixtures ([`synth`]). The [`cli`] module backs the `sq`
//! binary.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below name the common instantiations.

pub mod cli;
pub mod error;
pub mod eval;
pub mod gradients;
pub mod io;
pub mod kmeans;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sq;
pub mod synth;

pub use error::{Error, FormatError, Result};
pub use model::{
    project, validate_schedule, Codebook, ConvergenceTrace, FeatureSet, Labels, LearningSchedule,
    ProjectionRegion, ScheduleReport, TraceRecord,
};
pub use scalar::Scalar;

pub type FeatureSet64 = FeatureSet<f64>;
pub type FeatureSet32 = FeatureSet<f32>;
pub type Codebook64 = Codebook<f64>;
pub type Codebook32 = Codebook<f32>;
pub type Region64 = ProjectionRegion<f64>;
pub type Region32 = ProjectionRegion<f32>;
pub type Schedule64 = LearningSchedule<f64>;
pub type Schedule32 = LearningSchedule<f32>;
pub type Trace64 = ConvergenceTrace<f64>;
pub type Trace32 = ConvergenceTrace<f32>;
pub type SqConfig64 = sq::SqConfig<f64>;
pub type SqConfig32 = sq::SqConfig<f32>;
pub type KMeansConfig64 = kmeans::KMeansConfig<f64>;
pub type KMeansConfig32 = kmeans::KMeansConfig<f32>;
