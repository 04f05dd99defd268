//! Numerical and data core: the labeled embedding store, an exact t-SNE
//! projector and the selection analytics built on top of both.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the service uses.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dataset;
pub mod scalar;
pub mod synth;
pub mod tsne;

pub use analytics::{
    Analytics, AnalyticsError, ClassReport, ClassSummary, ConfusionPair, Neighbor, NeighborSpace,
    SelectionStats,
};
pub use dataset::{
    load_dataset, write_dataset, ClassIndex, Dataset, DatasetError, DatasetIdentity,
    DatasetManifest, DerivedStatistics, Instance, InstanceId,
};
pub use scalar::Scalar;
pub use synth::{synthesize_dataset, Confusion, SynthesisError, SynthesisSpec};
pub use tsne::{
    calibrate_row, compute_affinities, gradient, kl_divergence, run_projection, Initialization,
    ProjectionConfig, ProjectionError, ProjectionResult, Projector,
};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Instance64 = Instance<f64>;
pub type ProjectionConfig64 = ProjectionConfig<f64>;
pub type ProjectionResult64 = ProjectionResult<f64>;
pub type ProjectionConfig32 = ProjectionConfig<f32>;
pub type ProjectionResult32 = ProjectionResult<f32>;
pub type SelectionStats64 = SelectionStats<f64>;
pub type Layout64 = ndarray::Array2<f64>;
