//! CrossAdapt: two-stage knowledge transfer for user-response prediction.
//!
//! Stage 1 moves a trained teacher's knowledge into a new student
//! architecture offline: the embedding table is carried over by a
//! dimension-adaptive projection, the interaction network is distilled
//! progressively (frozen embeddings first, then joint), and training runs on
//! a strategically sampled slice of the available data. Stage 2 keeps both
//! models learning on the live stream: the student updates every step, the
//! teacher accumulates task gradients and updates on a slower cadence, and
//! batches are enriched with historical samples when feature distributions
//! look stable.
//!
//! The crate is self-contained: dense kernels, a minimal deep-learning engine
//! with hand-coded gradients, samplers, drift detection, trainers, metrics,
//! synthetic data, and CSV ingestion.

pub mod dataio;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod offline;
pub mod online;
pub mod projection;
pub mod rng;
pub mod sampler;
pub mod shift;
pub mod util;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
pub use linalg::{EigenResult, Matrix};
pub use model::{
    AdamState, ArchKind, EmbeddingTable, FieldKind, FieldSchema, InteractionNet, PredictionModel,
    Sample, SampleBatch,
};
pub use projection::{PlanKind, ProjectionPlan};
pub use rng::Rng64;
