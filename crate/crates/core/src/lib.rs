//! Anonymization of VR head and hand telemetry.
//!
//! The crate covers the whole pipeline: motion primitives and windowing,
//! recording ingestion and pair sampling, the LSTM-funnel identifier and
//! Siamese similarity models, the noise-conditioned causal anonymizer and
//! its normalizer, training procedures, batch/streaming deployment, and an
//! evaluation harness for cross-session unlinkability.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). Geometry and
//! statistics default to `f64`, networks to `f32`; see the aliases below.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod motion;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod runtime;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used for recordings and geometric preprocessing.
pub type Real = f64;
/// Scalar used for network weights and inference.
pub type Weight = f32;

pub type Frame = motion::MotionFrame<Real>;
pub type Sequence = motion::MotionSequence<Real>;
pub type Window = motion::NormalizedWindow<Weight>;
