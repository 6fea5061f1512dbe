//! Stochastic projected Wasserstein gradient descent on particle measures.
//!
//! A belief over parameters is an equal-weight particle cloud
//! ([`ParticleMeasure`]). Each observation from a linear data stream moves
//! every particle along an unbiased estimate of the Wasserstein gradient of
//! a least-squares objective and projects it back onto a convex support
//! set. The [`pdm`] module applies this to predictive maintenance of a
//! degrading second-order plant.
//!
//! All numerics are generic over [`Scalar`] (`f32`/`f64`); the `*F64`
//! aliases below are what the command-line tool uses.

pub mod error;
pub mod flow;
pub mod functionals;
pub mod linalg;
pub mod measures;
pub mod pdm;
pub mod rng;
pub mod scalar;
pub mod sets;
pub mod transport;

pub use error::{Error, ErrorKind, Result};
pub use flow::{FlowConfig, FlowTrace, StepBoundReport};
pub use functionals::{GradientField, StreamingLsObjective};
pub use linalg::Matrix;
pub use measures::ParticleMeasure;
pub use scalar::Scalar;
pub use sets::ConvexSet;
pub use transport::TransportPlan;

pub type ParticleMeasureF64 = ParticleMeasure<f64>;
pub type ParticleMeasureF32 = ParticleMeasure<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type ConvexSetF64 = ConvexSet<f64>;
pub type ConvexSetF32 = ConvexSet<f32>;
pub type ObjectiveF64 = StreamingLsObjective<f64>;
pub type ObjectiveF32 = StreamingLsObjective<f32>;
pub type FlowConfigF64 = FlowConfig<f64>;
pub type StepBoundReportF64 = StepBoundReport<f64>;
pub type FlowTraceF64 = FlowTrace<f64>;
pub type CaseStudyF64 = pdm::CaseStudy<f64>;
pub type DegradationModelF64 = pdm::DegradationModel<f64>;
pub type PlantParamsF64 = pdm::PlantParams<f64>;
pub type ObservationF64 = pdm::Observation<f64>;
