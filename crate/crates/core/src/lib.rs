//! Learning curves of Gaussian-process regression with random-walk kernels
//! on sparse random graphs.
//!
//! Two routes to the Bayes error `ε(ν)` as a function of examples per
//! vertex `ν`:
//!
//! * [`exact_gp`] samples finite graphs and training sets and averages exact
//!   posterior variances;
//! * [`cavity`] solves the large-graph limit by population dynamics over
//!   cavity covariance messages, with either a globally normalized kernel
//!   ([`cavity::global`]) or a locally normalized one ([`cavity::local`]).
//!
//! [`harness`] wires both into configurable experiments producing CSV files.
//!
//! Numerical code is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`, which is what the harness uses.

pub mod cavity;
pub mod ensembles;
pub mod error;
pub mod exact_gp;
pub mod harness;
pub mod kernel;
pub mod scalar;
pub mod stats;

pub use ensembles::{sample_graph, DegreeDistribution, DegreeKind, Graph};
pub use error::{Error, NumericalError, Result};
pub use exact_gp::{LearningCurvePoint, NoiseModel, SimulationSettings, TrainingCounts};
pub use cavity::population::{Estimate, SolverDiagnostics, SolverSettings};
pub use kernel::{KernelParams, Normalization};
pub use scalar::Real;

pub type KernelMatrix = kernel::KernelMatrix<f64>;
pub type CavityMessage = cavity::core::CavityMessage<f64>;
pub type CavityGeometry = cavity::core::CavityGeometry<f64>;
pub type PinnedMessage = cavity::core::PinnedMessage<f64>;
pub type LocalPair = cavity::local::LocalPair<f64>;
pub type GlobalSolver = cavity::global::GlobalSolver<f64>;
pub type LocalSolver = cavity::local::LocalSolver<f64>;
