//! Random-graph ensembles: degree distributions and configuration-model
//! sampling.

mod degree;
mod graph;
mod quadrature;

pub use degree::{DegreeDistribution, DegreeKind, DEFAULT_TAIL_MASS};
pub use graph::{sample_graph, Graph};
