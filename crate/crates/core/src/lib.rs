//! Certified low-rank SDP solver for graph bisection and equipartition.
//!
//! The solvers are generic over the scalar type; the aliases below fix it
//! to `f64`, which is what the certificates are tuned for.

pub mod alm;
pub mod bisection;
pub mod certify;
pub mod escape;
pub mod generators;
pub mod graph_io;
pub mod linalg;
pub mod scalar;
pub mod variety;

pub use alm::{solve_equipartition, AlmConfig};
pub use bisection::{default_rank, solve_bisection, BbConfig, BbVariant, BisectConfig, SolveError};
pub use certify::{EigSettings, ProblemKind, RankDrop, SolveReport, Termination};
pub use graph_io::{laplacian, load_graph, Graph, GraphError, GraphFormat};
pub use scalar::Real;

pub type Laplacian = graph_io::Laplacian<f64>;
pub type VarietyPoint = variety::VarietyPoint<f64>;
pub type Certificate = certify::Certificate<f64>;
pub type Solution = bisection::Solution<f64>;

pub type Laplacian32 = graph_io::Laplacian<f32>;
pub type VarietyPoint32 = variety::VarietyPoint<f32>;
pub type Solution32 = bisection::Solution<f32>;
