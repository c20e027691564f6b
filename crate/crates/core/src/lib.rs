//! Deep neural network multigrid: a Navier-Stokes finite element solver on a
//! two-level mesh hierarchy whose coarse solution is corrected each time step
//! by a patch-local stacked GRU.
//!
//! All numerics are generic over [`Real`]; the aliases at the crate root fix
//! the scalar to `f64` (or `f32` where that is useful).

mod binio;
pub mod discretization;
pub mod dnnmg;
pub mod error;
pub mod evaluation;
pub mod fem;
pub mod mesh;
pub mod neural;
pub mod newton;
pub mod scalar;
pub mod solver;
pub mod sparse;
pub mod training;

pub use discretization::Discretization;
pub use error::{Error, Result};
pub use scalar::Real;

pub type MeshHierarchyF64 = mesh::MeshHierarchy<f64>;
pub type GeometryConfigF64 = mesh::GeometryConfig<f64>;
pub type FeSpaceF64 = fem::FeSpace<f64>;
pub type FlowStateF64 = fem::FlowState<f64>;
pub type ProblemParamsF64 = fem::ProblemParams<f64>;
pub type CsrMatrixF64 = sparse::CsrMatrix<f64>;
pub type NetworkF64 = neural::Network<f64>;
pub type DiscretizationF64 = discretization::Discretization<f64>;
