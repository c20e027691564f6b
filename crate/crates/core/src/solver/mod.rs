//! Krylov solver, smoothers and the geometric multigrid preconditioner.

mod gmres;
mod multigrid;
mod smoother;

pub use gmres::{gmres_solve, GmresOutcome, IdentityPreconditioner, KrylovSettings, LinearOperator, Preconditioner};
pub use multigrid::{cell_blocks, node_interleaving, streamwise_ordering, CoarseOperator, CycleSettings, MultigridContext};
pub use smoother::{smooth, Ilu0, Smoother, SmootherHints, SmootherKind};
