#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dense;
pub mod error;
pub mod fieldline;
pub mod grid;
pub mod harness;
pub mod kron;
pub mod parallel;
pub mod perp;
pub mod sbp;
pub mod solver;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations used by the harness and the CLI.
pub type Grid2D64 = grid::Grid2D<f64>;
pub type PerpOperator64 = perp::PerpOperator<f64>;
pub type ParallelMap64 = parallel::ParallelMap<f64>;
pub type ParallelPenalty64 = parallel::ParallelPenalty<f64>;
pub type Problem64 = solver::Problem<f64>;
pub type SolverState64 = solver::SolverState<f64>;
