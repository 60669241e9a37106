//! Low-rank GMRES for the saddle-point form of weak-constraint 4D-Var.

pub mod assimilation;
pub mod error;
pub mod experiment;
pub mod lowrank;
pub mod models;
pub mod precond;
pub mod gmres;
pub mod saddle;
pub mod svd;

pub use error::{Error, Result};
pub use lowrank::{trace_product, LowRankFactor, Mat, TripleBlock, TruncationPolicy, Vector};
pub use gmres::{solve, GmresConfig, SolveReport};
pub use saddle::{amult, amult_td, assemble_dense, SaddleSystem, TimeInvariantSystem, TimeVaryingSystem};
