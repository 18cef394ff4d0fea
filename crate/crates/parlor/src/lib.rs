//! Low-rank solver for systems of nonlinear parameter-dependent equations
//! `R(u(x); x) = 0` over a finite sample set, built around:
//!
//! - empirical interpolation of the residual and the preconditioner, either
//!   weighted by a recovered Gram matrix (known coefficient structure) or
//!   randomized with a statistical error certificate (black-box entries),
//! - a greedy rank-one alternating-minimization solver for the linear
//!   increment equations,
//! - SVD truncation of the iterates, and
//! - a truncated inexact-Newton outer loop with forcing-term schedules.
//!
//! Oracle traffic (full vectors/matrices and single entries) is tallied in an
//! [`OracleLedger`] so complexity can be compared against a per-sample
//! Monte-Carlo baseline.

pub mod eim;
pub mod error;
pub mod family;
pub mod ledger;
pub mod newton;
pub mod norm;
pub mod oracle;
pub mod problems;
pub mod rankone;
pub mod sample;
pub mod sparse;
pub mod stats;
pub mod truncate;

pub use error::{Error, Result};
pub use family::{LowRankMatrixFamily, LowRankVectorFamily, MatrixFactor};
pub use ledger::{LedgerSnapshot, OracleLedger};
pub use norm::NormSpec;
pub use sample::SampleSet;
pub use truncate::Truncator;
