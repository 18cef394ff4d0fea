//! Empirical interpolation of parameter-dependent residuals and
//! preconditioners.
//!
//! Two constructions are provided: a weighted greedy EIM for quantities with
//! partially known low-rank structure ([`weighted`]) and a randomized EIM
//! (adaptive cross approximation with partial pivoting) with a statistical
//! error certificate for black-box quantities ([`randomized`]).

pub mod randomized;
pub mod weighted;
