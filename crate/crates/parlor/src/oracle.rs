use std::sync::Arc;

use nalgebra::DVector;

use crate::eim::weighted::CoefficientTable;
use crate::error::Result;
use crate::family::{LowRankVectorFamily, MatrixFactor};
use crate::ledger::OracleLedger;
use crate::sample::SampleSet;
use crate::sparse::Pattern;

/// Problem interface consumed by the Newton driver.
///
/// Implementations provide the raw evaluators; the provided wrappers tally
/// each call in the ledger. Entry evaluators must agree with the matching
/// entry of the full evaluators. The `*_uncounted` accessors exist for
/// interpolant-internal evaluations (anchored rows of a built interpolant),
/// which are not oracle samples of the unknown quantity.
///
/// Oracles are evaluated from parallel per-sample maps, so implementations
/// must be `Sync`; the ledger's atomic counters already are.
pub trait ProblemOracle: Sync {
    /// Number of spatial unknowns.
    fn dim(&self) -> usize;

    fn samples(&self) -> &SampleSet;

    fn ledger(&self) -> &OracleLedger;

    /// Admissible sparsity pattern of the preconditioner.
    fn pattern(&self) -> Arc<Pattern>;

    /// Residual vector at sample `q`, given the evaluated iterate `u_q`.
    fn residual_full_raw(&self, u_q: &DVector<f64>, q: usize) -> Result<DVector<f64>>;

    /// Single residual entry from the factored iterate; implementations
    /// touch only the entries of `u(x_q)` in the stencil of row `i`.
    fn residual_entry_raw(&self, u: &LowRankVectorFamily, i: usize, q: usize) -> Result<f64>;

    /// Preconditioner at sample `q`, given the evaluated iterate `u_q`.
    fn precond_full_raw(&self, u_q: &DVector<f64>, q: usize) -> Result<MatrixFactor>;

    /// Single preconditioner entry, addressed by pattern position.
    fn precond_entry_raw(&self, u: &LowRankVectorFamily, pos: usize, q: usize) -> Result<f64>;

    /// Known-structure coefficient tables `(gamma, phi)` for the residual
    /// and preconditioner given the iterate's coefficient factors, when the
    /// problem exposes its algebraic structure.
    fn structure_tables(
        &self,
        u: &LowRankVectorFamily,
    ) -> Option<(CoefficientTable, CoefficientTable)>;

    fn residual_full(&self, u_q: &DVector<f64>, q: usize) -> Result<DVector<f64>> {
        self.ledger().count_residual_vector();
        self.residual_full_raw(u_q, q)
    }

    fn residual_entry(&self, u: &LowRankVectorFamily, i: usize, q: usize) -> Result<f64> {
        self.ledger().count_residual_entry();
        self.residual_entry_raw(u, i, q)
    }

    fn residual_entry_uncounted(
        &self,
        u: &LowRankVectorFamily,
        i: usize,
        q: usize,
    ) -> Result<f64> {
        self.residual_entry_raw(u, i, q)
    }

    fn precond_full(&self, u_q: &DVector<f64>, q: usize) -> Result<MatrixFactor> {
        self.ledger().count_precond_matrix();
        self.precond_full_raw(u_q, q)
    }

    fn precond_entry(&self, u: &LowRankVectorFamily, pos: usize, q: usize) -> Result<f64> {
        self.ledger().count_precond_entry();
        self.precond_entry_raw(u, pos, q)
    }

    fn precond_entry_uncounted(
        &self,
        u: &LowRankVectorFamily,
        pos: usize,
        q: usize,
    ) -> Result<f64> {
        self.precond_entry_raw(u, pos, q)
    }
}
