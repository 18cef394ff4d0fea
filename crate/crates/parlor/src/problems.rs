//! The two benchmark problems on a five-point finite-difference grid over
//! the unit square with homogeneous Dirichlet boundary:
//!
//! - cubic reaction-diffusion: `-lap(u) + (x/3) u^3 = 1`, preconditioned by
//!   the Jacobian of the operator (known coefficient structure available);
//! - exponential diffusion: `-div(exp(x u) grad u) = 1`, preconditioned by
//!   the symmetric frozen-coefficient diffusion operator (black box).
//!
//! Unknowns are the interior nodes in lexicographic order: node
//! `(ix, iy)` maps to index `iy * n + ix` with `ix` fastest. The residual
//! convention is `R(u; x) = rhs - operator(u)`, so the Newton preconditioner
//! is the operator derivative.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::eim::weighted::CoefficientTable;
use crate::error::{Error, Result};
use crate::family::{LowRankVectorFamily, MatrixFactor};
use crate::ledger::OracleLedger;
use crate::oracle::ProblemOracle;
use crate::sample::SampleSet;
use crate::sparse::{CsrMatrix, Pattern};

/// Guard for the exponential coefficient; beyond this the iterate has
/// diverged and `exp` would overflow.
const EXP_GUARD: f64 = 700.0;

/// Interior grid of an `n x n` finite-difference discretization of the unit
/// square; `h = 1/(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 interior points per side, got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn points_per_side(&self) -> usize {
        self.n
    }

    pub fn num_unknowns(&self) -> usize {
        self.n * self.n
    }

    pub fn mesh_width(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    /// Interior neighbors of a node (boundary values are zero and dropped).
    fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(idx);
        let n = self.n;
        [
            (ix > 0).then(|| idx - 1),
            (ix + 1 < n).then(|| idx + 1),
            (iy > 0).then(|| idx - n),
            (iy + 1 < n).then(|| idx + n),
        ]
        .into_iter()
        .flatten()
    }

    /// Shared five-point sparsity pattern.
    pub fn five_point_pattern(&self) -> Result<Arc<Pattern>> {
        let n2 = self.num_unknowns();
        let mut entries = Vec::with_capacity(5 * n2);
        for i in 0..n2 {
            entries.push((i, i));
            for j in self.neighbors(i) {
                entries.push((i, j));
            }
        }
        Pattern::new(n2, n2, entries)
    }
}

/// `rhs - (-lap(u) + (x/3) u^3)` with `rhs = 1` at every node.
pub fn cubic_reaction_residual(u_q: &DVector<f64>, xi: f64, grid: &GridSpec) -> Result<DVector<f64>> {
    let n2 = grid.num_unknowns();
    if u_q.len() != n2 {
        return Err(Error::DimensionMismatch {
            context: "state length vs grid unknowns",
            expected: n2,
            got: u_q.len(),
        });
    }
    let inv_h2 = 1.0 / (grid.mesh_width() * grid.mesh_width());
    let mut r = DVector::zeros(n2);
    for i in 0..n2 {
        let mut lap = 4.0 * u_q[i];
        for j in grid.neighbors(i) {
            lap -= u_q[j];
        }
        r[i] = 1.0 - lap * inv_h2 - xi / 3.0 * u_q[i] * u_q[i] * u_q[i];
    }
    Ok(r)
}

/// Jacobian of the cubic reaction operator: `A_lap + x diag(u^2)`,
/// assembled on the grid's shared pattern.
pub fn cubic_reaction_jacobian(
    u_q: &DVector<f64>,
    xi: f64,
    grid: &GridSpec,
    pattern: &Arc<Pattern>,
) -> Result<CsrMatrix> {
    let n2 = grid.num_unknowns();
    if u_q.len() != n2 {
        return Err(Error::DimensionMismatch {
            context: "state length vs grid unknowns",
            expected: n2,
            got: u_q.len(),
        });
    }
    let inv_h2 = 1.0 / (grid.mesh_width() * grid.mesh_width());
    let mut out = CsrMatrix::zeros(pattern.clone());
    for i in 0..n2 {
        let diag = pattern.position(i, i).expect("diagonal in pattern");
        out.values_mut()[diag] = 4.0 * inv_h2 + xi * u_q[i] * u_q[i];
        for j in grid.neighbors(i) {
            let pos = pattern.position(i, j).expect("neighbor in pattern");
            out.values_mut()[pos] = -inv_h2;
        }
    }
    Ok(out)
}

fn exp_face_coefficient(xi: f64, ui: f64, uj: f64) -> Result<f64> {
    let exponent = xi * 0.5 * (ui + uj);
    if exponent > EXP_GUARD {
        return Err(Error::Overflow { sample: usize::MAX, exponent });
    }
    Ok(exponent.exp())
}

/// `rhs - (-div(exp(x u) grad u))` with face coefficients from arithmetic
/// averaging of the adjacent node values; `rhs = 1`.
pub fn exp_diffusion_residual(u_q: &DVector<f64>, xi: f64, grid: &GridSpec) -> Result<DVector<f64>> {
    let n2 = grid.num_unknowns();
    if u_q.len() != n2 {
        return Err(Error::DimensionMismatch {
            context: "state length vs grid unknowns",
            expected: n2,
            got: u_q.len(),
        });
    }
    let inv_h2 = 1.0 / (grid.mesh_width() * grid.mesh_width());
    let mut r = DVector::zeros(n2);
    for i in 0..n2 {
        let (ix, iy) = (i % grid.n, i / grid.n);
        let mut flux = 0.0;
        let mut face = |uj: f64, interior: Option<usize>| -> Result<()> {
            let a = exp_face_coefficient(xi, u_q[i], uj)?;
            let _ = interior;
            flux += a * (u_q[i] - uj);
            Ok(())
        };
        face(if ix > 0 { u_q[i - 1] } else { 0.0 }, None)?;
        face(if ix + 1 < grid.n { u_q[i + 1] } else { 0.0 }, None)?;
        face(if iy > 0 { u_q[i - grid.n] } else { 0.0 }, None)?;
        face(if iy + 1 < grid.n { u_q[i + grid.n] } else { 0.0 }, None)?;
        r[i] = 1.0 - flux * inv_h2;
    }
    Ok(r)
}

/// Frozen-coefficient diffusion operator `D(u; x)`: symmetric positive
/// definite on the five-point pattern.
pub fn exp_diffusion_precond(
    u_q: &DVector<f64>,
    xi: f64,
    grid: &GridSpec,
    pattern: &Arc<Pattern>,
) -> Result<CsrMatrix> {
    let n2 = grid.num_unknowns();
    if u_q.len() != n2 {
        return Err(Error::DimensionMismatch {
            context: "state length vs grid unknowns",
            expected: n2,
            got: u_q.len(),
        });
    }
    let inv_h2 = 1.0 / (grid.mesh_width() * grid.mesh_width());
    let mut out = CsrMatrix::zeros(pattern.clone());
    for i in 0..n2 {
        let (ix, iy) = (i % grid.n, i / grid.n);
        let mut diag = 0.0;
        let mut face = |uj: f64, interior: Option<usize>| -> Result<()> {
            let a = exp_face_coefficient(xi, u_q[i], uj)?;
            diag += a;
            if let Some(j) = interior {
                let pos = pattern.position(i, j).expect("neighbor in pattern");
                out.values_mut()[pos] = -a * inv_h2;
            }
            Ok(())
        };
        face(if ix > 0 { u_q[i - 1] } else { 0.0 }, (ix > 0).then(|| i - 1))?;
        face(
            if ix + 1 < grid.n { u_q[i + 1] } else { 0.0 },
            (ix + 1 < grid.n).then(|| i + 1),
        )?;
        face(
            if iy > 0 { u_q[i - grid.n] } else { 0.0 },
            (iy > 0).then(|| i - grid.n),
        )?;
        face(
            if iy + 1 < grid.n { u_q[i + grid.n] } else { 0.0 },
            (iy + 1 < grid.n).then(|| i + grid.n),
        )?;
        let pos = pattern.position(i, i).expect("diagonal in pattern");
        out.values_mut()[pos] = diag * inv_h2;
    }
    Ok(out)
}

/// Known-structure coefficient tables for the cubic reaction problem.
///
/// For an iterate `u(x) = sum_i v_i lambda_i(x)` the residual expands over
/// `1 + m + m^3` parameter functions (the constant load, the Laplacian
/// terms, and all cubic products) and the Jacobian over `1 + m^2`. Both
/// tables are computable from the coefficient factors alone, with no oracle
/// calls.
pub fn cubic_reaction_structure(
    lambda: &DMatrix<f64>,
    samples: &SampleSet,
) -> (CoefficientTable, CoefficientTable) {
    let m = lambda.nrows();
    let q = samples.len();
    debug_assert_eq!(lambda.ncols(), q);

    let mut gamma = DMatrix::zeros(1 + m + m * m * m, q);
    let mut phi = DMatrix::zeros(1 + m * m, q);
    for (col, &xi) in samples.values().iter().enumerate() {
        gamma[(0, col)] = 1.0;
        phi[(0, col)] = 1.0;
        for i in 0..m {
            gamma[(1 + i, col)] = lambda[(i, col)];
        }
        let mut row = 1 + m;
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    gamma[(row, col)] =
                        xi / 3.0 * lambda[(j, col)] * lambda[(k, col)] * lambda[(l, col)];
                    row += 1;
                }
            }
        }
        let mut prow = 1;
        for j in 0..m {
            for k in 0..m {
                phi[(prow, col)] = xi * lambda[(j, col)] * lambda[(k, col)];
                prow += 1;
            }
        }
    }
    (CoefficientTable::new(gamma), CoefficientTable::new(phi))
}

/// Which benchmark equation an [`FdProblem`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkProblem {
    CubicReaction,
    ExpDiffusion,
}

impl BenchmarkProblem {
    /// Upper endpoint of the log-uniform sampling recipe.
    pub fn recipe_upper(self) -> f64 {
        match self {
            BenchmarkProblem::CubicReaction => 10.0,
            BenchmarkProblem::ExpDiffusion => 3.0,
        }
    }
}

/// Seeded parameter draws `x = exp(z) - 1`, `z` uniform on the problem's
/// range.
pub fn sample_recipe(problem: BenchmarkProblem, count: usize, seed: u64) -> Result<SampleSet> {
    SampleSet::exp_uniform(count, problem.recipe_upper(), seed)
}

/// Finite-difference benchmark problem with call accounting.
pub struct FdProblem {
    kind: BenchmarkProblem,
    grid: GridSpec,
    samples: SampleSet,
    pattern: Arc<Pattern>,
    ledger: OracleLedger,
}

impl FdProblem {
    pub fn new(kind: BenchmarkProblem, grid: GridSpec, samples: SampleSet) -> Result<Self> {
        let pattern = grid.five_point_pattern()?;
        Ok(Self { kind, grid, samples, pattern, ledger: OracleLedger::new() })
    }

    pub fn kind(&self) -> BenchmarkProblem {
        self.kind
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn xi(&self, q: usize) -> Result<f64> {
        self.samples.value(q)
    }

    /// Stencil-local iterate values needed by entry evaluators.
    fn local_values(&self, u: &LowRankVectorFamily, i: usize, q: usize) -> Result<(f64, [f64; 4])> {
        let center = u.evaluate_entry(i, q)?;
        let (ix, iy) = self.grid.coords(i);
        let n = self.grid.n;
        let mut nb = [0.0f64; 4];
        if ix > 0 {
            nb[0] = u.evaluate_entry(i - 1, q)?;
        }
        if ix + 1 < n {
            nb[1] = u.evaluate_entry(i + 1, q)?;
        }
        if iy > 0 {
            nb[2] = u.evaluate_entry(i - n, q)?;
        }
        if iy + 1 < n {
            nb[3] = u.evaluate_entry(i + n, q)?;
        }
        Ok((center, nb))
    }

    fn with_sample<T>(result: Result<T>, q: usize) -> Result<T> {
        result.map_err(|e| match e {
            Error::Overflow { exponent, .. } => Error::Overflow { sample: q, exponent },
            other => other,
        })
    }
}

impl ProblemOracle for FdProblem {
    fn dim(&self) -> usize {
        self.grid.num_unknowns()
    }

    fn samples(&self) -> &SampleSet {
        &self.samples
    }

    fn ledger(&self) -> &OracleLedger {
        &self.ledger
    }

    fn pattern(&self) -> Arc<Pattern> {
        self.pattern.clone()
    }

    fn residual_full_raw(&self, u_q: &DVector<f64>, q: usize) -> Result<DVector<f64>> {
        let xi = self.xi(q)?;
        let r = match self.kind {
            BenchmarkProblem::CubicReaction => cubic_reaction_residual(u_q, xi, &self.grid),
            BenchmarkProblem::ExpDiffusion => exp_diffusion_residual(u_q, xi, &self.grid),
        };
        Self::with_sample(r, q)
    }

    fn residual_entry_raw(&self, u: &LowRankVectorFamily, i: usize, q: usize) -> Result<f64> {
        let xi = self.xi(q)?;
        let inv_h2 = 1.0 / (self.grid.mesh_width() * self.grid.mesh_width());
        let (center, nb) = self.local_values(u, i, q)?;
        match self.kind {
            BenchmarkProblem::CubicReaction => {
                let lap = 4.0 * center - nb.iter().sum::<f64>();
                Ok(1.0 - lap * inv_h2 - xi / 3.0 * center * center * center)
            }
            BenchmarkProblem::ExpDiffusion => {
                let mut flux = 0.0;
                for &uj in &nb {
                    let a = Self::with_sample(exp_face_coefficient(xi, center, uj), q)?;
                    flux += a * (center - uj);
                }
                Ok(1.0 - flux * inv_h2)
            }
        }
    }

    fn precond_full_raw(&self, u_q: &DVector<f64>, q: usize) -> Result<MatrixFactor> {
        let xi = self.xi(q)?;
        let m = match self.kind {
            BenchmarkProblem::CubicReaction => {
                cubic_reaction_jacobian(u_q, xi, &self.grid, &self.pattern)
            }
            BenchmarkProblem::ExpDiffusion => {
                exp_diffusion_precond(u_q, xi, &self.grid, &self.pattern)
            }
        };
        Ok(MatrixFactor::Sparse(Self::with_sample(m, q)?))
    }

    fn precond_entry_raw(&self, u: &LowRankVectorFamily, pos: usize, q: usize) -> Result<f64> {
        let xi = self.xi(q)?;
        let (i, j) = self.pattern.entries()[pos];
        let inv_h2 = 1.0 / (self.grid.mesh_width() * self.grid.mesh_width());
        match self.kind {
            BenchmarkProblem::CubicReaction => {
                if i == j {
                    let center = u.evaluate_entry(i, q)?;
                    Ok(4.0 * inv_h2 + xi * center * center)
                } else {
                    Ok(-inv_h2)
                }
            }
            BenchmarkProblem::ExpDiffusion => {
                if i == j {
                    let (center, nb) = self.local_values(u, i, q)?;
                    let mut diag = 0.0;
                    for &uj in &nb {
                        diag += Self::with_sample(exp_face_coefficient(xi, center, uj), q)?;
                    }
                    Ok(diag * inv_h2)
                } else {
                    let ui = u.evaluate_entry(i, q)?;
                    let uj = u.evaluate_entry(j, q)?;
                    let a = Self::with_sample(exp_face_coefficient(xi, ui, uj), q)?;
                    Ok(-a * inv_h2)
                }
            }
        }
    }

    fn structure_tables(
        &self,
        u: &LowRankVectorFamily,
    ) -> Option<(CoefficientTable, CoefficientTable)> {
        match self.kind {
            BenchmarkProblem::CubicReaction => {
                Some(cubic_reaction_structure(u.coeff(), &self.samples))
            }
            BenchmarkProblem::ExpDiffusion => None,
        }
    }
}
