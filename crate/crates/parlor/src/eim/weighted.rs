//! Interpolation of a residual `R(x) = sum_i g_i gamma_i(x)` whose
//! coefficient functions `gamma` are known but whose spatial factors `g_i`
//! are not.
//!
//! The factor matrix `G` is recovered from `s` residual evaluations at
//! pivot samples, which yields the Gram matrix `W = G' M G`. A greedy EIM on
//! the coefficient table, measured in the `W` semi-norm, then controls the
//! lifted residual error exactly: `||R - I_r[R]||_M = ||gamma - I_r[gamma]||_W`
//! whenever the structure is exact.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::LowRankVectorFamily;
use crate::norm::NormSpec;

/// Table of known coefficient functions: `gamma[i, q] = gamma_i(x_q)`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    gamma: DMatrix<f64>,
}

impl CoefficientTable {
    pub fn new(gamma: DMatrix<f64>) -> Self {
        Self { gamma }
    }

    /// Number of coefficient functions `s`.
    pub fn num_functions(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }
}

/// Recovered spatial factors and their Gram matrix.
#[derive(Debug, Clone)]
pub struct GramData {
    /// Recovered factor matrix `G`, `N x s`.
    pub g: DMatrix<f64>,
    /// Gram matrix `W = G' M G`, symmetric positive semi-definite.
    pub w: DMatrix<f64>,
    /// Samples at which the residual was evaluated, in pivot order.
    pub pivot_samples: Vec<usize>,
    /// Row rank of the table the recovery ran on.
    pub effective_rank: usize,
}

/// Greedily built interpolant of the coefficient functions.
#[derive(Debug, Clone)]
pub struct VectorInterpolant {
    points: Vec<usize>,
    magic_indices: Vec<usize>,
    /// `basis_values[k, j] = gamma_{i_k}(x*_j)`.
    basis_values: DMatrix<f64>,
    /// Stored table columns at the interpolation points, `s x r`.
    snapshot_columns: DMatrix<f64>,
    achieved_error: f64,
}

impl VectorInterpolant {
    pub fn rank(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn magic_indices(&self) -> &[usize] {
        &self.magic_indices
    }

    pub fn basis_values(&self) -> &DMatrix<f64> {
        &self.basis_values
    }

    pub fn snapshot_columns(&self) -> &DMatrix<f64> {
        &self.snapshot_columns
    }

    /// Worst `W`-semi-norm interpolation error over the sample set at exit.
    pub fn achieved_error(&self) -> f64 {
        self.achieved_error
    }

    /// Interpolation coefficients `alpha[j, q]` for every sample of `table`,
    /// solving the `r x r` magic-entry system once by LU.
    pub fn alphas(&self, table: &CoefficientTable) -> Result<DMatrix<f64>> {
        let r = self.rank();
        if r == 0 {
            return Ok(DMatrix::zeros(0, table.num_samples()));
        }
        let mut rhs = DMatrix::zeros(r, table.num_samples());
        for (k, &i) in self.magic_indices.iter().enumerate() {
            rhs.row_mut(k).copy_from(&table.gamma().row(i));
        }
        let lu = self.basis_values.clone().lu();
        lu.solve(&rhs).ok_or(Error::SingularInterpolation { rank: r })
    }

    /// `I_r[gamma]` over the whole table, `s x Q`.
    pub fn interpolate_table(&self, table: &CoefficientTable) -> Result<DMatrix<f64>> {
        if self.rank() == 0 {
            return Ok(DMatrix::zeros(table.num_functions(), table.num_samples()));
        }
        Ok(&self.snapshot_columns * self.alphas(table)?)
    }
}

/// Column-pivoted Householder QR with early termination.
///
/// Factors `a` (m x n) as `a[:, pivots[..k]] ~ q r` with `q` thin
/// orthonormal (m x k) and `r` (k x n) upper-trapezoidal in pivot order.
/// Stops once the largest remaining column norm falls to `tol` times the
/// largest initial column norm (or after `max_steps`). Residual column norms
/// are recomputed exactly at every step; ties pick the smallest index.
fn col_piv_qr(
    a: &DMatrix<f64>,
    tol: f64,
    max_steps: usize,
) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>, usize) {
    let (m, n) = (a.nrows(), a.ncols());
    let kmax = max_steps.min(m).min(n);
    let mut work = a.clone();
    let mut pivots: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::new();

    let initial_max = (0..n)
        .map(|j| work.column(j).norm_squared())
        .fold(0.0f64, f64::max);
    let threshold = tol * tol * initial_max;

    let mut k = 0;
    while k < kmax {
        let mut best = k;
        let mut best_norm = work.column(k).rows(k, m - k).norm_squared();
        for j in (k + 1)..n {
            let nj = work.column(j).rows(k, m - k).norm_squared();
            if nj > best_norm {
                best_norm = nj;
                best = j;
            }
        }
        if best_norm <= threshold || best_norm == 0.0 {
            break;
        }
        if best != k {
            work.swap_columns(k, best);
            pivots.swap(k, best);
        }

        // Householder reflector for the trailing part of column k.
        let mut v = DVector::zeros(m - k);
        v.copy_from(&work.column(k).rows(k, m - k));
        let alpha = -v[0].signum() * v.norm();
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            for j in k..n {
                let mut dot = 0.0;
                for i in 0..(m - k) {
                    dot += v[i] * work[(k + i, j)];
                }
                let scale = 2.0 * dot / vnorm2;
                let mut col = work.column_mut(j);
                for i in 0..(m - k) {
                    col[k + i] -= scale * v[i];
                }
            }
        }
        reflectors.push(v);
        k += 1;
    }

    // r in pivot order: the first k rows of the reduced matrix.
    let r_mat = work.rows(0, k).into_owned();

    // Accumulate q = H_0 ... H_{k-1} applied to the leading k identity columns.
    let mut q = DMatrix::zeros(m, k);
    for j in 0..k {
        q[(j, j)] = 1.0;
    }
    for (step, v) in reflectors.iter().enumerate().rev() {
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..k {
            let mut dot = 0.0;
            for i in 0..(m - step) {
                dot += v[i] * q[(step + i, j)];
            }
            let scale = 2.0 * dot / vnorm2;
            let mut col = q.column_mut(j);
            for i in 0..(m - step) {
                col[step + i] -= scale * v[i];
            }
        }
    }

    (q, r_mat, pivots, k)
}

/// Row-rank reduction `Gamma ~ L Gamma_tilde` with `Gamma_tilde` of full row
/// rank.
///
/// Rank is decided on singular values (`sigma > tol * sigma_max`). A pivoted
/// QR of the transpose with a safety margin first compresses the row space,
/// then an SVD of the small core fixes the cut, so the cost stays
/// `O(s Q k)` even for very tall tables. A table that already has full row
/// rank is returned unchanged with `L = I`.
pub fn reduce_rank(table: &CoefficientTable, tol: f64) -> Result<(CoefficientTable, DMatrix<f64>)> {
    if tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be nonnegative, got {tol}"
        )));
    }
    let s = table.num_functions();
    let q = table.num_samples();
    if s == 0 || q == 0 {
        return Ok((table.clone(), DMatrix::identity(s, s)));
    }

    // Stage 1: orthonormal basis of the row space with a safety margin
    // below the requested cut; the SVD of the small core makes the final
    // singular-value decision.
    let transposed = table.gamma().transpose();
    let safety = if tol > 0.0 { (tol * 1e-3).max(1e-15) } else { 0.0 };
    let (q_basis, r_piv, pivots, k) = col_piv_qr(&transposed, safety, s.min(q));
    if k == 0 {
        return Ok((
            CoefficientTable::new(DMatrix::zeros(0, q)),
            DMatrix::zeros(s, 0),
        ));
    }

    // Undo the pivot ordering: rows of gamma correspond to columns of the
    // transpose, so r columns map back through `pivots`.
    let mut r_unpiv = DMatrix::zeros(k, s);
    for (pos, &orig) in pivots.iter().enumerate() {
        r_unpiv.column_mut(orig).copy_from(&r_piv.column(pos));
    }

    // Stage 2: gamma ~ r_unpiv' q_basis'; the singular values of gamma are
    // those of r_unpiv.
    let core = r_unpiv.transpose(); // s x k
    let mut svd = core.svd(true, true);
    svd.sort_by_singular_values();
    let sigma = &svd.singular_values;
    let sigma_max = sigma.amax();
    if sigma_max <= 0.0 {
        return Ok((
            CoefficientTable::new(DMatrix::zeros(0, q)),
            DMatrix::zeros(s, 0),
        ));
    }
    let cutoff = if tol > 0.0 { tol * sigma_max } else { 0.0 };
    let keep = (0..sigma.len()).take_while(|&i| sigma[i] > cutoff).count().max(1);

    if keep == s {
        return Ok((table.clone(), DMatrix::identity(s, s)));
    }

    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let l = u.columns(0, keep).into_owned();
    let mut reduced = DMatrix::zeros(keep, q);
    // gamma_tilde = Sigma V' Q'
    let vq = vt.rows(0, keep) * q_basis.transpose();
    for i in 0..keep {
        reduced.row_mut(i).copy_from(&(vq.row(i) * sigma[i]));
    }
    Ok((CoefficientTable::new(reduced), l))
}

/// Recovers the factor matrix `G` and Gram matrix `W = G' M G` from exactly
/// `s` residual evaluations at pivot samples.
///
/// The table must have full row rank (apply [`reduce_rank`] first); the
/// pivot samples come from a column-pivoted QR of the table.
pub fn recover_gram(
    table: &CoefficientTable,
    residual_at: &mut dyn FnMut(usize) -> DVector<f64>,
    norm: &NormSpec,
) -> Result<GramData> {
    let s = table.num_functions();
    if s == 0 {
        return Err(Error::InvalidArgument(
            "gram recovery needs at least one coefficient function".into(),
        ));
    }
    if s > table.num_samples() {
        return Err(Error::InvalidArgument(format!(
            "gram recovery needs at least as many samples as functions ({s})"
        )));
    }

    let (_, _, pivots, k) = col_piv_qr(table.gamma(), 0.0, s);
    if k < s {
        return Err(Error::SingularPivotBlock { cond: f64::INFINITY });
    }
    let pivot_samples = pivots[..s].to_vec();

    let mut gamma_piv = DMatrix::zeros(s, s);
    for (j, &q) in pivot_samples.iter().enumerate() {
        gamma_piv.column_mut(j).copy_from(&table.gamma().column(q));
    }
    let svd = gamma_piv.clone().svd(false, false);
    let smax = svd.singular_values.amax();
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::SingularPivotBlock { cond: smax / smin.max(f64::MIN_POSITIVE) });
    }

    let snapshots = {
        let first = residual_at(pivot_samples[0]);
        let mut cols = DMatrix::zeros(first.len(), s);
        cols.column_mut(0).copy_from(&first);
        for (j, &q) in pivot_samples.iter().enumerate().skip(1) {
            cols.column_mut(j).copy_from(&residual_at(q));
        }
        cols
    };

    // G = R' (Gamma')^{-1}, solved against the transposed pivot block.
    let lu = gamma_piv.transpose().lu();
    let gt = lu
        .solve(&snapshots.transpose())
        .ok_or(Error::SingularPivotBlock { cond: smax / smin })?;
    let g = gt.transpose();
    let mut w = norm.gram(&g);
    // Symmetrize round-off.
    let wt = w.transpose();
    w = (w + wt) * 0.5;

    Ok(GramData { g, w, pivot_samples, effective_rank: s })
}

/// Per-state greedy diagnostics handed to stopping rules.
#[derive(Debug, Clone, Copy)]
pub struct EimState {
    pub rank: usize,
    /// Worst per-sample W-semi-norm error.
    pub max_error: f64,
    /// Global W-semi-norm error over all samples.
    pub global_error: f64,
    /// Global W-semi-norm of the interpolant itself.
    pub interp_norm: f64,
}

/// Outcome check used by the greedy loop; returns true to stop.
type StopRule<'a> = &'a mut dyn FnMut(&EimState) -> bool;

/// Greedy weighted EIM with a fixed tolerance `zeta` on the worst
/// `W`-semi-norm error over the samples.
pub fn weighted_eim(
    table: &CoefficientTable,
    w: &DMatrix<f64>,
    zeta: f64,
    max_rank: usize,
) -> Result<VectorInterpolant> {
    if zeta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eim tolerance must be nonnegative, got {zeta}"
        )));
    }
    weighted_eim_with_stop(table, w, &mut |state| state.max_error <= zeta, max_rank)
}

/// Greedy weighted EIM with a caller-supplied stopping rule.
///
/// After each greedy state the rule receives the [`EimState`] diagnostics
/// and returns whether to stop. The loop also stops at `max_rank` or when
/// the worst error reaches the round-off floor. Ties in both argmax
/// selections break to the smallest index.
pub fn weighted_eim_with_stop(
    table: &CoefficientTable,
    w: &DMatrix<f64>,
    stop: StopRule<'_>,
    max_rank: usize,
) -> Result<VectorInterpolant> {
    let s = table.num_functions();
    let q = table.num_samples();
    if w.nrows() != s || w.ncols() != s {
        return Err(Error::DimensionMismatch {
            context: "gram matrix size vs coefficient functions",
            expected: s,
            got: w.nrows(),
        });
    }

    // Eigenvalue-clipped square root of W: the semi-norm is ||wh x||_2.
    // W is only positive semi-definite, so negative round-off eigenvalues
    // are clipped rather than fed to a Cholesky factorization.
    let eig = w.clone().symmetric_eigen();
    let mut wh = DMatrix::zeros(s, s);
    for i in 0..s {
        let lambda = eig.eigenvalues[i].max(0.0).sqrt();
        wh.row_mut(i).copy_from(&(eig.eigenvectors.column(i).transpose() * lambda));
    }

    let mut itp = VectorInterpolant {
        points: Vec::new(),
        magic_indices: Vec::new(),
        basis_values: DMatrix::zeros(0, 0),
        snapshot_columns: DMatrix::zeros(s, 0),
        achieved_error: 0.0,
    };
    // W-scale of the table, fixed at rank zero; errors at the relative
    // round-off floor are treated as exactly zero, otherwise an exact-rank
    // table would push the greedy loop into a singular basis.
    let mut table_scale = f64::INFINITY;

    loop {
        let interp = itp.interpolate_table(table)?;
        let residual = table.gamma() - &interp;
        let weighted_residual = &wh * &residual;
        let weighted_interp = &wh * &interp;

        let mut best_q = 0;
        let mut best_err = f64::NEG_INFINITY;
        for col in 0..q {
            let e = weighted_residual.column(col).norm();
            if e > best_err {
                best_err = e;
                best_q = col;
            }
        }
        if q == 0 {
            best_err = 0.0;
        }
        if itp.rank() == 0 {
            table_scale = best_err;
        }
        let state = EimState {
            rank: itp.rank(),
            max_error: best_err,
            global_error: weighted_residual.norm(),
            interp_norm: weighted_interp.norm(),
        };

        itp.achieved_error = best_err;
        if best_err <= 1e-14 * table_scale || stop(&state) || itp.rank() >= max_rank {
            return Ok(itp);
        }

        let err_col = residual.column(best_q);
        let mut best_i = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for i in 0..s {
            let a = err_col[i].abs();
            if a > best_abs {
                best_abs = a;
                best_i = i;
            }
        }
        debug_assert!(best_abs > 0.0, "positive W-error with a zero error column");

        let r = itp.rank();
        itp.points.push(best_q);
        itp.magic_indices.push(best_i);

        let mut snapshots = DMatrix::zeros(s, r + 1);
        snapshots.columns_mut(0, r).copy_from(&itp.snapshot_columns);
        snapshots.column_mut(r).copy_from(&table.gamma().column(best_q));
        itp.snapshot_columns = snapshots;

        let mut basis = DMatrix::zeros(r + 1, r + 1);
        for (k, &i) in itp.magic_indices.iter().enumerate() {
            for (j, &p) in itp.points.iter().enumerate() {
                basis[(k, j)] = table.gamma()[(i, p)];
            }
        }
        itp.basis_values = basis;
    }
}

/// Lifts a coefficient interpolant to a low-rank residual family by
/// evaluating the residual at the `r` interpolation points.
///
/// `n` is the residual dimension (needed for the rank-zero case). Callers
/// that already evaluated some samples during Gram recovery should serve
/// them from a cache inside `residual_at`.
pub fn lift_interpolant(
    itp: &VectorInterpolant,
    table: &CoefficientTable,
    n: usize,
    residual_at: &mut dyn FnMut(usize) -> DVector<f64>,
) -> Result<LowRankVectorFamily> {
    let r = itp.rank();
    let q = table.num_samples();
    if r == 0 {
        return Ok(LowRankVectorFamily::zero(n, q));
    }
    let mut snapshots = DMatrix::zeros(n, r);
    for (j, &point) in itp.points().iter().enumerate() {
        snapshots.column_mut(j).copy_from(&residual_at(point));
    }
    let alphas = itp.alphas(table)?;
    LowRankVectorFamily::new(snapshots, alphas)
}
