//! Truncated inexact-Newton driver.
//!
//! Each outer iteration interpolates the residual and the preconditioner of
//! the current low-rank iterate (weighted EIM when the coefficient structure
//! is known, randomized EIM with a statistical certificate otherwise),
//! solves the increment equation with the greedy rank-one solver, and
//! compresses the new iterate by SVD truncation.
//!
//! Interpolation tolerances follow forcing-term schedules: quadratic in the
//! residual norm for the residual interpolant and linear for the
//! preconditioner. Quadratic thresholds act on residual norms normalized by
//! the initial residual, which keeps the dimensionless forcing constants
//! meaningful independently of the discretization scaling of the residual.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;

use crate::eim::randomized::{
    randomized_matrix_eim, randomized_vector_eim, MatrixEntryOracle, ProbeSet,
    RandomizedVectorInterpolant, StatEstimate, VectorEntryOracle,
};
use crate::eim::weighted::{
    recover_gram, reduce_rank, weighted_eim_with_stop, CoefficientTable,
};
use crate::error::{Error, Result};
use crate::family::{LowRankMatrixFamily, LowRankVectorFamily, MatrixFactor};
use crate::ledger::LedgerSnapshot;
use crate::norm::NormSpec;
use crate::oracle::ProblemOracle;
use crate::rankone::{greedy_solve, RankOneSolverConfig};
use crate::sparse::{CsrMatrix, Pattern};
use crate::truncate::Truncator;

/// How interpolation tolerances scale with the (normalized) residual norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingMode {
    /// Known-structure weighted EIM, quadratic residual forcing.
    QuadraticKnown,
    /// Randomized EIM, quadratic residual forcing.
    QuadraticBlind,
    /// Randomized EIM, linear residual forcing (modified-Newton regime).
    LinearBlind,
}

impl ForcingMode {
    pub fn is_blind(self) -> bool {
        matches!(self, ForcingMode::QuadraticBlind | ForcingMode::LinearBlind)
    }
}

#[derive(Debug, Clone)]
pub struct ForcingSchedule {
    pub mode: ForcingMode,
    pub rho_r: f64,
    pub rho_p: f64,
}

impl ForcingSchedule {
    pub fn new(mode: ForcingMode, rho_r: f64, rho_p: f64) -> Result<Self> {
        if !(rho_r > 0.0 && rho_p > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "forcing constants must be positive, got rho_r = {rho_r}, rho_p = {rho_p}"
            )));
        }
        Ok(Self { mode, rho_r, rho_p })
    }
}

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    pub schedule: ForcingSchedule,
    /// Iterate truncation tolerance.
    pub trunc_eps: f64,
    pub solver: RankOneSolverConfig,
    /// Convergence target for the relative residual estimate.
    pub eps_target: f64,
    /// Maximum number of Newton steps.
    pub max_iter: usize,
    /// Confidence level parameter for blind-mode certificates.
    pub alpha: f64,
    /// Probe count per blind-mode certificate; 0 means one per sample.
    pub probes: usize,
    pub seed: u64,
}

impl NewtonConfig {
    pub fn new(schedule: ForcingSchedule) -> Self {
        Self {
            schedule,
            trunc_eps: 1e-12,
            solver: RankOneSolverConfig::default(),
            eps_target: 1e-9,
            max_iter: 15,
            alpha: 0.05,
            probes: 0,
            seed: 0,
        }
    }
}

/// One row of the per-iteration report; call columns are cumulative through
/// the certification of this row's residual estimate.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iteration: usize,
    pub epsilon: f64,
    /// Cumulative residual cost: full-vector calls in known mode, entry
    /// equivalents (entries + dim * vectors) in blind mode.
    pub residual_calls: u64,
    /// Cumulative preconditioner cost: full-matrix calls in known mode,
    /// entry equivalents over the pattern in blind mode.
    pub precond_calls: u64,
    /// Residual cost normalized by the Monte-Carlo baseline.
    pub normalized_cost_r: f64,
    /// Preconditioner cost normalized by the Monte-Carlo baseline.
    pub normalized_cost_p: f64,
    pub iterate_rank: usize,
    /// Seconds since the start of the run when the row was finalized.
    pub wall_time: f64,
}

/// Final state of a driver run.
#[derive(Debug, Clone)]
pub struct NewtonState {
    pub iterate: LowRankVectorFamily,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon_history: Vec<f64>,
    pub rank_history: Vec<usize>,
    /// Global norm of the part removed by each iterate truncation.
    pub truncation_discrepancies: Vec<f64>,
    pub reports: Vec<IterationReport>,
    pub ledger: LedgerSnapshot,
    /// Initial residual norm used to normalize the error indicator.
    pub baseline: f64,
}

/// Relative residual estimate from an interpolant family.
pub fn epsilon_estimate(residual_itp: &LowRankVectorFamily, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    Ok(residual_itp.global_norm(&NormSpec::Euclidean) / baseline)
}

/// Per-step convergence order estimates
/// `q_k = log(e_{k+1}/e_k) / log(e_k/e_{k-1})`.
pub fn convergence_order(eps_history: &[f64]) -> Result<Vec<f64>> {
    if eps_history.len() < 3 {
        return Err(Error::InvalidArgument(
            "order estimation needs at least three history entries".into(),
        ));
    }
    if eps_history.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "order estimation needs positive history entries".into(),
        ));
    }
    Ok((1..eps_history.len() - 1)
        .map(|k| {
            (eps_history[k + 1] / eps_history[k]).ln() / (eps_history[k] / eps_history[k - 1]).ln()
        })
        .collect())
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Adapter exposing the residual of a fixed iterate as an entry oracle.
struct ResidualAdapter<'a> {
    problem: &'a dyn ProblemOracle,
    iterate: &'a LowRankVectorFamily,
}

impl VectorEntryOracle for ResidualAdapter<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }
    fn num_samples(&self) -> usize {
        self.problem.samples().len()
    }
    fn column(&mut self, q: usize) -> DVector<f64> {
        let u_q = self.iterate.evaluate(q).expect("sample in range");
        self.problem.residual_full(&u_q, q).expect("residual evaluation")
    }
    fn entry(&mut self, i: usize, q: usize) -> f64 {
        self.problem.residual_entry(self.iterate, i, q).expect("residual entry")
    }
    fn magic_row(&mut self, i: usize) -> RowDVector<f64> {
        let q = self.num_samples();
        let values: Vec<f64> = (0..q)
            .into_par_iter()
            .map(|s| {
                self.problem
                    .residual_entry_uncounted(self.iterate, i, s)
                    .expect("residual entry")
            })
            .collect();
        RowDVector::from_vec(values)
    }
}

/// Adapter exposing the preconditioner of a fixed iterate as a pattern-entry
/// oracle.
struct PrecondAdapter<'a> {
    problem: &'a dyn ProblemOracle,
    iterate: &'a LowRankVectorFamily,
    pattern: Arc<Pattern>,
    entries: Vec<(usize, usize)>,
}

impl<'a> PrecondAdapter<'a> {
    fn new(problem: &'a dyn ProblemOracle, iterate: &'a LowRankVectorFamily) -> Self {
        let pattern = problem.pattern();
        let entries = pattern.entries();
        Self { problem, iterate, pattern, entries }
    }

    fn values_of(&self, factor: &MatrixFactor) -> DVector<f64> {
        match factor {
            MatrixFactor::Sparse(m) => DVector::from_column_slice(m.values()),
            MatrixFactor::Dense(m) => DVector::from_fn(self.entries.len(), |k, _| {
                let (i, j) = self.entries[k];
                m[(i, j)]
            }),
        }
    }
}

impl MatrixEntryOracle for PrecondAdapter<'_> {
    fn pattern(&self) -> Arc<Pattern> {
        self.pattern.clone()
    }
    fn num_samples(&self) -> usize {
        self.problem.samples().len()
    }
    fn matrix_values(&mut self, q: usize) -> DVector<f64> {
        let u_q = self.iterate.evaluate(q).expect("sample in range");
        let factor = self.problem.precond_full(&u_q, q).expect("preconditioner evaluation");
        self.values_of(&factor)
    }
    fn entry(&mut self, pos: usize, q: usize) -> f64 {
        self.problem.precond_entry(self.iterate, pos, q).expect("preconditioner entry")
    }
    fn magic_row(&mut self, pos: usize) -> RowDVector<f64> {
        let q = self.num_samples();
        let values: Vec<f64> = (0..q)
            .into_par_iter()
            .map(|s| {
                self.problem
                    .precond_entry_uncounted(self.iterate, pos, s)
                    .expect("preconditioner entry")
            })
            .collect();
        RowDVector::from_vec(values)
    }
}

/// Bounds for the adaptive structure-rank tolerance in known mode: the
/// coefficient table is reduced two orders below the interpolation target.
/// The floor keeps the reduced table's condition within the Gram recovery's
/// pivot-condition cap.
const RANK_TOL_SAFETY: f64 = 10.0;
const RANK_TOL_FLOOR: f64 = 1e-12;
const RANK_TOL_CAP: f64 = 1e-6;

fn rank_tolerance(relative_target: f64) -> f64 {
    (relative_target * RANK_TOL_SAFETY).clamp(RANK_TOL_FLOOR, RANK_TOL_CAP)
}

/// Row-equilibrates a coefficient table: rows are scaled to unit norm so the
/// rank cut keeps directions by information content rather than raw
/// magnitude. Structure tables mix O(1) rows with huge polynomial rows, and
/// the residual's fine cancelling structure would otherwise fall below any
/// relative cut. The factorization contract is unaffected (the scaling is
/// absorbed into the discarded mixing factor).
fn equilibrate_rows(table: &CoefficientTable) -> CoefficientTable {
    let gamma = table.gamma();
    let mut scaled = gamma.clone();
    for i in 0..gamma.nrows() {
        let norm = gamma.row(i).norm();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            scaled.row_mut(i).scale_mut(inv);
        }
    }
    CoefficientTable::new(scaled)
}


/// Reduces the table and recovers the Gram data, coarsening the rank cut
/// when the pivot block is too ill-conditioned to invert.
fn reduce_and_recover(
    table: &CoefficientTable,
    mut tol: f64,
    oracle: &mut dyn FnMut(usize) -> DVector<f64>,
) -> Result<(CoefficientTable, crate::eim::weighted::GramData)> {
    loop {
        let (reduced, _l) = reduce_rank(table, tol)?;
        match recover_gram(&reduced, oracle, &NormSpec::Euclidean) {
            Ok(gram) => return Ok((reduced, gram)),
            Err(Error::SingularPivotBlock { .. }) if tol < 1e-4 => {
                tol = (tol * 100.0).min(1e-4);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs the truncated inexact-Newton iteration from `u = 0`.
pub fn solve(problem: &dyn ProblemOracle, cfg: &NewtonConfig) -> Result<NewtonState> {
    let n = problem.dim();
    let num_samples = problem.samples().len();
    let sqrt_q = (num_samples as f64).sqrt();
    let probes = if cfg.probes == 0 { num_samples } else { cfg.probes };
    let truncator = Truncator::new(cfg.trunc_eps)?;
    let start = Instant::now();

    if cfg.schedule.mode == ForcingMode::QuadraticKnown
        && problem
            .structure_tables(&LowRankVectorFamily::zero(n, num_samples))
            .is_none()
    {
        return Err(Error::InvalidArgument(
            "known-structure mode requires a problem with a coefficient structure map".into(),
        ));
    }

    let mut u = LowRankVectorFamily::zero(n, num_samples);
    let mut baseline = 0.0f64;
    let mut eps_prev = 1.0f64;
    let mut precond_scale_prev = f64::INFINITY;
    let mut reports: Vec<IterationReport> = Vec::new();
    let mut epsilon_history = Vec::new();
    let mut rank_history = Vec::new();
    let mut truncation_discrepancies = Vec::new();
    let mut converged = false;

    for pass in 1..=(cfg.max_iter + 1) {
        let (fam_r, err_bound) = match cfg.schedule.mode {
            ForcingMode::QuadraticKnown => {
                build_residual_known(problem, &u, cfg, pass, baseline, eps_prev, sqrt_q)?
            }
            ForcingMode::QuadraticBlind | ForcingMode::LinearBlind => {
                build_residual_blind(problem, &u, cfg, pass, baseline, probes)?
            }
        };

        let resid_norm = fam_r.global_norm(&NormSpec::Euclidean);
        if pass == 1 {
            if !(resid_norm > 0.0) {
                return Err(Error::ZeroBaseline);
            }
            baseline = resid_norm;
        }
        // Certified upper estimate: interpolant norm plus its error bound.
        // At regular iterations the bound is a vanishing fraction of the
        // norm; on a short-circuited deciding pass it carries the value.
        let eps_now = (resid_norm + err_bound) / baseline;
        if !eps_now.is_finite() {
            return Err(Error::NonFiniteEpsilon { iteration: pass });
        }
        if pass >= 2 {
            let snap = problem.ledger().snapshot();
            finalize_row(
                &mut reports[pass - 2],
                eps_now,
                &snap,
                problem,
                cfg.schedule.mode,
                start,
            );
            epsilon_history.push(eps_now);
        }
        eps_prev = eps_now;

        if eps_now <= cfg.eps_target {
            converged = true;
            break;
        }
        if pass == cfg.max_iter + 1 {
            break;
        }

        // Preconditioner interpolant with linear forcing.
        let precond_tol = cfg.schedule.rho_p * resid_norm;
        let fam_p = match cfg.schedule.mode {
            ForcingMode::QuadraticKnown => build_precond_known(
                problem,
                &u,
                pass,
                precond_tol,
                precond_scale_prev,
                sqrt_q,
            )?,
            ForcingMode::QuadraticBlind | ForcingMode::LinearBlind => {
                build_precond_blind(problem, &u, cfg, pass, precond_tol, probes)?
            }
        };
        precond_scale_prev = matrix_family_frobenius(&fam_p);

        let solution = greedy_solve(&fam_p, &fam_r, &NormSpec::Euclidean, &cfg.solver)?;

        let raw = u.add(&solution.increment)?;
        let truncated = truncator.truncate(&raw, &NormSpec::Euclidean);
        let discrepancy = raw
            .add_scaled(&truncated, -1.0)?
            .global_norm_accurate(&NormSpec::Euclidean);
        truncation_discrepancies.push(discrepancy);
        u = truncated;
        rank_history.push(u.rank());

        reports.push(IterationReport {
            iteration: pass,
            epsilon: f64::NAN,
            residual_calls: 0,
            precond_calls: 0,
            normalized_cost_r: 0.0,
            normalized_cost_p: 0.0,
            iterate_rank: u.rank(),
            wall_time: 0.0,
        });
    }

    Ok(NewtonState {
        iterate: u,
        iterations: reports.len(),
        converged,
        epsilon_history,
        rank_history,
        truncation_discrepancies,
        reports,
        ledger: problem.ledger().snapshot(),
        baseline,
    })
}

fn finalize_row(
    row: &mut IterationReport,
    epsilon: f64,
    snap: &LedgerSnapshot,
    problem: &dyn ProblemOracle,
    mode: ForcingMode,
    start: Instant,
) {
    let q = problem.samples().len() as f64;
    let n = problem.dim() as f64;
    let nnz = problem.pattern().nnz() as f64;
    let k = row.iteration as f64;
    row.epsilon = epsilon;
    if mode.is_blind() {
        row.residual_calls =
            snap.residual_entry_calls + snap.residual_vector_calls * problem.dim() as u64;
        row.precond_calls =
            snap.precond_entry_calls + snap.precond_matrix_calls * problem.pattern().nnz() as u64;
        row.normalized_cost_r = row.residual_calls as f64 / (n * q * k);
        row.normalized_cost_p = row.precond_calls as f64 / (nnz * q * k);
    } else {
        row.residual_calls = snap.residual_vector_calls;
        row.precond_calls = snap.precond_matrix_calls;
        row.normalized_cost_r = row.residual_calls as f64 / (q * k);
        row.normalized_cost_p = row.precond_calls as f64 / (q * k);
    }
    row.wall_time = start.elapsed().as_secs_f64();
}

fn matrix_family_frobenius(fam: &LowRankMatrixFamily) -> f64 {
    // Global Frobenius norm via the factor Gram matrix.
    let p = fam.rank();
    let mut gram = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let inner = match (&fam.factors()[i], &fam.factors()[j]) {
                (MatrixFactor::Sparse(a), MatrixFactor::Sparse(b)) => {
                    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>()
                }
                (a, b) => {
                    let (da, db) = (a.to_dense(), b.to_dense());
                    da.iter().zip(db.iter()).map(|(x, y)| x * y).sum::<f64>()
                }
            };
            gram[(i, j)] = inner;
            gram[(j, i)] = inner;
        }
    }
    let cc = fam.coeff() * fam.coeff().transpose();
    gram.iter().zip(cc.iter()).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

fn build_residual_known(
    problem: &dyn ProblemOracle,
    u: &LowRankVectorFamily,
    cfg: &NewtonConfig,
    pass: usize,
    baseline: f64,
    eps_prev: f64,
    sqrt_q: f64,
) -> Result<(LowRankVectorFamily, f64)> {
    let (gamma_raw, _phi) = problem
        .structure_tables(u)
        .ok_or_else(|| Error::InvalidArgument("problem has no structure map".into()))?;
    // The residual's structure expansion cancels: its terms stay at the
    // operator scale while the residual shrinks with eps, so a table cut at
    // tolerance tau leaks residual error of order tau / eps. The quadratic
    // forcing target rho_r * eps^2 therefore needs tau ~ rho_r * eps^2; no
    // pass ever needs more accuracy than deciding convergence at the target.
    let eps_clamped = eps_prev.min(1.0);
    let tol = rank_tolerance(
        (cfg.schedule.rho_r * eps_clamped * eps_clamped).max(0.1 * cfg.eps_target),
    );
    let gamma_raw = equilibrate_rows(&gamma_raw);

    let mut cache: HashMap<usize, DVector<f64>> = HashMap::new();
    let mut oracle = |q: usize| -> DVector<f64> {
        cache
            .entry(q)
            .or_insert_with(|| {
                let u_q = u.evaluate(q).expect("sample in range");
                problem.residual_full(&u_q, q).expect("residual evaluation")
            })
            .clone()
    };

    let (gamma, gram) = reduce_and_recover(&gamma_raw, tol, &mut oracle)?;

    let rho_r = cfg.schedule.rho_r;
    let eps_target = cfg.eps_target;
    let mut last_global = f64::INFINITY;
    let itp = weighted_eim_with_stop(
        &gamma,
        &gram.w,
        &mut |state| {
            last_global = state.global_error;
            // Quadratic forcing on the normalized residual, checked on the
            // exact global error; the first pass bootstraps the baseline
            // from the running interpolant norm.
            let base = if pass == 1 { state.interp_norm } else { baseline };
            if base <= 0.0 {
                return false;
            }
            // Quadratic forcing, floored at the outer target: interpolating
            // beyond the accuracy the run is asked to reach buys nothing.
            let mut target = rho_r * state.interp_norm * state.interp_norm / base;
            if pass > 1 {
                target = target.max(0.1 * eps_target * baseline);
            }
            if state.global_error <= target {
                return true;
            }
            // Convergence short-circuit: once the error bound certifies the
            // estimate below the target, the deciding pass needs no more
            // accuracy than the decision itself.
            pass > 1 && state.interp_norm + state.global_error <= eps_target * baseline
        },
        gamma.num_functions(),
    )?;

    let bound = last_global.min(sqrt_q * itp.achieved_error());
    // Lift through the recovered factors: the interpolated coefficient table
    // against G costs no oracle calls, and the certified W-error bounds the
    // same quantity. (Evaluating fresh snapshot columns would spend one call
    // per interpolation point outside the pivot set for no certified gain.)
    let fam = LowRankVectorFamily::new(
        &gram.g * itp.snapshot_columns(),
        itp.alphas(&gamma)?,
    )?;
    Ok((fam, bound))
}

fn build_residual_blind(
    problem: &dyn ProblemOracle,
    u: &LowRankVectorFamily,
    cfg: &NewtonConfig,
    pass: usize,
    baseline: f64,
    probes: usize,
) -> Result<(LowRankVectorFamily, f64)> {
    let mut adapter = ResidualAdapter { problem, iterate: u };
    let probe_seed = derive_seed(cfg.seed, 0x5000 + pass as u64);
    let probe_set = ProbeSet::draw_vector(&mut adapter, probes, cfg.alpha, probe_seed)?;

    let quadratic = cfg.schedule.mode == ForcingMode::QuadraticBlind;
    let rho_r = cfg.schedule.rho_r;
    let eps_target = cfg.eps_target;
    let n = problem.dim();
    let q = problem.samples().len();

    let mut last_bound = f64::INFINITY;
    let mut rule = |itp: &RandomizedVectorInterpolant| -> Result<bool> {
        let est: StatEstimate = probe_set.estimate(itp)?;
        last_bound = est.e_bound;
        let mut threshold = if quadratic {
            let base = if pass == 1 { est.z_estimate } else { baseline };
            if base <= 0.0 {
                return Ok(est.z_estimate == 0.0);
            }
            rho_r * est.z_estimate * est.z_estimate / base
        } else {
            rho_r * est.z_estimate
        };
        if pass > 1 {
            // Never demand interpolation accuracy beyond the outer target.
            threshold = threshold.max(0.25 * eps_target * baseline);
        }
        if est.e_bound <= threshold || est.sup_error <= 1e-15 {
            return Ok(true);
        }
        if pass > 1 {
            let fam_norm = itp.to_family(n, q)?.global_norm(&NormSpec::Euclidean);
            if fam_norm + est.e_bound <= eps_target * baseline {
                return Ok(true);
            }
        }
        Ok(false)
    };

    let eim_seed = derive_seed(cfg.seed, 0xE000 + pass as u64);
    let itp = randomized_vector_eim(&mut adapter, &mut rule, eim_seed)?;
    let fam = itp.to_family(n, q)?;
    Ok((fam, last_bound))
}

fn build_precond_known(
    problem: &dyn ProblemOracle,
    u: &LowRankVectorFamily,
    pass: usize,
    precond_tol: f64,
    precond_scale_prev: f64,
    sqrt_q: f64,
) -> Result<LowRankMatrixFamily> {
    let (_gamma, phi_raw) = problem
        .structure_tables(u)
        .ok_or_else(|| Error::InvalidArgument("problem has no structure map".into()))?;
    // Rank tolerance from the previous pass's operator scale; the first pass
    // reduces at machine precision (the table is tiny there).
    let tol = if pass == 1 || !precond_scale_prev.is_finite() {
        1e-12
    } else {
        rank_tolerance(precond_tol / precond_scale_prev)
    };
    let phi_raw = equilibrate_rows(&phi_raw);
    let adapter = PrecondAdapter::new(problem, u);
    let pattern = adapter.pattern.clone();
    let mut cache: HashMap<usize, DVector<f64>> = HashMap::new();
    let mut oracle = |q: usize| -> DVector<f64> {
        cache
            .entry(q)
            .or_insert_with(|| {
                let u_q = u.evaluate(q).expect("sample in range");
                let factor = problem.precond_full(&u_q, q).expect("preconditioner evaluation");
                adapter.values_of(&factor)
            })
            .clone()
    };

    let (phi, gram) = reduce_and_recover(&phi_raw, tol, &mut oracle)?;
    let _ = sqrt_q;
    // The forcing bound is on the global Frobenius error, which the greedy
    // loop measures exactly.
    let itp = weighted_eim_with_stop(
        &phi,
        &gram.w,
        &mut |state| state.global_error <= precond_tol,
        phi.num_functions(),
    )?;
    // Zero-call lift through the recovered factor matrix.
    let flat_spatial = &gram.g * itp.snapshot_columns();
    let alphas = itp.alphas(&phi)?;
    let factors: Result<Vec<MatrixFactor>> = (0..flat_spatial.ncols())
        .map(|j| {
            CsrMatrix::from_values(
                pattern.clone(),
                flat_spatial.column(j).iter().copied().collect(),
            )
            .map(MatrixFactor::Sparse)
        })
        .collect();
    LowRankMatrixFamily::new(factors?, alphas)
}

fn build_precond_blind(
    problem: &dyn ProblemOracle,
    u: &LowRankVectorFamily,
    cfg: &NewtonConfig,
    pass: usize,
    precond_tol: f64,
    probes: usize,
) -> Result<LowRankMatrixFamily> {
    let mut adapter = PrecondAdapter::new(problem, u);
    let probe_seed = derive_seed(cfg.seed, 0x7000 + pass as u64);
    let probe_set = ProbeSet::draw_matrix(&mut adapter, probes, cfg.alpha, probe_seed)?;

    let mut rule = |itp: &RandomizedVectorInterpolant| -> Result<bool> {
        let est = probe_set.estimate(itp)?;
        Ok(est.e_bound <= precond_tol || est.sup_error <= 1e-15)
    };

    let eim_seed = derive_seed(cfg.seed, 0xF000 + pass as u64);
    let itp = randomized_matrix_eim(&mut adapter, &mut rule, eim_seed)?;
    itp.to_family()
}
