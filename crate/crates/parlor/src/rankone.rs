//! Greedy rank-one solver for `P(x) du(x) = R(x)` with low-rank `P` and `R`.
//!
//! Corrections `w * theta(x)` are computed one at a time by alternating
//! minimization: the spatial vector `w` solves a normal system assembled from
//! the operator factors, the coefficient function `theta` has a closed-form
//! per-sample update. In the symmetric positive definite mode the residual
//! norm is taken in the `P(x)^{-1}` inner product, which turns the normal
//! system into a plain combination of the operator factors.
//!
//! Everything stays factored: the running right-hand side is a low-rank
//! family, recompressed when its nominal rank inflates, and no `N x Q`
//! matrix is ever assembled.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::{LowRankMatrixFamily, LowRankVectorFamily, MatrixFactor};
use crate::norm::NormSpec;
use crate::sparse::CsrMatrix;
use crate::truncate::Truncator;

#[derive(Debug, Clone)]
pub struct RankOneSolverConfig {
    /// Relative tolerance on the global residual norm.
    pub residual_tol: f64,
    /// Stop when a correction is this small relative to the accumulated
    /// increment.
    pub stagnation_tol: f64,
    /// Cap on the number of greedy corrections.
    pub max_rank: usize,
    /// Cap on inner alternation sweeps per correction.
    pub max_als_sweeps: usize,
    /// Inner stop: relative change of the rank-one correction between sweeps.
    pub als_stagnation_tol: f64,
    /// Use the `M = P(x)^{-1}` variational formulation; requires `P(x)`
    /// symmetric positive definite at every sample.
    pub spd_mode: bool,
    /// After the greedy loop, re-solve all coefficient functions jointly by
    /// per-sample least squares on the collected spatial vectors.
    pub coefficient_update: bool,
}

impl Default for RankOneSolverConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            stagnation_tol: 1e-12,
            max_rank: 50,
            max_als_sweeps: 50,
            als_stagnation_tol: 1e-6,
            spd_mode: false,
            coefficient_update: false,
        }
    }
}

/// Result of a greedy solve.
#[derive(Debug, Clone)]
pub struct RankOneSolution {
    /// The low-rank increment; rank equals the number of corrections kept.
    pub increment: LowRankVectorFamily,
    /// Global Euclidean residual norm before any correction and after each
    /// correction.
    pub residual_history: Vec<f64>,
    /// Residual ratio achieved relative to the initial right-hand side.
    pub achieved_ratio: f64,
    /// Whether the residual tolerance was met.
    pub converged: bool,
}

/// One rank-one correction together with its objective trace.
#[derive(Debug, Clone)]
pub struct AlsCorrection {
    pub w: DVector<f64>,
    pub theta: DVector<f64>,
    /// Objective value after every half-sweep (w-update and theta-update).
    pub objective_history: Vec<f64>,
}

/// `P v` as a low-rank family: spatial factors `F_i w_j`, coefficients
/// `phi_i(x) theta_j(x)`.
pub fn apply_operator(
    p: &LowRankMatrixFamily,
    v: &LowRankVectorFamily,
) -> Result<LowRankVectorFamily> {
    if p.ncols() != v.n() {
        return Err(Error::DimensionMismatch {
            context: "operator columns vs family dimension",
            expected: p.ncols(),
            got: v.n(),
        });
    }
    if p.num_samples() != v.num_samples() {
        return Err(Error::DimensionMismatch {
            context: "operator samples vs family samples",
            expected: p.num_samples(),
            got: v.num_samples(),
        });
    }
    let (pp, rv, q) = (p.rank(), v.rank(), v.num_samples());
    if rv == 0 {
        return Ok(LowRankVectorFamily::zero(p.nrows(), q));
    }
    let mut spatial = DMatrix::zeros(p.nrows(), pp * rv);
    let mut coeff = DMatrix::zeros(pp * rv, q);
    for (i, factor) in p.factors().iter().enumerate() {
        for j in 0..rv {
            let col = factor.matvec(&v.spatial().column(j).into_owned());
            let k = i * rv + j;
            spatial.column_mut(k).copy_from(&col);
            for s in 0..q {
                coeff[(k, s)] = p.coeff()[(i, s)] * v.coeff()[(j, s)];
            }
        }
    }
    LowRankVectorFamily::new(spatial, coeff)
}

/// Solves the greedy rank-one problem, returning the increment and its
/// residual trace.
pub fn greedy_solve(
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    cfg: &RankOneSolverConfig,
) -> Result<RankOneSolution> {
    if cfg.max_rank == 0 {
        return Err(Error::InvalidArgument("max_rank must be at least 1".into()));
    }
    let q = rhs.num_samples();
    let n = rhs.n();
    let rhs_norm0 = rhs.global_norm_accurate(&NormSpec::Euclidean);
    if rhs.rank() == 0 || rhs_norm0 == 0.0 {
        return Ok(RankOneSolution {
            increment: LowRankVectorFamily::zero(n, q),
            residual_history: vec![0.0],
            achieved_ratio: 0.0,
            converged: true,
        });
    }

    let ctx = OperatorContext::build(p, norm, cfg.spd_mode)?;
    let recompress_cap = 2 * (rhs.rank() + p.rank()) + 10;
    let compressor = Truncator::new(1e-14).expect("static tolerance");

    let mut current = rhs.clone();
    let mut increment = LowRankVectorFamily::zero(n, q);
    let mut history = vec![rhs_norm0];
    let mut converged = false;

    for round in 0..cfg.max_rank {
        let correction = match als_rank_one_ctx(&ctx, p, &current, norm, cfg) {
            Ok(c) => c,
            Err(Error::AlsBreakdown { reason }) if round > 0 => {
                // Later corrections may legitimately find nothing left to
                // extract; return the best iterate.
                let _ = reason;
                break;
            }
            Err(e) => return Err(e),
        };

        let piece = LowRankVectorFamily::rank_one(correction.w, correction.theta);
        let piece_norm = piece.global_norm(&NormSpec::Euclidean);
        increment = increment.add(&piece)?;
        current = current.add_scaled(&apply_operator(p, &piece)?, -1.0)?;
        if current.rank() > recompress_cap {
            current = compressor.truncate(&current, &NormSpec::Euclidean);
        }

        let res = current.global_norm_accurate(&NormSpec::Euclidean);
        history.push(res);
        if res <= cfg.residual_tol * rhs_norm0 {
            converged = true;
            break;
        }
        let inc_norm = increment.global_norm(&NormSpec::Euclidean);
        if piece_norm <= cfg.stagnation_tol * inc_norm {
            break;
        }
    }

    if cfg.coefficient_update && increment.rank() > 0 {
        increment = joint_coefficient_update(&ctx, p, rhs, &increment, norm, cfg.spd_mode)?;
        current = rhs.add_scaled(&apply_operator(p, &increment)?, -1.0)?;
        let res = current.global_norm_accurate(&NormSpec::Euclidean);
        converged = converged || res <= cfg.residual_tol * rhs_norm0;
        history.push(res);
    }

    let achieved = history.last().copied().unwrap_or(rhs_norm0) / rhs_norm0;
    Ok(RankOneSolution {
        increment,
        residual_history: history,
        achieved_ratio: achieved,
        converged,
    })
}

/// A single alternating-minimization rank-one correction for the current
/// right-hand side family.
pub fn als_rank_one(
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    cfg: &RankOneSolverConfig,
) -> Result<AlsCorrection> {
    if rhs.rank() == 0 || rhs.global_norm(&NormSpec::Euclidean) == 0.0 {
        return Err(Error::AlsBreakdown { reason: "right-hand side is zero".into() });
    }
    let ctx = OperatorContext::build(p, norm, cfg.spd_mode)?;
    als_rank_one_ctx(&ctx, p, rhs, norm, cfg)
}

/// Precomputed per-solve operator data.
struct OperatorContext {
    /// `F_i' M F_j` for the general mode (same storage kind as the factors).
    products: Option<Vec<Vec<MatrixFactor>>>,
}

impl OperatorContext {
    fn build(p: &LowRankMatrixFamily, norm: &NormSpec, spd_mode: bool) -> Result<Self> {
        if spd_mode {
            return Ok(Self { products: None });
        }
        let pp = p.rank();
        let mut products: Vec<Vec<MatrixFactor>> = Vec::with_capacity(pp);
        for i in 0..pp {
            let mut row = Vec::with_capacity(pp);
            for j in 0..pp {
                let prod = match (&p.factors()[i], &p.factors()[j]) {
                    (MatrixFactor::Dense(a), MatrixFactor::Dense(b)) => {
                        let mb = match norm {
                            NormSpec::Euclidean => b.clone(),
                            NormSpec::Weighted(m) => m * b,
                        };
                        MatrixFactor::Dense(a.transpose() * mb)
                    }
                    (MatrixFactor::Sparse(a), MatrixFactor::Sparse(b)) => {
                        if !norm.is_euclidean() {
                            return Err(Error::InvalidArgument(
                                "weighted norms with sparse operator factors are not supported \
                                 in the general mode"
                                    .into(),
                            ));
                        }
                        MatrixFactor::Sparse(CsrMatrix::transpose_product(a, b)?)
                    }
                    _ => unreachable!("family enforces uniform factor kinds"),
                };
                row.push(prod);
            }
            products.push(row);
        }
        Ok(Self { products: Some(products) })
    }
}

fn als_rank_one_ctx(
    ctx: &OperatorContext,
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    cfg: &RankOneSolverConfig,
) -> Result<AlsCorrection> {
    let q = rhs.num_samples();

    let mut theta = DVector::from_element(q, 1.0);
    let mut attempt = 0;
    loop {
        match als_sweeps(ctx, p, rhs, norm, cfg, theta.clone()) {
            Ok(c) => return Ok(c),
            Err(Error::AlsBreakdown { reason }) if attempt == 0 => {
                // One retry with a deterministic sign-flip perturbation.
                let _ = reason;
                attempt = 1;
                theta = DVector::from_fn(q, |i, _| {
                    let h = splitmix(i as u64 ^ 0x9e3779b97f4a7c15);
                    1.0 + 0.5 * (h as f64 / u64::MAX as f64 - 0.5)
                });
            }
            Err(e) => return Err(e),
        }
    }
}

fn als_sweeps(
    ctx: &OperatorContext,
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    cfg: &RankOneSolverConfig,
    mut theta: DVector<f64>,
) -> Result<AlsCorrection> {
    // Constant term of the general objective: sum_q ||R(x_q)||_M^2.
    let const_term = {
        let g = norm.gram(rhs.spatial());
        let cc = rhs.coeff() * rhs.coeff().transpose();
        g.iter().zip(cc.iter()).map(|(a, b)| a * b).sum::<f64>()
    };

    let mut objective_history = Vec::new();
    let mut w = DVector::zeros(rhs.n());
    let mut prev_piece: Option<LowRankVectorFamily> = None;

    for _sweep in 0..cfg.max_als_sweeps {
        w = update_w(ctx, p, rhs, norm, cfg.spd_mode, &theta)?;
        if w.amax() == 0.0 {
            return Err(Error::AlsBreakdown {
                reason: "normal system produced a zero spatial vector".into(),
            });
        }
        objective_history.push(objective(ctx, p, rhs, norm, cfg.spd_mode, &w, &theta, const_term));

        theta = update_theta(p, rhs, norm, cfg.spd_mode, &w)?;
        if theta.amax() == 0.0 {
            return Err(Error::AlsBreakdown {
                reason: "coefficient update vanished at every sample".into(),
            });
        }
        objective_history.push(objective(ctx, p, rhs, norm, cfg.spd_mode, &w, &theta, const_term));

        let piece = LowRankVectorFamily::rank_one(w.clone(), theta.clone());
        let stagnated = prev_piece
            .as_ref()
            .map(|prev| {
                let delta = piece
                    .add_scaled(prev, -1.0)
                    .expect("consistent shapes")
                    .global_norm_accurate(&NormSpec::Euclidean);
                delta <= cfg.als_stagnation_tol * piece.global_norm(&NormSpec::Euclidean)
            })
            .unwrap_or(false);
        prev_piece = Some(piece);
        if stagnated {
            break;
        }
    }

    Ok(AlsCorrection { w, theta, objective_history })
}

/// Minimization over `w`: assemble and solve the normal system `A w = b`.
fn update_w(
    ctx: &OperatorContext,
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    spd_mode: bool,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = rhs.num_samples();
    let pp = p.rank();

    if spd_mode {
        // A = sum_i F_i (sum_q phi_i theta^2), b = G (Gamma theta).
        let mut weights = vec![0.0; pp];
        for i in 0..pp {
            let mut acc = 0.0;
            for s in 0..q {
                acc += p.coeff()[(i, s)] * theta[s] * theta[s];
            }
            weights[i] = acc;
        }
        let a = p.combine(&weights)?;
        let b = rhs.spatial() * (rhs.coeff() * theta);
        solve_spd(&a, &b)
    } else {
        let products = ctx.products.as_ref().expect("general mode context");
        // c_ij = sum_q phi_i phi_j theta^2
        let mut scaled = p.coeff().clone();
        for s in 0..q {
            let t2 = theta[s] * theta[s];
            for i in 0..pp {
                scaled[(i, s)] *= t2;
            }
        }
        let c = &scaled * p.coeff().transpose();

        // b = sum_i F_i' M (G Gamma (phi_i o theta))
        let mut b = DVector::zeros(rhs.n());
        for i in 0..pp {
            let weights = DVector::from_fn(q, |s, _| p.coeff()[(i, s)] * theta[s]);
            let t = rhs.spatial() * (rhs.coeff() * weights);
            b += p.factors()[i].tr_matvec(&norm.apply(&t));
        }

        let a = combine_products(products, &c)?;
        solve_spd(&a, &b)
    }
}

/// Closed-form minimization over `theta`.
fn update_theta(
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    spd_mode: bool,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = rhs.num_samples();
    let pp = p.rank();

    if spd_mode {
        // theta = w'R / w'Pw per sample.
        let wg = rhs.spatial().transpose() * w; // r_R
        let quad: Vec<f64> = p.factors().iter().map(|f| f.quad_form(w)).collect();
        let mut theta = DVector::zeros(q);
        for s in 0..q {
            let mut denom = 0.0;
            for i in 0..pp {
                denom += p.coeff()[(i, s)] * quad[i];
            }
            if denom <= 0.0 {
                return Err(Error::SpdViolation { sample: s, value: denom });
            }
            let numer = wg.dot(&rhs.coeff().column(s).into_owned());
            theta[s] = numer / denom;
        }
        Ok(theta)
    } else {
        // theta = w'P'MR / w'P'MPw per sample, from small precomputed
        // tensors: z_i = F_i w.
        let z: Vec<DVector<f64>> = p.factors().iter().map(|f| f.matvec(w)).collect();
        let mz: Vec<DVector<f64>> = z.iter().map(|zi| norm.apply(zi)).collect();
        let mut zz = DMatrix::zeros(pp, pp);
        for i in 0..pp {
            for j in 0..pp {
                zz[(i, j)] = z[i].dot(&mz[j]);
            }
        }
        // zg[i][k] = z_i' M g_k
        let zg = DMatrix::from_fn(pp, rhs.rank(), |i, k| {
            mz[i].dot(&rhs.spatial().column(k).into_owned())
        });

        let mut theta = DVector::zeros(q);
        for s in 0..q {
            let phi = p.coeff().column(s);
            let mut denom = 0.0;
            for i in 0..pp {
                for j in 0..pp {
                    denom += phi[i] * phi[j] * zz[(i, j)];
                }
            }
            if denom <= 0.0 {
                // Least-squares minimum-norm choice where P(x_q) w vanishes.
                theta[s] = 0.0;
                continue;
            }
            let mut numer = 0.0;
            for i in 0..pp {
                for k in 0..rhs.rank() {
                    numer += phi[i] * zg[(i, k)] * rhs.coeff()[(k, s)];
                }
            }
            theta[s] = numer / denom;
        }
        Ok(theta)
    }
}

/// Objective value of the correction `(w, theta)`.
fn objective(
    ctx: &OperatorContext,
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    norm: &NormSpec,
    spd_mode: bool,
    w: &DVector<f64>,
    theta: &DVector<f64>,
    const_term: f64,
) -> f64 {
    let q = rhs.num_samples();
    let pp = p.rank();

    if spd_mode {
        // sum_q theta^2 w'Pw - 2 theta w'R
        let quad: Vec<f64> = p.factors().iter().map(|f| f.quad_form(w)).collect();
        let wg = rhs.spatial().transpose() * w;
        let mut acc = 0.0;
        for s in 0..q {
            let mut pw = 0.0;
            for i in 0..pp {
                pw += p.coeff()[(i, s)] * quad[i];
            }
            let wr = wg.dot(&rhs.coeff().column(s).into_owned());
            acc += theta[s] * theta[s] * pw - 2.0 * theta[s] * wr;
        }
        acc
    } else {
        let _ = ctx;
        let z: Vec<DVector<f64>> = p.factors().iter().map(|f| f.matvec(w)).collect();
        let mz: Vec<DVector<f64>> = z.iter().map(|zi| norm.apply(zi)).collect();
        let mut zz = DMatrix::zeros(pp, pp);
        for i in 0..pp {
            for j in 0..pp {
                zz[(i, j)] = z[i].dot(&mz[j]);
            }
        }
        let zg = DMatrix::from_fn(pp, rhs.rank(), |i, k| {
            mz[i].dot(&rhs.spatial().column(k).into_owned())
        });
        let mut acc = const_term;
        for s in 0..q {
            let phi = p.coeff().column(s);
            let mut pwpw = 0.0;
            let mut pwr = 0.0;
            for i in 0..pp {
                for j in 0..pp {
                    pwpw += phi[i] * phi[j] * zz[(i, j)];
                }
                for k in 0..rhs.rank() {
                    pwr += phi[i] * zg[(i, k)] * rhs.coeff()[(k, s)];
                }
            }
            acc += theta[s] * theta[s] * pwpw - 2.0 * theta[s] * pwr;
        }
        acc
    }
}

/// `sum_ij c[i, j] products[i][j]` assembled in the factor storage kind.
fn combine_products(
    products: &[Vec<MatrixFactor>],
    c: &DMatrix<f64>,
) -> Result<MatrixFactor> {
    let pp = products.len();
    match &products[0][0] {
        MatrixFactor::Dense(first) => {
            let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
            for i in 0..pp {
                for j in 0..pp {
                    if let MatrixFactor::Dense(m) = &products[i][j] {
                        acc += m * c[(i, j)];
                    }
                }
            }
            Ok(MatrixFactor::Dense(acc))
        }
        MatrixFactor::Sparse(_) => {
            let mats: Vec<CsrMatrix> = products
                .iter()
                .flatten()
                .map(|f| match f {
                    MatrixFactor::Sparse(m) => m.clone(),
                    _ => unreachable!(),
                })
                .collect();
            let weights: Vec<f64> =
                (0..pp).flat_map(|i| (0..pp).map(move |j| c[(i, j)])).collect();
            // The products need not share one pattern arc; combine by
            // accumulating triplets when patterns differ.
            if mats.windows(2).all(|w| w[0].same_pattern(&w[1])) {
                Ok(MatrixFactor::Sparse(CsrMatrix::linear_combination(&mats, &weights)?))
            } else {
                let mut triplets = Vec::new();
                for (m, &wgt) in mats.iter().zip(&weights) {
                    if wgt == 0.0 {
                        continue;
                    }
                    for (i, j) in m.pattern().entries() {
                        triplets.push((i, j, wgt * m.get(i, j)));
                    }
                }
                Ok(MatrixFactor::Sparse(CsrMatrix::from_triplets(
                    mats[0].nrows(),
                    mats[0].ncols(),
                    &triplets,
                )?))
            }
        }
    }
}

/// Solves the symmetric positive (semi-)definite normal system.
fn solve_spd(a: &MatrixFactor, b: &DVector<f64>) -> Result<DVector<f64>> {
    match a {
        MatrixFactor::Dense(m) => {
            if let Some(chol) = m.clone().cholesky() {
                Ok(chol.solve(b))
            } else {
                m.clone().lu().solve(b).ok_or(Error::AlsBreakdown {
                    reason: "normal matrix is singular".into(),
                })
            }
        }
        MatrixFactor::Sparse(m) => {
            let diag = m.diagonal();
            Ok(conjugate_gradient(m, &diag, b, 1e-14, 20 * b.len().max(1)))
        }
    }
}

/// Jacobi-preconditioned conjugate gradient; deterministic and allocation
/// light. Returns the best iterate if the iteration cap is reached.
fn conjugate_gradient(
    a: &CsrMatrix,
    diag: &DVector<f64>,
    b: &DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> DVector<f64> {
    let n = b.len();
    let inv_diag = DVector::from_fn(n, |i, _| {
        let d = diag[i];
        if d.abs() > 0.0 {
            1.0 / d
        } else {
            1.0
        }
    });
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return x;
    }
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = a.matvec(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= rtol * bnorm {
            break;
        }
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    x
}

/// Joint re-solve of all coefficient functions on the collected spatial
/// vectors, sample by sample.
fn joint_coefficient_update(
    ctx: &OperatorContext,
    p: &LowRankMatrixFamily,
    rhs: &LowRankVectorFamily,
    increment: &LowRankVectorFamily,
    norm: &NormSpec,
    spd_mode: bool,
) -> Result<LowRankVectorFamily> {
    let _ = ctx;
    let q = rhs.num_samples();
    let r = increment.rank();
    let pp = p.rank();

    // z[k][i] = F_k w_i, and its M-weighted copy.
    let mut z = vec![vec![DVector::zeros(rhs.n()); r]; pp];
    for k in 0..pp {
        for i in 0..r {
            z[k][i] = p.factors()[k].matvec(&increment.spatial().column(i).into_owned());
        }
    }

    let mut coeff = DMatrix::zeros(r, q);
    for s in 0..q {
        let phi = p.coeff().column(s);
        let mut normal = DMatrix::zeros(r, r);
        let mut rhs_vec = DVector::zeros(r);
        if spd_mode {
            // normal[i][j] = w_i' P(x) w_j, rhs[i] = w_i' R(x)
            for i in 0..r {
                for j in 0..r {
                    let mut acc = 0.0;
                    for k in 0..pp {
                        acc += phi[k]
                            * increment.spatial().column(i).dot(&z[k][j]);
                    }
                    normal[(i, j)] = acc;
                }
                let mut b = 0.0;
                for t in 0..rhs.rank() {
                    b += rhs.coeff()[(t, s)]
                        * increment.spatial().column(i).dot(&rhs.spatial().column(t).into_owned());
                }
                rhs_vec[i] = b;
            }
        } else {
            // normal[i][j] = (P w_i)' M (P w_j), rhs[i] = (P w_i)' M R(x)
            let pw: Vec<DVector<f64>> = (0..r)
                .map(|i| {
                    let mut acc = DVector::zeros(rhs.n());
                    for k in 0..pp {
                        acc.axpy(phi[k], &z[k][i], 1.0);
                    }
                    acc
                })
                .collect();
            let mpw: Vec<DVector<f64>> = pw.iter().map(|v| norm.apply(v)).collect();
            let r_col = rhs.spatial() * rhs.coeff().column(s);
            for i in 0..r {
                for j in 0..r {
                    normal[(i, j)] = pw[i].dot(&mpw[j]);
                }
                rhs_vec[i] = mpw[i].dot(&r_col);
            }
        }
        let solved = normal
            .lu()
            .solve(&rhs_vec)
            .unwrap_or_else(|| DVector::from_fn(r, |i, _| increment.coeff()[(i, s)]));
        coeff.column_mut(s).copy_from(&solved);
    }
    LowRankVectorFamily::new(increment.spatial().clone(), coeff)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}
