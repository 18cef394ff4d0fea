use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::norm::NormSpec;
use crate::sparse::CsrMatrix;

/// Rank-`r` representation of a parameter-dependent vector,
/// `v(q) = sum_i spatial[:, i] * coeff[i, q]`.
///
/// `spatial` is `N x r`, `coeff` is `r x Q`. Rank zero represents the zero
/// family. All operations stay in factored form; nothing here assembles the
/// `N x Q` matrix.
#[derive(Debug, Clone)]
pub struct LowRankVectorFamily {
    spatial: DMatrix<f64>,
    coeff: DMatrix<f64>,
}

impl LowRankVectorFamily {
    pub fn new(spatial: DMatrix<f64>, coeff: DMatrix<f64>) -> Result<Self> {
        if spatial.ncols() != coeff.nrows() {
            return Err(Error::DimensionMismatch {
                context: "spatial columns vs coefficient rows",
                expected: spatial.ncols(),
                got: coeff.nrows(),
            });
        }
        Ok(Self { spatial, coeff })
    }

    pub fn zero(n: usize, q: usize) -> Self {
        Self {
            spatial: DMatrix::zeros(n, 0),
            coeff: DMatrix::zeros(0, q),
        }
    }

    /// Rank-one family `v * lambda(.)`.
    pub fn rank_one(v: DVector<f64>, lambda: DVector<f64>) -> Self {
        let n = v.len();
        let q = lambda.len();
        Self {
            spatial: DMatrix::from_column_slice(n, 1, v.as_slice()),
            coeff: DMatrix::from_row_slice(1, q, lambda.as_slice()),
        }
    }

    pub fn n(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.coeff.ncols()
    }

    pub fn rank(&self) -> usize {
        self.spatial.ncols()
    }

    pub fn spatial(&self) -> &DMatrix<f64> {
        &self.spatial
    }

    pub fn coeff(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    /// `v(q)` as a dense vector.
    pub fn evaluate(&self, q: usize) -> Result<DVector<f64>> {
        if q >= self.num_samples() {
            return Err(Error::SampleOutOfRange { index: q, count: self.num_samples() });
        }
        if self.rank() == 0 {
            return Ok(DVector::zeros(self.n()));
        }
        Ok(&self.spatial * self.coeff.column(q))
    }

    /// Single component `v_i(q)` in `O(r)` without forming the column.
    pub fn evaluate_entry(&self, i: usize, q: usize) -> Result<f64> {
        if q >= self.num_samples() {
            return Err(Error::SampleOutOfRange { index: q, count: self.num_samples() });
        }
        if i >= self.n() {
            return Err(Error::SampleOutOfRange { index: i, count: self.n() });
        }
        Ok(self.spatial.row(i).tr_dot(&self.coeff.column(q)))
    }

    /// Global norm `sqrt(sum_q ||v(q)||_M^2)` computed through the
    /// `r x r` Gram matrices of the factors, in `O((N + Q) r^2)`.
    ///
    /// Accurate relative to the magnitude of the factors; for families whose
    /// terms cancel (differences of nearly equal families) the result
    /// saturates around `sqrt(machine eps)` of the term scale — use
    /// [`Self::global_norm_accurate`] there.
    pub fn global_norm(&self, norm: &NormSpec) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let gu = norm.gram(&self.spatial);
        let gc = &self.coeff * self.coeff.transpose();
        gu.iter().zip(gc.iter()).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// Global Euclidean norm computed through a QR orthonormalization of the
    /// spatial factors, so cancellation between terms degrades the result
    /// only linearly in machine epsilon. Same `O((N + Q) r^2)` cost; falls
    /// back to the Gram route for weighted norms.
    pub fn global_norm_accurate(&self, norm: &NormSpec) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        match norm {
            NormSpec::Euclidean => {
                let qr = self.spatial.clone().qr();
                (qr.r() * &self.coeff).norm()
            }
            NormSpec::Weighted(_) => self.global_norm(norm),
        }
    }

    /// Concatenation of the factors; evaluation equals the pointwise sum.
    pub fn add(&self, other: &LowRankVectorFamily) -> Result<LowRankVectorFamily> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch {
                context: "family spatial dimension",
                expected: self.n(),
                got: other.n(),
            });
        }
        if self.num_samples() != other.num_samples() {
            return Err(Error::DimensionMismatch {
                context: "family sample count",
                expected: self.num_samples(),
                got: other.num_samples(),
            });
        }
        let r = self.rank() + other.rank();
        let mut spatial = DMatrix::zeros(self.n(), r);
        spatial.columns_mut(0, self.rank()).copy_from(&self.spatial);
        spatial.columns_mut(self.rank(), other.rank()).copy_from(&other.spatial);
        let mut coeff = DMatrix::zeros(r, self.num_samples());
        coeff.rows_mut(0, self.rank()).copy_from(&self.coeff);
        coeff.rows_mut(self.rank(), other.rank()).copy_from(&other.coeff);
        Ok(LowRankVectorFamily { spatial, coeff })
    }

    /// `self + scale * other` without an intermediate copy of `other`.
    pub fn add_scaled(&self, other: &LowRankVectorFamily, scale: f64) -> Result<LowRankVectorFamily> {
        let mut scaled = other.clone();
        scaled.spatial *= scale;
        self.add(&scaled)
    }
}

/// A parameter-independent matrix factor, dense or sparse.
#[derive(Debug, Clone)]
pub enum MatrixFactor {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl MatrixFactor {
    pub fn nrows(&self) -> usize {
        match self {
            MatrixFactor::Dense(m) => m.nrows(),
            MatrixFactor::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            MatrixFactor::Dense(m) => m.ncols(),
            MatrixFactor::Sparse(m) => m.ncols(),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            MatrixFactor::Dense(m) => m * x,
            MatrixFactor::Sparse(m) => m.matvec(x),
        }
    }

    pub fn tr_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            MatrixFactor::Dense(m) => m.transpose() * x,
            MatrixFactor::Sparse(m) => m.tr_matvec(x),
        }
    }

    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        match self {
            MatrixFactor::Dense(m) => w.dot(&(m * w)),
            MatrixFactor::Sparse(m) => m.quad_form(w),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            MatrixFactor::Dense(m) => m[(i, j)],
            MatrixFactor::Sparse(m) => m.get(i, j),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            MatrixFactor::Dense(m) => m.diagonal(),
            MatrixFactor::Sparse(m) => m.diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            MatrixFactor::Dense(m) => m.clone(),
            MatrixFactor::Sparse(m) => m.to_dense(),
        }
    }
}

/// Rank-`p` representation of a parameter-dependent operator,
/// `P(q) = sum_i factors[i] * coeff[i, q]`.
///
/// Sparse factors must share one sparsity pattern so that evaluation
/// preserves it and combinations stay flat.
#[derive(Debug, Clone)]
pub struct LowRankMatrixFamily {
    factors: Vec<MatrixFactor>,
    coeff: DMatrix<f64>,
    nrows: usize,
    ncols: usize,
}

impl LowRankMatrixFamily {
    pub fn new(factors: Vec<MatrixFactor>, coeff: DMatrix<f64>) -> Result<Self> {
        if factors.len() != coeff.nrows() {
            return Err(Error::DimensionMismatch {
                context: "matrix factors vs coefficient rows",
                expected: factors.len(),
                got: coeff.nrows(),
            });
        }
        let first = factors.first().ok_or_else(|| {
            Error::InvalidArgument("matrix family needs at least one factor".into())
        })?;
        let (nrows, ncols) = (first.nrows(), first.ncols());
        let all_sparse = matches!(first, MatrixFactor::Sparse(_));
        for f in &factors {
            if f.nrows() != nrows || f.ncols() != ncols {
                return Err(Error::DimensionMismatch {
                    context: "matrix factor shapes",
                    expected: nrows,
                    got: f.nrows(),
                });
            }
            if matches!(f, MatrixFactor::Sparse(_)) != all_sparse {
                return Err(Error::InvalidArgument(
                    "matrix family factors must be all dense or all sparse".into(),
                ));
            }
        }
        if all_sparse {
            let base = match first {
                MatrixFactor::Sparse(m) => m,
                _ => unreachable!(),
            };
            for f in &factors {
                if let MatrixFactor::Sparse(m) = f {
                    if !base.same_pattern(m) {
                        return Err(Error::InvalidArgument(
                            "sparse matrix family factors must share one pattern".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self { factors, coeff, nrows, ncols })
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn num_samples(&self) -> usize {
        self.coeff.ncols()
    }

    pub fn factors(&self) -> &[MatrixFactor] {
        &self.factors
    }

    pub fn coeff(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.factors.first(), Some(MatrixFactor::Sparse(_)))
    }

    /// `P(q)` as a combined factor of the same kind as the inputs.
    pub fn evaluate(&self, q: usize) -> Result<MatrixFactor> {
        if q >= self.num_samples() {
            return Err(Error::SampleOutOfRange { index: q, count: self.num_samples() });
        }
        let weights: Vec<f64> = (0..self.rank()).map(|i| self.coeff[(i, q)]).collect();
        self.combine(&weights)
    }

    /// `sum_i weights[i] * factors[i]`.
    pub fn combine(&self, weights: &[f64]) -> Result<MatrixFactor> {
        if weights.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                context: "combination weights",
                expected: self.rank(),
                got: weights.len(),
            });
        }
        if self.is_sparse() {
            let mats: Vec<CsrMatrix> = self
                .factors
                .iter()
                .map(|f| match f {
                    MatrixFactor::Sparse(m) => m.clone(),
                    _ => unreachable!(),
                })
                .collect();
            Ok(MatrixFactor::Sparse(CsrMatrix::linear_combination(&mats, weights)?))
        } else {
            let mut out = DMatrix::zeros(self.nrows, self.ncols);
            for (f, &w) in self.factors.iter().zip(weights) {
                if let MatrixFactor::Dense(m) = f {
                    out += m * w;
                }
            }
            Ok(MatrixFactor::Dense(out))
        }
    }

    /// `P(q) x` without materializing `P(q)`.
    pub fn apply_at(&self, q: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        if q >= self.num_samples() {
            return Err(Error::SampleOutOfRange { index: q, count: self.num_samples() });
        }
        let mut y = DVector::zeros(self.nrows);
        for (i, f) in self.factors.iter().enumerate() {
            let c = self.coeff[(i, q)];
            if c != 0.0 {
                y += f.matvec(x) * c;
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Dense assembly oracle: explicit triple loop, independent of the
    /// factored evaluation path.
    fn assemble_dense(fam: &LowRankVectorFamily) -> DMatrix<f64> {
        let (n, q, r) = (fam.n(), fam.num_samples(), fam.rank());
        let mut out = DMatrix::zeros(n, q);
        for col in 0..q {
            for row in 0..n {
                let mut acc = 0.0;
                for k in 0..r {
                    acc += fam.spatial()[(row, k)] * fam.coeff()[(k, col)];
                }
                out[(row, col)] = acc;
            }
        }
        out
    }

    fn random_family(n: usize, q: usize, r: usize, seed: u64) -> LowRankVectorFamily {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let spatial = DMatrix::from_fn(n, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let coeff = DMatrix::from_fn(r, q, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        LowRankVectorFamily::new(spatial, coeff).unwrap()
    }

    #[test]
    fn rank_zero_evaluates_to_zero_vector() {
        let fam = LowRankVectorFamily::zero(4, 3);
        assert_eq!(fam.evaluate(2).unwrap(), DVector::zeros(4));
        assert_eq!(fam.global_norm(&NormSpec::Euclidean), 0.0);
    }

    #[test]
    fn rank_one_evaluation_is_a_scalar_multiple() {
        let fam = LowRankVectorFamily::rank_one(dvector![1.0, 2.0], dvector![3.0, 4.0]);
        assert_eq!(fam.evaluate(1).unwrap(), dvector![4.0, 8.0]);
    }

    #[test]
    fn evaluation_matches_dense_assembly() {
        let fam = random_family(5, 4, 3, 7);
        let dense = assemble_dense(&fam);
        for q in 0..4 {
            let v = fam.evaluate(q).unwrap();
            for i in 0..5 {
                assert!((v[i] - dense[(i, q)]).abs() <= 1e-13 * dense[(i, q)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn entry_evaluation_matches_column() {
        let fam = random_family(6, 5, 3, 11);
        for q in 0..5 {
            let col = fam.evaluate(q).unwrap();
            for i in 0..6 {
                assert!((fam.evaluate_entry(i, q).unwrap() - col[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn global_norm_simple_case() {
        let fam = LowRankVectorFamily::rank_one(dvector![3.0, 4.0], dvector![1.0, 0.0]);
        assert!((fam.global_norm(&NormSpec::Euclidean) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn global_norm_matches_frobenius_of_assembly() {
        let fam = random_family(8, 6, 2, 3);
        let dense = assemble_dense(&fam);
        let frob = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        let got = fam.global_norm(&NormSpec::Euclidean);
        assert!((got - frob).abs() <= 1e-12 * frob);
    }

    #[test]
    fn weighted_global_norm_matches_per_sample_sum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let norm = NormSpec::weighted(m).unwrap();
        let fam = random_family(3, 5, 2, 9);
        let mut acc = 0.0;
        for q in 0..5 {
            let v = fam.evaluate(q).unwrap();
            acc += norm.inner(&v, &v);
        }
        assert!((fam.global_norm(&norm) - acc.sqrt()).abs() < 1e-12 * acc.sqrt());
    }

    #[test]
    fn add_zero_family_is_identity_on_evaluations() {
        let a = random_family(4, 3, 2, 5);
        let sum = a.add(&LowRankVectorFamily::zero(4, 3)).unwrap();
        for q in 0..3 {
            assert_eq!(sum.evaluate(q).unwrap(), a.evaluate(q).unwrap());
        }
    }

    #[test]
    fn add_concatenates_and_sums() {
        let a = random_family(4, 3, 1, 1);
        let b = random_family(4, 3, 1, 2);
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.rank(), 2);
        for q in 0..3 {
            let expect = a.evaluate(q).unwrap() + b.evaluate(q).unwrap();
            let got = sum.evaluate(q).unwrap();
            assert!((got - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn add_rejects_mismatched_shapes() {
        let a = random_family(4, 3, 1, 1);
        let b = random_family(5, 3, 1, 1);
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn matrix_family_evaluation_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let factors: Vec<MatrixFactor> = (0..3)
            .map(|_| MatrixFactor::Dense(DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>())))
            .collect();
        let coeff = DMatrix::from_fn(3, 5, |_, _| rng.random::<f64>());
        let fam = LowRankMatrixFamily::new(factors.clone(), coeff.clone()).unwrap();
        for q in 0..5 {
            let mut expect = DMatrix::zeros(4, 4);
            for (i, f) in factors.iter().enumerate() {
                expect += f.to_dense() * coeff[(i, q)];
            }
            let got = fam.evaluate(q).unwrap().to_dense();
            assert!((got - &expect).amax() < 1e-13);
        }
    }

    #[test]
    fn sparse_family_requires_shared_pattern() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(1, 1, 1.0)]).unwrap();
        let coeff = DMatrix::zeros(2, 1);
        let fam = LowRankMatrixFamily::new(
            vec![MatrixFactor::Sparse(a), MatrixFactor::Sparse(b)],
            coeff,
        );
        assert!(fam.is_err());
    }
}
