use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// The spatial inner product used for residual norms.
///
/// Either the plain Euclidean inner product or `<u, v> = u' M v` for a
/// symmetric positive definite `M`.
#[derive(Debug, Clone)]
pub enum NormSpec {
    Euclidean,
    Weighted(DMatrix<f64>),
}

impl NormSpec {
    /// Builds a weighted norm, verifying symmetry and positive definiteness
    /// up front so downstream factorizations cannot fail.
    pub fn weighted(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "norm weight must be square",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-13 * scale {
                    return Err(Error::WeightNotSpd);
                }
            }
        }
        if Cholesky::new(m.clone()).is_none() {
            return Err(Error::WeightNotSpd);
        }
        Ok(NormSpec::Weighted(m))
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, NormSpec::Euclidean)
    }

    /// `M v` (identity application for the Euclidean case).
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NormSpec::Euclidean => v.clone(),
            NormSpec::Weighted(m) => m * v,
        }
    }

    /// `u' M v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match self {
            NormSpec::Euclidean => u.dot(v),
            NormSpec::Weighted(m) => u.dot(&(m * v)),
        }
    }

    /// `sqrt(v' M v)`; tiny negative round-off is clipped to zero.
    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Gram matrix `U' M U` of the columns of `U`.
    pub fn gram(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NormSpec::Euclidean => u.transpose() * u,
            NormSpec::Weighted(m) => u.transpose() * (m * u),
        }
    }

    /// Cross Gram matrix `U' M V`.
    pub fn cross_gram(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NormSpec::Euclidean => u.transpose() * v,
            NormSpec::Weighted(m) => u.transpose() * (m * v),
        }
    }
}
