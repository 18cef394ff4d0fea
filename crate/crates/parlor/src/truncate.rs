use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::family::LowRankVectorFamily;
use crate::norm::NormSpec;

/// Relative noise floor: singular values below this fraction of the largest
/// are always discarded.
const NOISE_FLOOR: f64 = 1e-15;

/// SVD truncation operator with relative tolerance `epsilon` and an optional
/// hard rank cap.
#[derive(Debug, Clone)]
pub struct Truncator {
    epsilon: f64,
    max_rank: Option<usize>,
}

impl Truncator {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation tolerance must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, max_rank: None })
    }

    pub fn with_max_rank(mut self, max_rank: usize) -> Self {
        self.max_rank = Some(max_rank);
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Recompresses `fam` so that the discarded energy satisfies
    /// `sum_q ||out(q) - fam(q)||^2 <= epsilon^2 * sum_q ||fam(q)||^2`,
    /// keeping the smallest rank that achieves the bound (at least one mode
    /// for a numerically nonzero family). The output spatial factors are
    /// orthonormal in the given norm.
    ///
    /// The SVD is taken on the small side: orthonormalize the spatial factors,
    /// then decompose the `r x Q` coefficient block, so the cost is
    /// `O(N r^2 + Q r^2 + r^3)` and the `N x Q` matrix is never formed.
    pub fn truncate(&self, fam: &LowRankVectorFamily, norm: &NormSpec) -> LowRankVectorFamily {
        let (n, q, r) = (fam.n(), fam.num_samples(), fam.rank());
        if r == 0 {
            return LowRankVectorFamily::zero(n, q);
        }

        // Orthonormal basis of the spatial columns plus the matching
        // coefficient block b with spatial * coeff = basis * b.
        let (basis, b) = match norm {
            NormSpec::Euclidean => {
                let qr = fam.spatial().clone().qr();
                let (qmat, rmat) = (qr.q(), qr.r());
                let b = &rmat * fam.coeff();
                (qmat, b)
            }
            NormSpec::Weighted(_) => {
                // Gram-based whitening: W = U'MU = V D V'; the columns of
                // U V D^{-1/2} are M-orthonormal. Directions with negligible
                // Gram eigenvalues carry no weighted energy and are dropped.
                let w = norm.gram(fam.spatial());
                let eig = w.symmetric_eigen();
                let dmax = eig.eigenvalues.amax().max(0.0);
                let keep: Vec<usize> = (0..r)
                    .filter(|&i| eig.eigenvalues[i] > dmax * NOISE_FLOOR * NOISE_FLOOR)
                    .collect();
                if keep.is_empty() {
                    return LowRankVectorFamily::zero(n, q);
                }
                let mut t = DMatrix::zeros(r, keep.len());
                let mut s = DMatrix::zeros(keep.len(), r);
                for (col, &i) in keep.iter().enumerate() {
                    let d = eig.eigenvalues[i].sqrt();
                    t.column_mut(col).copy_from(&(eig.eigenvectors.column(i) / d));
                    s.row_mut(col).copy_from(&(eig.eigenvectors.column(i).transpose() * d));
                }
                (fam.spatial() * t, s * fam.coeff())
            }
        };

        let mut svd = b.svd(true, true);
        svd.sort_by_singular_values();
        let sigma = &svd.singular_values;
        let sigma_max = sigma.amax();
        if sigma_max <= 0.0 {
            return LowRankVectorFamily::zero(n, q);
        }

        let total: f64 = sigma.iter().map(|s| s * s).sum();
        let budget = self.epsilon * self.epsilon * total;
        let mut keep = sigma.len();
        let mut tail = 0.0;
        // Walk from the smallest singular value; stop shrinking once dropping
        // the next one would exceed the energy budget. At least one mode is
        // kept so the epsilon = 1 edge case reduces to rank one, not zero.
        while keep > 1 {
            let s = sigma[keep - 1];
            let next_tail = tail + s * s;
            let below_floor = s <= NOISE_FLOOR * sigma_max;
            if next_tail <= budget || below_floor {
                tail = next_tail;
                keep -= 1;
            } else {
                break;
            }
        }
        if let Some(cap) = self.max_rank {
            keep = keep.min(cap.max(1));
        }

        let u = svd.u.as_ref().expect("svd computed with u");
        let vt = svd.v_t.as_ref().expect("svd computed with v_t");
        let spatial = &basis * u.columns(0, keep);
        let mut coeff = DMatrix::zeros(keep, q);
        for i in 0..keep {
            coeff.row_mut(i).copy_from(&(vt.row(i) * sigma[i]));
        }
        LowRankVectorFamily::new(spatial, coeff).expect("factored shapes are consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn orthonormal(n: usize, r: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        a.qr().q()
    }

    /// Family with a prescribed singular spectrum.
    fn spectral_family(n: usize, q: usize, sigma: &[f64], seed: u64) -> LowRankVectorFamily {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let u = orthonormal(n, sigma.len(), &mut rng);
        let v = orthonormal(q, sigma.len(), &mut rng);
        let mut coeff = DMatrix::zeros(sigma.len(), q);
        for (i, &s) in sigma.iter().enumerate() {
            coeff.row_mut(i).copy_from(&(v.column(i).transpose() * s));
        }
        LowRankVectorFamily::new(u, coeff).unwrap()
    }

    /// Dense-assembly difference oracle; the factored Gram route cannot
    /// resolve tiny differences of nearly equal families.
    fn diff_norm(a: &LowRankVectorFamily, b: &LowRankVectorFamily) -> f64 {
        let mut acc = 0.0;
        for q in 0..a.num_samples() {
            acc += (a.evaluate(q).unwrap() - b.evaluate(q).unwrap()).norm_squared();
        }
        acc.sqrt()
    }

    #[test]
    fn zero_family_stays_zero() {
        let t = Truncator::new(0.5).unwrap();
        let out = t.truncate(&LowRankVectorFamily::zero(5, 4), &NormSpec::Euclidean);
        assert_eq!(out.rank(), 0);
    }

    #[test]
    fn rank_one_family_is_reproduced_exactly() {
        let fam = LowRankVectorFamily::rank_one(
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            DVector::from_vec(vec![2.0, 3.0, -1.0, 0.0]),
        );
        let t = Truncator::new(1e-8).unwrap();
        let out = t.truncate(&fam, &NormSpec::Euclidean);
        assert_eq!(out.rank(), 1);
        assert!(diff_norm(&out, &fam) <= 1e-12 * fam.global_norm(&NormSpec::Euclidean));
    }

    #[test]
    fn prescribed_spectrum_truncates_at_expected_rank() {
        // Spectrum (10, 1, 1e-8) at eps = 1e-4: only the 1e-8 mode fits in
        // the energy budget (1e-16 discarded vs 1e-8 * 101 allowed).
        let fam = spectral_family(5, 6, &[10.0, 1.0, 1e-8], 3);
        let t = Truncator::new(1e-4).unwrap();
        let out = t.truncate(&fam, &NormSpec::Euclidean);
        assert_eq!(out.rank(), 2);
        let norm = fam.global_norm(&NormSpec::Euclidean);
        assert!(diff_norm(&out, &fam) <= 1e-4 * norm);
    }

    #[test]
    fn eps_one_drops_to_rank_one_and_bound_holds() {
        for seed in 0..5 {
            let fam = spectral_family(10, 12, &[4.0, 2.0, 1.0, 0.5], seed);
            let t = Truncator::new(1.0).unwrap();
            let out = t.truncate(&fam, &NormSpec::Euclidean);
            assert_eq!(out.rank(), 1);
            let norm = fam.global_norm(&NormSpec::Euclidean);
            assert!(diff_norm(&out, &fam) <= norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn truncation_bound_holds_across_tolerances() {
        for (case, &(n, q, r)) in [(40usize, 60usize, 12usize), (100, 200, 20), (25, 30, 8)]
            .iter()
            .enumerate()
        {
            let sigma: Vec<f64> = (0..r).map(|i| 10f64.powf(-(i as f64) * 0.8)).collect();
            let fam = spectral_family(n, q, &sigma, 100 + case as u64);
            let norm = fam.global_norm(&NormSpec::Euclidean);
            for &eps in &[1e-2, 1e-6, 1e-12] {
                let t = Truncator::new(eps).unwrap();
                let out = t.truncate(&fam, &NormSpec::Euclidean);
                assert!(
                    diff_norm(&out, &fam) <= eps * norm + 1e-12 * norm,
                    "bound violated at eps={eps} case={case}"
                );
            }
        }
    }

    #[test]
    fn output_spatial_factors_are_orthonormal() {
        let sigma: Vec<f64> = (0..10).map(|i| 2f64.powi(-i)).collect();
        let fam = spectral_family(30, 40, &sigma, 17);
        let t = Truncator::new(1e-6).unwrap();
        let out = t.truncate(&fam, &NormSpec::Euclidean);
        let gram = out.spatial().transpose() * out.spatial();
        let eye = DMatrix::identity(out.rank(), out.rank());
        assert!((gram - eye).amax() <= 1e-12);
    }

    #[test]
    fn truncation_is_idempotent_up_to_roundoff() {
        let sigma: Vec<f64> = (0..15).map(|i| 10f64.powf(-(i as f64) / 2.0)).collect();
        let fam = spectral_family(50, 60, &sigma, 9);
        let t = Truncator::new(1e-6).unwrap();
        let once = t.truncate(&fam, &NormSpec::Euclidean);
        let twice = t.truncate(&once, &NormSpec::Euclidean);
        let norm = once.global_norm(&NormSpec::Euclidean);
        assert!(diff_norm(&twice, &once) <= 1e-12 * norm);
    }

    #[test]
    fn max_rank_cap_forces_further_truncation() {
        let fam = spectral_family(10, 10, &[5.0, 4.0, 3.0, 2.0], 1);
        let t = Truncator::new(1e-12).unwrap().with_max_rank(2);
        let out = t.truncate(&fam, &NormSpec::Euclidean);
        assert_eq!(out.rank(), 2);
    }

    #[test]
    fn weighted_truncation_respects_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>() - 0.5);
        let m = &a * a.transpose() + DMatrix::identity(8, 8);
        let norm = NormSpec::weighted(m).unwrap();
        let sigma: Vec<f64> = (0..6).map(|i| 10f64.powf(-(i as f64))).collect();
        let fam = spectral_family(8, 12, &sigma, 2);
        let total = fam.global_norm(&norm);
        let t = Truncator::new(1e-3).unwrap();
        let out = t.truncate(&fam, &norm);
        let err = fam.add_scaled(&out, -1.0).unwrap().global_norm(&norm);
        assert!(err <= 1e-3 * total + 1e-12 * total);
        // M-orthonormality of the output basis.
        let gram = norm.gram(out.spatial());
        let eye = DMatrix::identity(out.rank(), out.rank());
        assert!((gram - eye).amax() <= 1e-10);
    }
}
