//! Randomized empirical interpolation (adaptive cross approximation with
//! partial pivoting) for residual vectors and preconditioner matrices whose
//! low-rank structure is unknown, plus the statistical error certificate.
//!
//! Candidate interpolation points are drawn uniformly from the unused
//! samples; a candidate whose interpolation error column vanishes is
//! rejected, and once every remaining candidate has been rejected the
//! interpolant is exact on the sample set. Accuracy is certified by Monte
//! Carlo probing of single entries with a Student-t confidence bound.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::family::{LowRankMatrixFamily, LowRankVectorFamily, MatrixFactor};
use crate::sparse::{CsrMatrix, Pattern};
use crate::stats::student_t_quantile;

/// Floor below which a candidate error column counts as zero, relative to
/// the magnitudes entering the interpolation residual. Solving the magic
/// system amplifies round-off by its growth factor, so the floor sits a few
/// orders above machine epsilon; everything the driver asks for is far
/// coarser.
const REJECT_FLOOR: f64 = 1e-12;

/// Oracle over a parameter-dependent vector quantity, addressed by component
/// and sample index.
///
/// `column` and `entry` are oracle samples and must be tallied by the
/// implementation. `magic_row` supplies the component values the interpolant
/// is anchored on across all samples; it is part of evaluating the
/// interpolant rather than sampling the unknown, so implementations do not
/// count it against the oracle budget.
pub trait VectorEntryOracle {
    fn dim(&self) -> usize;
    fn num_samples(&self) -> usize;
    fn column(&mut self, q: usize) -> DVector<f64>;
    fn entry(&mut self, i: usize, q: usize) -> f64;
    fn magic_row(&mut self, i: usize) -> RowDVector<f64>;
}

/// Oracle over a parameter-dependent sparse matrix with a fixed admissible
/// pattern; entries are addressed by storage position within the pattern.
pub trait MatrixEntryOracle {
    fn pattern(&self) -> Arc<Pattern>;
    fn num_samples(&self) -> usize;
    /// Values of `P(x_q)` over the pattern, counted as one matrix call.
    fn matrix_values(&mut self, q: usize) -> DVector<f64>;
    /// Single entry at pattern position `pos`, counted as one entry call.
    fn entry(&mut self, pos: usize, q: usize) -> f64;
    /// Entry at `pos` across all samples; interpolant-internal, not counted.
    fn magic_row(&mut self, pos: usize) -> RowDVector<f64>;
}

/// Interpolant built by the randomized greedy loop.
///
/// `magic_matrix[k, j]` holds component `i_k` of the snapshot at point `j`;
/// it stays invertible because only candidates with a nonzero error column
/// are accepted. `magic_rows` caches the anchored components across all
/// samples so the interpolation coefficients need no further oracle access.
#[derive(Debug, Clone)]
pub struct RandomizedVectorInterpolant {
    points: Vec<usize>,
    magic_indices: Vec<usize>,
    magic_matrix: DMatrix<f64>,
    snapshots: DMatrix<f64>,
    magic_rows: DMatrix<f64>,
    exhausted: bool,
    rejected_draws: u64,
    seed: u64,
}

impl RandomizedVectorInterpolant {
    fn empty(n: usize, q: usize, seed: u64) -> Self {
        Self {
            points: Vec::new(),
            magic_indices: Vec::new(),
            magic_matrix: DMatrix::zeros(0, 0),
            snapshots: DMatrix::zeros(n, 0),
            magic_rows: DMatrix::zeros(0, q),
            exhausted: false,
            rejected_draws: 0,
            seed,
        }
    }

    pub fn rank(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn magic_indices(&self) -> &[usize] {
        &self.magic_indices
    }

    pub fn snapshots(&self) -> &DMatrix<f64> {
        &self.snapshots
    }

    /// True when the sample pool was exhausted: every remaining candidate
    /// interpolated exactly, or no candidates were left before the stopping
    /// rule fired.
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn rejected_draws(&self) -> u64 {
        self.rejected_draws
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Interpolation coefficients for every sample (LU solve of the magic
    /// system against the cached rows).
    pub fn alphas(&self) -> Result<DMatrix<f64>> {
        let r = self.rank();
        if r == 0 {
            return Ok(DMatrix::zeros(0, self.magic_rows.ncols()));
        }
        let lu = self.magic_matrix.clone().lu();
        lu.solve(&self.magic_rows).ok_or(Error::SingularInterpolation { rank: r })
    }

    /// Interpolant entries at the given (component, sample) pairs.
    pub fn entries_at(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        if self.rank() == 0 {
            return Ok(vec![0.0; pairs.len()]);
        }
        let alphas = self.alphas()?;
        Ok(pairs
            .iter()
            .map(|&(i, q)| self.snapshots.row(i).tr_dot(&alphas.column(q)))
            .collect())
    }

    /// Lifts to a low-rank family: snapshot columns as spatial factors, the
    /// interpolation coefficients as coefficient factors. No oracle access.
    pub fn to_family(&self, n: usize, q: usize) -> Result<LowRankVectorFamily> {
        if self.rank() == 0 {
            return Ok(LowRankVectorFamily::zero(n, q));
        }
        LowRankVectorFamily::new(self.snapshots.clone(), self.alphas()?)
    }
}

/// Matrix flavor: the same construction on the flattened admissible pattern.
#[derive(Debug, Clone)]
pub struct MatrixInterpolant {
    inner: RandomizedVectorInterpolant,
    pattern: Arc<Pattern>,
    magic_pairs: Vec<(usize, usize)>,
}

impl MatrixInterpolant {
    pub fn rank(&self) -> usize {
        self.inner.rank()
    }

    pub fn points(&self) -> &[usize] {
        self.inner.points()
    }

    /// Chosen magic entries as (row, column) pairs; all lie in the pattern.
    pub fn magic_pairs(&self) -> &[(usize, usize)] {
        &self.magic_pairs
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn is_exhausted(&self) -> bool {
        self.inner.is_exhausted()
    }

    pub fn as_flat(&self) -> &RandomizedVectorInterpolant {
        &self.inner
    }

    /// Snapshot matrices restored to sparse form.
    pub fn snapshot_matrices(&self) -> Result<Vec<CsrMatrix>> {
        (0..self.rank())
            .map(|j| {
                CsrMatrix::from_values(
                    self.pattern.clone(),
                    self.inner.snapshots.column(j).iter().copied().collect(),
                )
            })
            .collect()
    }

    /// Lifts to a low-rank operator family over the shared pattern.
    pub fn to_family(&self) -> Result<LowRankMatrixFamily> {
        let factors = self
            .snapshot_matrices()?
            .into_iter()
            .map(MatrixFactor::Sparse)
            .collect();
        LowRankMatrixFamily::new(factors, self.inner.alphas()?)
    }
}

/// Statistical accuracy certificate from `M` uniformly probed entries.
#[derive(Debug, Clone)]
pub struct StatEstimate {
    /// Number of probes `M`.
    pub probes: usize,
    /// Mean of the probe variables; unbiased estimate of the squared
    /// Frobenius interpolation error.
    pub mean: f64,
    /// Sample standard deviation of the probe variables.
    pub std_dev: f64,
    /// Student-t quantile used for the bound.
    pub t_quantile: f64,
    /// Upper confidence bound on the Frobenius interpolation error.
    pub e_bound: f64,
    /// Confidence level `1 - alpha`.
    pub confidence: f64,
    /// Estimate of the Frobenius norm of the probed quantity itself.
    pub z_estimate: f64,
    /// Largest absolute entry error seen on the probe set.
    pub sup_error: f64,
    /// Whether all admissible entries were probed (bound is then exact).
    pub exact: bool,
}

/// A fixed set of probe pairs with their true values, drawn once and reused
/// to re-certify a growing interpolant without further oracle calls.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pairs: Vec<(usize, usize)>,
    true_values: Vec<f64>,
    scale: f64,
    alpha: f64,
    t_quantile: f64,
    exact: bool,
}

impl ProbeSet {
    fn draw(
        dim: usize,
        num_samples: usize,
        scale: f64,
        m: usize,
        alpha: f64,
        seed: u64,
        fetch: &mut dyn FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "certificate needs at least 2 probes, got {m}"
            )));
        }
        if dim == 0 || num_samples == 0 {
            return Err(Error::InvalidArgument("cannot probe an empty quantity".into()));
        }
        let admissible = (dim as u128) * (num_samples as u128);
        let exact = m as u128 >= admissible;
        let pairs: Vec<(usize, usize)> = if exact {
            (0..dim)
                .flat_map(|i| (0..num_samples).map(move |q| (i, q)))
                .collect()
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| (rng.random_range(0..dim), rng.random_range(0..num_samples)))
                .collect()
        };
        let true_values = pairs.iter().map(|&(i, q)| fetch(i, q)).collect();
        let t_quantile = if exact { 0.0 } else { student_t_quantile(alpha, pairs.len() - 1)? };
        Ok(ProbeSet { pairs, true_values, scale, alpha, t_quantile, exact })
    }

    /// Draws `m` independent uniform probes of a vector quantity; the true
    /// entries cost `m` counted oracle calls. When `m` reaches the number of
    /// admissible entries, all of them are probed instead (exact mode).
    pub fn draw_vector(
        oracle: &mut dyn VectorEntryOracle,
        m: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let (dim, q) = (oracle.dim(), oracle.num_samples());
        let scale = dim as f64 * q as f64;
        ProbeSet::draw(dim, q, scale, m, alpha, seed, &mut |i, s| oracle.entry(i, s))
    }

    /// Matrix counterpart: probes are uniform over the admissible pattern,
    /// and the entry-count scale is the pattern size times the sample count.
    pub fn draw_matrix(
        oracle: &mut dyn MatrixEntryOracle,
        m: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        let nnz = oracle.pattern().nnz();
        let q = oracle.num_samples();
        let scale = nnz as f64 * q as f64;
        ProbeSet::draw(nnz, q, scale, m, alpha, seed, &mut |pos, s| oracle.entry(pos, s))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn true_values(&self) -> &[f64] {
        &self.true_values
    }

    /// Certifies an interpolant given its values at the probe pairs.
    pub fn estimate_from_values(&self, interp_values: &[f64]) -> StatEstimate {
        let m = self.pairs.len();
        assert_eq!(interp_values.len(), m, "one interpolant value per probe");
        let factor = self.scale / m as f64;
        let mut mean = 0.0;
        let mut z_sq = 0.0;
        let mut sup = 0.0f64;
        for (&truth, &approx) in self.true_values.iter().zip(interp_values) {
            let err = truth - approx;
            mean += self.scale * err * err;
            z_sq += factor * truth * truth;
            sup = sup.max(err.abs());
        }
        mean /= m as f64;
        let mut var = 0.0;
        for (&truth, &approx) in self.true_values.iter().zip(interp_values) {
            let err = truth - approx;
            let x = self.scale * err * err;
            var += (x - mean) * (x - mean);
        }
        let std_dev = if m > 1 { (var / (m - 1) as f64).sqrt() } else { 0.0 };
        let e_sq = if self.exact {
            mean
        } else {
            mean + self.t_quantile * std_dev / (m as f64).sqrt()
        };
        StatEstimate {
            probes: m,
            mean,
            std_dev,
            t_quantile: self.t_quantile,
            e_bound: e_sq.max(0.0).sqrt(),
            confidence: 1.0 - self.alpha,
            z_estimate: z_sq.max(0.0).sqrt(),
            sup_error: sup,
            exact: self.exact,
        }
    }

    /// Certifies a vector interpolant (no oracle calls).
    pub fn estimate(&self, itp: &RandomizedVectorInterpolant) -> Result<StatEstimate> {
        let values = itp.entries_at(&self.pairs)?;
        Ok(self.estimate_from_values(&values))
    }
}

/// Draws fresh probes and certifies a vector interpolant; costs `M` counted
/// entry calls.
pub fn certify_vector(
    itp: &RandomizedVectorInterpolant,
    oracle: &mut dyn VectorEntryOracle,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<StatEstimate> {
    let probes = ProbeSet::draw_vector(oracle, m, alpha, seed)?;
    probes.estimate(itp)
}

/// Draws fresh probes and certifies a matrix interpolant; costs `M` counted
/// entry calls.
pub fn certify_matrix(
    itp: &MatrixInterpolant,
    oracle: &mut dyn MatrixEntryOracle,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<StatEstimate> {
    let probes = ProbeSet::draw_matrix(oracle, m, alpha, seed)?;
    probes.estimate(itp.as_flat())
}

/// Decision callback run on the interpolant after every accepted point (and
/// once at rank zero); returns true to stop.
pub type AcaStopRule<'a> = &'a mut dyn FnMut(&RandomizedVectorInterpolant) -> Result<bool>;

/// Randomized vector EIM.
///
/// Uniformly draws an unused sample, evaluates its full column, and either
/// rejects it (error column at the round-off floor) or anchors a new
/// interpolation point at the largest-magnitude error component (ties to the
/// smallest index). Rejected candidates re-enter the pool after the next
/// acceptance. Stops when the rule fires or the pool is exhausted, the
/// latter flagging the interpolant exhausted/exact.
pub fn randomized_vector_eim(
    oracle: &mut dyn VectorEntryOracle,
    stop: AcaStopRule<'_>,
    seed: u64,
) -> Result<RandomizedVectorInterpolant> {
    let n = oracle.dim();
    let q = oracle.num_samples();
    if q == 0 || n == 0 {
        return Err(Error::InvalidArgument("cannot interpolate an empty quantity".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut itp = RandomizedVectorInterpolant::empty(n, q, seed);
    let mut pool: Vec<usize> = (0..q).collect();
    let mut rejected_round: Vec<usize> = Vec::new();

    // The rule sees the rank-zero state once, then each accepted state.
    if stop(&itp)? {
        return Ok(itp);
    }
    loop {
        if pool.is_empty() {
            itp.exhausted = true;
            return Ok(itp);
        }

        let draw = rng.random_range(0..pool.len());
        let candidate = pool.swap_remove(draw);
        let column = oracle.column(candidate);

        let error_col = if itp.rank() == 0 {
            column.clone()
        } else {
            let magic_vals = DVector::from_fn(itp.rank(), |k, _| column[itp.magic_indices[k]]);
            let lu = itp.magic_matrix.clone().lu();
            let alpha = lu
                .solve(&magic_vals)
                .ok_or(Error::SingularInterpolation { rank: itp.rank() })?;
            &column - &itp.snapshots * alpha
        };

        let interp_scale = if itp.rank() == 0 { 0.0 } else { (&column - &error_col).amax() };
        let col_scale = column.amax().max(interp_scale);
        if error_col.amax() <= REJECT_FLOOR * col_scale {
            itp.rejected_draws += 1;
            rejected_round.push(candidate);
            continue;
        }

        let mut best_i = 0;
        let mut best_abs = f64::NEG_INFINITY;
        for i in 0..n {
            let a = error_col[i].abs();
            if a > best_abs {
                best_abs = a;
                best_i = i;
            }
        }

        let r = itp.rank();
        let mut magic = DMatrix::zeros(r + 1, r + 1);
        magic.view_mut((0, 0), (r, r)).copy_from(&itp.magic_matrix);
        for j in 0..r {
            magic[(r, j)] = itp.snapshots[(best_i, j)];
        }
        for (k, &i) in itp.magic_indices.iter().enumerate() {
            magic[(k, r)] = column[i];
        }
        magic[(r, r)] = column[best_i];
        itp.magic_matrix = magic;

        let mut snapshots = DMatrix::zeros(n, r + 1);
        snapshots.columns_mut(0, r).copy_from(&itp.snapshots);
        snapshots.column_mut(r).copy_from(&column);
        itp.snapshots = snapshots;

        let mut rows = DMatrix::zeros(r + 1, q);
        rows.rows_mut(0, r).copy_from(&itp.magic_rows);
        rows.row_mut(r).copy_from(&oracle.magic_row(best_i));
        itp.magic_rows = rows;

        itp.points.push(candidate);
        itp.magic_indices.push(best_i);
        pool.append(&mut rejected_round);

        if stop(&itp)? {
            return Ok(itp);
        }
    }
}

/// Randomized matrix EIM over the admissible pattern: the vector algorithm
/// applied to the flattened pattern values.
pub fn randomized_matrix_eim(
    oracle: &mut dyn MatrixEntryOracle,
    stop: AcaStopRule<'_>,
    seed: u64,
) -> Result<MatrixInterpolant> {
    struct Flat<'a> {
        inner: &'a mut dyn MatrixEntryOracle,
        nnz: usize,
    }
    impl VectorEntryOracle for Flat<'_> {
        fn dim(&self) -> usize {
            self.nnz
        }
        fn num_samples(&self) -> usize {
            self.inner.num_samples()
        }
        fn column(&mut self, q: usize) -> DVector<f64> {
            self.inner.matrix_values(q)
        }
        fn entry(&mut self, i: usize, q: usize) -> f64 {
            self.inner.entry(i, q)
        }
        fn magic_row(&mut self, i: usize) -> RowDVector<f64> {
            self.inner.magic_row(i)
        }
    }

    let pattern = oracle.pattern();
    if pattern.nnz() == 0 {
        return Err(Error::InvalidArgument("admissible pattern is empty".into()));
    }
    let mut flat = Flat { inner: oracle, nnz: pattern.nnz() };
    let inner = randomized_vector_eim(&mut flat, stop, seed)?;
    let entries = pattern.entries();
    let magic_pairs = inner.magic_indices.iter().map(|&pos| entries[pos]).collect();
    Ok(MatrixInterpolant { inner, pattern, magic_pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Synthetic oracle over an explicit dense table, with its own call
    /// accounting.
    struct TableOracle {
        data: DMatrix<f64>,
        column_calls: usize,
        entry_calls: usize,
    }

    impl TableOracle {
        fn new(data: DMatrix<f64>) -> Self {
            Self { data, column_calls: 0, entry_calls: 0 }
        }
    }

    impl VectorEntryOracle for TableOracle {
        fn dim(&self) -> usize {
            self.data.nrows()
        }
        fn num_samples(&self) -> usize {
            self.data.ncols()
        }
        fn column(&mut self, q: usize) -> DVector<f64> {
            self.column_calls += 1;
            self.data.column(q).into_owned()
        }
        fn entry(&mut self, i: usize, q: usize) -> f64 {
            self.entry_calls += 1;
            self.data[(i, q)]
        }
        fn magic_row(&mut self, i: usize) -> RowDVector<f64> {
            self.data.row(i).into_owned()
        }
    }

    fn low_rank_table(n: usize, q: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let u = DMatrix::from_fn(n, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let v = DMatrix::from_fn(rank, q, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        u * v
    }

    fn frobenius_error(itp: &RandomizedVectorInterpolant, data: &DMatrix<f64>) -> f64 {
        let fam = itp.to_family(data.nrows(), data.ncols()).unwrap();
        let mut acc = 0.0;
        for q in 0..data.ncols() {
            acc += (fam.evaluate(q).unwrap() - data.column(q)).norm_squared();
        }
        acc.sqrt()
    }

    #[test]
    fn rank_one_quantity_is_exact_after_one_point() {
        let data = low_rank_table(10, 15, 1, 3);
        let mut oracle = TableOracle::new(data.clone());
        let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), 7).unwrap();
        assert_eq!(itp.rank(), 1);
        assert!(itp.is_exhausted());
        // One accepted column plus every remaining candidate rejected.
        assert_eq!(oracle.column_calls, 15);
        assert_eq!(itp.rejected_draws(), 14);
        assert!(frobenius_error(&itp, &data) <= 1e-12 * data.amax());
    }

    #[test]
    fn zero_quantity_terminates_with_rank_zero() {
        let mut oracle = TableOracle::new(DMatrix::zeros(6, 8));
        let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), 1).unwrap();
        assert_eq!(itp.rank(), 0);
        assert!(itp.is_exhausted());
        assert_eq!(itp.rejected_draws(), 8);
    }

    #[test]
    fn exact_rank_recovery_across_seeds() {
        let rank = 4;
        let data = low_rank_table(30, 50, rank, 11);
        let scale = data.amax();
        for seed in 0..20 {
            let mut oracle = TableOracle::new(data.clone());
            let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), seed).unwrap();
            assert_eq!(itp.rank(), rank, "seed {seed}");
            assert!(
                frobenius_error(&itp, &data) <= 1e-10 * scale,
                "seed {seed}: not exact at structural rank"
            );
        }
    }

    #[test]
    fn interpolation_property_at_anchored_pairs() {
        let data = low_rank_table(12, 20, 3, 5);
        let mut oracle = TableOracle::new(data.clone());
        let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), 2).unwrap();
        let pairs: Vec<(usize, usize)> = itp
            .magic_indices()
            .iter()
            .flat_map(|&i| itp.points().iter().map(move |&p| (i, p)))
            .collect();
        let values = itp.entries_at(&pairs).unwrap();
        for ((i, p), v) in pairs.iter().zip(values) {
            let truth = data[(*i, *p)];
            assert!(
                (v - truth).abs() <= 1e-12 * truth.abs().max(1.0),
                "entry ({i}, {p})"
            );
        }
    }

    #[test]
    fn stopping_rule_halts_growth() {
        let data = low_rank_table(20, 30, 6, 9);
        let mut oracle = TableOracle::new(data);
        let itp =
            randomized_vector_eim(&mut oracle, &mut |state| Ok(state.rank() >= 2), 4).unwrap();
        assert_eq!(itp.rank(), 2);
        assert!(!itp.is_exhausted());
    }

    #[test]
    fn per_step_error_decreases_to_exactness() {
        let data = low_rank_table(25, 40, 5, 13);
        let mut errors = Vec::new();
        // The rule observes each greedy state; dense-assembly oracle inside.
        let data_copy = data.clone();
        let mut oracle = TableOracle::new(data.clone());
        let _ = randomized_vector_eim(
            &mut oracle,
            &mut |state| {
                errors.push(frobenius_error(state, &data_copy));
                Ok(false)
            },
            21,
        )
        .unwrap();
        assert_eq!(errors.len(), 6); // ranks 0..=5
        assert!(errors[5] <= 1e-10 * data.amax());
    }

    #[test]
    fn certificate_is_zero_for_exact_interpolant() {
        let data = low_rank_table(15, 25, 2, 17);
        let mut oracle = TableOracle::new(data);
        let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), 3).unwrap();
        let est = certify_vector(&itp, &mut oracle, 50, 0.05, 99).unwrap();
        assert!(est.e_bound <= 1e-10);
        assert!(est.mean <= 1e-22);
        assert_eq!(est.probes, 50);
        assert_eq!(oracle.entry_calls, 50);
    }

    #[test]
    fn certificate_constant_error_has_zero_variance() {
        // True quantity constant c, interpolant identically zero: every probe
        // sees the same squared error, so the bound equals the exact
        // Frobenius error sqrt(N Q) |c|.
        let (n, q, c) = (7usize, 9usize, 0.3f64);
        let mut oracle = TableOracle::new(DMatrix::from_element(n, q, c));
        let itp = RandomizedVectorInterpolant::empty(n, q, 0);
        let est = certify_vector(&itp, &mut oracle, 20, 0.05, 1).unwrap();
        let exact = ((n * q) as f64).sqrt() * c;
        assert!((est.std_dev).abs() < 1e-12);
        assert!((est.e_bound - exact).abs() < 1e-12);
        assert!((est.mean - exact * exact).abs() < 1e-10);
    }

    #[test]
    fn exhaustive_probing_is_exact() {
        let data = low_rank_table(4, 5, 2, 23);
        let mut oracle = TableOracle::new(data.clone());
        let itp = RandomizedVectorInterpolant::empty(4, 5, 0);
        let est = certify_vector(&itp, &mut oracle, 1000, 0.05, 2).unwrap();
        assert!(est.exact);
        let frob = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((est.e_bound - frob).abs() < 1e-12 * frob);
        assert!((est.z_estimate - frob).abs() < 1e-12 * frob);
    }

    #[test]
    fn call_accounting_matches_hand_count() {
        let data = low_rank_table(10, 12, 3, 29);
        let mut oracle = TableOracle::new(data);
        let itp = randomized_vector_eim(&mut oracle, &mut |_| Ok(false), 8).unwrap();
        // Every draw evaluates one column: accepts plus rejects.
        assert_eq!(
            oracle.column_calls as u64,
            itp.rank() as u64 + itp.rejected_draws()
        );
        let before_entries = oracle.entry_calls;
        let _ = certify_vector(&itp, &mut oracle, 37, 0.05, 5).unwrap();
        assert_eq!(oracle.entry_calls - before_entries, 37);
    }

    mod matrix {
        use super::*;

        struct SparseOracle {
            pattern: Arc<Pattern>,
            tables: DMatrix<f64>, // nnz x Q values
            matrix_calls: usize,
            entry_calls: usize,
        }

        impl MatrixEntryOracle for SparseOracle {
            fn pattern(&self) -> Arc<Pattern> {
                self.pattern.clone()
            }
            fn num_samples(&self) -> usize {
                self.tables.ncols()
            }
            fn matrix_values(&mut self, q: usize) -> DVector<f64> {
                self.matrix_calls += 1;
                self.tables.column(q).into_owned()
            }
            fn entry(&mut self, pos: usize, q: usize) -> f64 {
                self.entry_calls += 1;
                self.tables[(pos, q)]
            }
            fn magic_row(&mut self, pos: usize) -> RowDVector<f64> {
                self.tables.row(pos).into_owned()
            }
        }

        #[test]
        fn rank_one_matrix_is_exact_after_one_point() {
            // P(x) = x F over a diagonal pattern.
            let pattern = Pattern::new(4, 4, (0..4).map(|i| (i, i)).collect()).unwrap();
            let f_vals = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
            let xi = [0.5, 1.5, 2.5, 3.5, 4.5];
            let tables = DMatrix::from_fn(4, 5, |pos, q| f_vals[pos] * xi[q]);
            let mut oracle = SparseOracle { pattern, tables, matrix_calls: 0, entry_calls: 0 };
            let itp = randomized_matrix_eim(&mut oracle, &mut |_| Ok(false), 3).unwrap();
            assert_eq!(itp.rank(), 1);
            assert!(itp.is_exhausted());
            // Magic pair confined to the diagonal pattern.
            let (i, j) = itp.magic_pairs()[0];
            assert_eq!(i, j);
            let fam = itp.to_family().unwrap();
            for q in 0..5 {
                let m = fam.evaluate(q).unwrap().to_dense();
                for d in 0..4 {
                    assert!((m[(d, d)] - f_vals[d] * xi[q]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn five_point_stencil_rank_three_recovery() {
            // Shared 5-point pattern on a 5x5 grid, planted rank 3.
            let n = 25usize;
            let side = 5usize;
            let mut entries = Vec::new();
            for i in 0..n {
                entries.push((i, i));
                let (ix, iy) = (i % side, i / side);
                if ix > 0 {
                    entries.push((i, i - 1));
                }
                if ix + 1 < side {
                    entries.push((i, i + 1));
                }
                if iy > 0 {
                    entries.push((i, i - side));
                }
                if iy + 1 < side {
                    entries.push((i, i + side));
                }
            }
            let pattern = Pattern::new(n, n, entries).unwrap();
            let nnz = pattern.nnz();
            let mut rng = ChaCha12Rng::seed_from_u64(31);
            let u = DMatrix::from_fn(nnz, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let v = DMatrix::from_fn(3, 40, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let tables = &u * &v;
            let mut oracle = SparseOracle {
                pattern,
                tables: tables.clone(),
                matrix_calls: 0,
                entry_calls: 0,
            };
            let itp = randomized_matrix_eim(&mut oracle, &mut |_| Ok(false), 41).unwrap();
            assert_eq!(itp.rank(), 3);
            assert_eq!(oracle.matrix_calls, 40);
            let flat_fam = itp.as_flat().to_family(nnz, 40).unwrap();
            let mut err = 0.0f64;
            for q in 0..40 {
                err = err.max((flat_fam.evaluate(q).unwrap() - tables.column(q)).amax());
            }
            assert!(err <= 1e-10 * tables.amax());
        }
    }
}
