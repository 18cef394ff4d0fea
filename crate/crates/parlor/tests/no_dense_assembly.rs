//! Allocation audit: no factored operation may assemble an `N x Q` dense
//! matrix. A counting allocator records the largest single allocation while
//! the solver pipeline runs at a size where such an assembly would need more
//! than 8 MB in one block.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use parlor::family::{LowRankMatrixFamily, LowRankVectorFamily, MatrixFactor};
use parlor::norm::NormSpec;
use parlor::rankone::{apply_operator, greedy_solve, RankOneSolverConfig};
use parlor::sparse::CsrMatrix;
use parlor::truncate::Truncator;

struct MaxTrackingAllocator;

static LARGEST: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for MaxTrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        LARGEST.fetch_max(layout.size(), Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static ALLOCATOR: MaxTrackingAllocator = MaxTrackingAllocator;

#[test]
fn factored_pipeline_never_assembles_dense_n_by_q() {
    // N * Q = 1500 * 800 = 1.2e6 entries; a dense assembly would allocate
    // 9.6 MB in one block.
    let n = 1500usize;
    let q = 800usize;
    let dense_bytes = n * q * std::mem::size_of::<f64>();

    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let spatial = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
    let coeff = DMatrix::from_fn(3, q, |_, _| rng.random::<f64>() - 0.5);
    let rhs = LowRankVectorFamily::new(spatial, coeff).unwrap();

    // Tridiagonal SPD operator family on a shared pattern.
    let mut trip0 = Vec::new();
    for i in 0..n {
        trip0.push((i, i, 2.5));
        if i + 1 < n {
            trip0.push((i, i + 1, -1.0));
            trip0.push((i + 1, i, -1.0));
        }
    }
    let k0 = CsrMatrix::from_triplets(n, n, &trip0).unwrap();
    let mut k1 = CsrMatrix::zeros(k0.pattern().clone());
    for i in 0..n {
        let pos = k0.pattern().position(i, i).unwrap();
        k1.values_mut()[pos] = 0.3 + 0.1 * (i % 7) as f64;
    }
    let op_coeff = DMatrix::from_fn(2, q, |i, s| if i == 0 { 1.0 } else { 0.2 + 1e-3 * s as f64 });
    let op = LowRankMatrixFamily::new(
        vec![MatrixFactor::Sparse(k0), MatrixFactor::Sparse(k1)],
        op_coeff,
    )
    .unwrap();

    LARGEST.store(0, Ordering::Relaxed);

    let _ = rhs.global_norm(&NormSpec::Euclidean);
    let _ = rhs.global_norm_accurate(&NormSpec::Euclidean);
    let truncated = Truncator::new(1e-10).unwrap().truncate(&rhs, &NormSpec::Euclidean);
    let _ = truncated.add(&rhs).unwrap();
    let applied = apply_operator(&op, &truncated).unwrap();
    let _ = applied.global_norm(&NormSpec::Euclidean);
    let cfg = RankOneSolverConfig {
        residual_tol: 1e-4,
        max_rank: 4,
        spd_mode: true,
        ..Default::default()
    };
    let _ = greedy_solve(&op, &rhs, &NormSpec::Euclidean, &cfg).unwrap();

    let peak = LARGEST.load(Ordering::Relaxed);
    println!("largest single allocation: {peak} bytes (dense assembly would be {dense_bytes})");
    assert!(
        peak < dense_bytes / 2,
        "an allocation of {peak} bytes suggests a dense N x Q assembly"
    );
}
