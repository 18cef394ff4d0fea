//! Property tests for the factored family contracts: factored evaluation
//! agrees with dense assembly, the Gram-based global norm with the
//! brute-force Frobenius norm, and truncation with its error bound.

use nalgebra::DMatrix;
use proptest::prelude::*;

use parlor::family::LowRankVectorFamily;
use parlor::norm::NormSpec;
use parlor::truncate::Truncator;

#[derive(Debug, Clone)]
struct FamilyCase {
    n: usize,
    q: usize,
    spatial: Vec<f64>,
    coeff: Vec<f64>,
}

fn family_strategy(max_n: usize, max_q: usize, max_r: usize) -> impl Strategy<Value = FamilyCase> {
    (1..=max_n, 1..=max_q, 0..=max_r).prop_flat_map(|(n, q, r)| {
        let spatial = prop::collection::vec(-1.0f64..1.0, n * r);
        let coeff = prop::collection::vec(-1.0f64..1.0, r * q);
        (Just(n), Just(q), spatial, coeff)
            .prop_map(|(n, q, spatial, coeff)| FamilyCase { n, q, spatial, coeff })
    })
}

fn build(case: &FamilyCase) -> LowRankVectorFamily {
    let r = if case.n == 0 { 0 } else { case.spatial.len() / case.n };
    let spatial = DMatrix::from_column_slice(case.n, r, &case.spatial);
    let coeff = DMatrix::from_row_slice(r, case.q, &case.coeff);
    LowRankVectorFamily::new(spatial, coeff).unwrap()
}

/// Explicit triple-loop assembly, independent of the factored paths.
fn assemble(case: &FamilyCase) -> DMatrix<f64> {
    let r = if case.n == 0 { 0 } else { case.spatial.len() / case.n };
    let mut out = DMatrix::zeros(case.n, case.q);
    for col in 0..case.q {
        for row in 0..case.n {
            let mut acc = 0.0;
            for k in 0..r {
                acc += case.spatial[k * case.n + row] * case.coeff[k * case.q + col];
            }
            out[(row, col)] = acc;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factored_evaluation_matches_dense_assembly(case in family_strategy(50, 50, 10)) {
        let fam = build(&case);
        let dense = assemble(&case);
        let scale = dense.amax().max(1.0);
        for q in 0..case.q {
            let col = fam.evaluate(q).unwrap();
            for i in 0..case.n {
                prop_assert!(
                    (col[i] - dense[(i, q)]).abs() <= 1e-13 * scale,
                    "entry ({i}, {q}): {} vs {}", col[i], dense[(i, q)]
                );
            }
        }
    }

    #[test]
    fn global_norm_matches_brute_force(case in family_strategy(50, 50, 10)) {
        let fam = build(&case);
        let dense = assemble(&case);
        let frob = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        let got = fam.global_norm(&NormSpec::Euclidean);
        prop_assert!(
            (got - frob).abs() <= 1e-12 * frob.max(1e-30),
            "{got} vs {frob}"
        );
        let accurate = fam.global_norm_accurate(&NormSpec::Euclidean);
        prop_assert!((accurate - frob).abs() <= 1e-12 * frob.max(1e-30));
    }

    #[test]
    fn truncation_respects_the_energy_bound(
        case in family_strategy(30, 30, 8),
        eps_exp in 1..12i32,
    ) {
        let fam = build(&case);
        let eps = 10f64.powi(-eps_exp);
        let out = Truncator::new(eps).unwrap().truncate(&fam, &NormSpec::Euclidean);
        let norm = fam.global_norm(&NormSpec::Euclidean);
        let mut err = 0.0;
        for q in 0..case.q {
            err += (out.evaluate(q).unwrap() - fam.evaluate(q).unwrap()).norm_squared();
        }
        prop_assert!(
            err.sqrt() <= eps * norm + 1e-12 * norm.max(1e-30),
            "error {} vs bound {}", err.sqrt(), eps * norm
        );
        prop_assert!(out.rank() <= fam.rank());
    }

    #[test]
    fn addition_is_pointwise(
        a in family_strategy(20, 20, 5),
        b_spatial in prop::collection::vec(-1.0f64..1.0, 20 * 3),
        b_coeff in prop::collection::vec(-1.0f64..1.0, 3 * 20),
    ) {
        let fam_a = build(&a);
        let b = FamilyCase { n: a.n, q: a.q, spatial: b_spatial[..a.n * 3].to_vec(), coeff: {
            let mut c = Vec::with_capacity(3 * a.q);
            for row in 0..3 {
                c.extend_from_slice(&b_coeff[row * 20..row * 20 + a.q]);
            }
            c
        }};
        let fam_b = build(&b);
        let sum = fam_a.add(&fam_b).unwrap();
        for q in 0..a.q {
            let expect = fam_a.evaluate(q).unwrap() + fam_b.evaluate(q).unwrap();
            prop_assert!((sum.evaluate(q).unwrap() - expect).amax() <= 1e-13);
        }
    }
}
