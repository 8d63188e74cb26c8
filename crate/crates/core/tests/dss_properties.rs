use injectcheck_core::dss::{
    active_rows, certify_dss_all, certify_dss_orthant, enumerate_wedges, falsify_random,
    has_dss_at, TAU_COLLIDE,
};
use injectcheck_core::numeric::{dot, rank, sample_gaussian_matrix};
use injectcheck_core::{Matrix, Prng, Verdict};
use proptest::prelude::*;

fn relu_image(w: &Matrix, x: &[f64]) -> Vec<f64> {
    w.row_iter().map(|r| dot(r, x).max(0.0)).collect()
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn gaussian(m: usize, n: usize, seed: u64) -> Matrix {
    sample_gaussian_matrix(m, n, &mut Prng::new(seed, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_witnesses_realize_their_patterns(m in 1usize..8, n in 1usize..4, seed in any::<u64>()) {
        let w = gaussian(m, n, seed);
        for cell in enumerate_wedges(&w).unwrap() {
            for (j, s) in cell.sign_pattern.iter().enumerate() {
                let p = dot(w.row(j), &cell.witness);
                prop_assert!(f64::from(*s) * p > 0.0);
            }
            prop_assert_eq!(active_rows(&w, &cell.witness).unwrap(), cell.active_set.clone());
        }
    }

    #[test]
    fn verdicts_match_brute_force_sampling(m in 1usize..9, n in 2usize..4, seed in any::<u64>()) {
        let w = gaussian(m, n, seed);
        let cert = certify_dss_all(&w);
        let found = falsify_random(&w, 4000, &mut Prng::new(seed, 1));
        if found.is_some() {
            prop_assert_eq!(cert.verdict, Verdict::NonInjective);
        }
        match cert.verdict {
            Verdict::NonInjective => {
                let c = cert.collision.unwrap();
                prop_assert!(gap(&relu_image(&w, &c.x1), &relu_image(&w, &c.x2)) <= TAU_COLLIDE);
                prop_assert!(c.input_distance >= 1e-6);
                let x = cert.failing_witness.unwrap();
                prop_assert!(!has_dss_at(&w, &x).unwrap());
            }
            Verdict::Injective => prop_assert!(m >= 2 * n),
            Verdict::Inconclusive => prop_assert!(false, "small instance left undecided"),
        }
    }

    #[test]
    fn injective_everywhere_implies_injective_on_orthant(n in 1usize..4, extra in 0usize..4, seed in any::<u64>()) {
        let b = gaussian(n, n, seed);
        let w = Matrix::vstack(&[&b, &b.scaled(-1.0).unwrap(), &gaussian(extra.max(1), n, seed ^ 1)]).unwrap();
        prop_assert_eq!(certify_dss_all(&w).verdict, Verdict::Injective);
        prop_assert_eq!(certify_dss_orthant(&w).verdict, Verdict::Injective);
    }

    #[test]
    fn orthant_collisions_stay_nonnegative(m in 1usize..6, n in 1usize..4, seed in any::<u64>()) {
        let w = gaussian(m, n, seed);
        let cert = certify_dss_orthant(&w);
        if let Some(c) = cert.collision {
            prop_assert!(c.x1.iter().chain(&c.x2).all(|v| *v >= 0.0));
            prop_assert!(gap(&relu_image(&w, &c.x1), &relu_image(&w, &c.x2)) <= TAU_COLLIDE);
        }
    }
}

#[test]
fn rank_deficient_layers_collide_at_the_origin() {
    let w = Matrix::from_rows(&[
        [1.0, 2.0, 3.0],
        [2.0, 4.0, 6.0],
        [-1.0, -2.0, -3.0],
        [0.0, 0.0, 0.0],
    ])
    .unwrap();
    assert!(rank(&w, 1e-9) < 3);
    let cert = certify_dss_all(&w);
    assert_eq!(cert.verdict, Verdict::NonInjective);
    let c = cert.collision.unwrap();
    assert!(gap(&relu_image(&w, &c.x1), &relu_image(&w, &c.x2)) <= TAU_COLLIDE);
}

#[test]
fn fig2_left_class_is_not_injective() {
    let rows: Vec<Vec<f64>> = [0.0f64, 100.0, 200.0, 300.0]
        .iter()
        .map(|deg| {
            let a = deg.to_radians();
            vec![a.cos(), a.sin()]
        })
        .collect();
    let w = Matrix::from_rows(&rows).unwrap();
    let cert = certify_dss_all(&w);
    assert_eq!(cert.verdict, Verdict::NonInjective);
    assert_eq!(cert.wedge_count, 8);
}
