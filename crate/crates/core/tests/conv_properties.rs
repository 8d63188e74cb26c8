use injectcheck_core::conv::{
    check_conv, construct_pm_filters, conv_matrix, cross_check_full, padded_kernels, Boundary,
    ConvSpec, Kernel, MultiIndex,
};
use injectcheck_core::dense::construct_minimal;
use injectcheck_core::dss::certify_dss_all;
use injectcheck_core::numeric::{distance, sample_gaussian_matrix, sample_orthogonal};
use injectcheck_core::{Matrix, Prng, Verdict};
use proptest::prelude::*;

fn mi(v: &[usize]) -> MultiIndex {
    MultiIndex::new(v.to_vec()).unwrap()
}

fn random_kernel(shape: &[usize], prng: &mut Prng) -> Kernel {
    let size = shape.iter().product();
    Kernel::new(mi(shape), prng.normal_vec(size)).unwrap()
}

/// Direct evaluation of `y_k[j] = sum_t c_k[t] x[j + O - 1 - t]` for
/// one-dimensional signals.
fn direct_conv_1d(kernels: &[Kernel], n: usize, boundary: Boundary, x: &[f64]) -> Vec<f64> {
    let mut y = Vec::new();
    for k in kernels {
        let o = k.values.len();
        for j in 0..n {
            let mut acc = 0.0;
            for (t, c) in k.values.iter().enumerate() {
                let p = j + o - 1 - t;
                let v = match boundary {
                    _ if p < n => x[p],
                    Boundary::Periodic => x[p % n],
                    Boundary::ZeroPadded => 0.0,
                };
                acc += c * v;
            }
            y.push(acc);
        }
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matrix_matches_direct_evaluation(
        o in 1usize..4, extra in 0usize..4, kernels in 1usize..4, periodic in any::<bool>(), seed in any::<u64>()
    ) {
        let mut prng = Prng::new(seed, 0);
        let n = o + extra;
        let bank: Vec<Kernel> = (0..kernels).map(|_| random_kernel(&[o], &mut prng)).collect();
        let boundary = if periodic { Boundary::Periodic } else { Boundary::ZeroPadded };
        let spec = ConvSpec::new(bank.clone(), mi(&[n]), boundary).unwrap();
        let m = conv_matrix(&spec).unwrap();
        let x = prng.normal_vec(n);
        let y = m.mul_vec(&x).unwrap();
        prop_assert!(distance(&y, &direct_conv_1d(&bank, n, boundary, &x)) <= 1e-12);
    }

    #[test]
    fn padded_cardinality(o in proptest::collection::vec(1usize..4, 1..4), slack in proptest::collection::vec(0usize..3, 3), seed in any::<u64>()) {
        let p: Vec<usize> = o.iter().zip(&slack).map(|(a, s)| a + s).collect();
        let k = random_kernel(&o, &mut Prng::new(seed, 0));
        let placements = padded_kernels(&k, &mi(&p));
        let expected: usize = o.iter().zip(&p).map(|(a, b)| b - a + 1).product();
        prop_assert_eq!(placements.len(), expected);
        for v in &placements {
            prop_assert_eq!(v.len(), p.iter().product::<usize>());
            let mut a: Vec<f64> = v.iter().copied().filter(|x| *x != 0.0).collect();
            let mut b: Vec<f64> = k.values.iter().copied().filter(|x| *x != 0.0).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn padded_certificates_hold_on_full_layers(o in 1usize..3, base in 2usize..4, seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let bank: Vec<Kernel> = (0..base).map(|_| random_kernel(&[o], &mut prng)).collect();
        let scales: Vec<f64> = (0..base).map(|_| prng.uniform_range(0.5, 2.0)).collect();
        let filters = construct_pm_filters(&bank, &scales).unwrap();
        let p = mi(&[o + 1]);
        if check_conv(&filters, &p).unwrap().verdict == Verdict::Injective {
            for n in (o + 1)..(o + 4) {
                for boundary in [Boundary::ZeroPadded, Boundary::Periodic] {
                    let spec = ConvSpec::new(filters.clone(), mi(&[n]), boundary).unwrap();
                    let v = cross_check_full(&spec).unwrap().verdict;
                    prop_assert_eq!(v, Verdict::Injective, "n={} {:?}", n, boundary);
                }
            }
        }
    }

    #[test]
    fn multichannel_flattening(o in 1usize..4, extra in 0usize..3, channels in 1usize..4, seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let n = o + extra;
        let kernel = random_kernel(&[o, channels], &mut prng);
        let big = conv_matrix(&ConvSpec::new(vec![kernel.clone()], mi(&[n, channels]), Boundary::ZeroPadded).unwrap()).unwrap();
        // Per-channel 1-D kernels; the last axis is flipped as well.
        let per_channel: Vec<Matrix> = (0..channels)
            .map(|ch| {
                let slice: Vec<f64> = (0..o).map(|i| kernel.values[i * channels + (channels - 1 - ch)]).collect();
                conv_matrix(&ConvSpec::new(vec![Kernel::from_slice(&slice).unwrap()], mi(&[n]), Boundary::ZeroPadded).unwrap()).unwrap()
            })
            .collect();
        let x = prng.normal_vec(n * channels);
        let y = big.mul_vec(&x).unwrap();
        for j in 0..n {
            let mut expected = 0.0;
            for (ch, c) in per_channel.iter().enumerate() {
                let xc: Vec<f64> = (0..n).map(|i| x[i * channels + ch]).collect();
                expected += c.mul_vec(&xc).unwrap()[j];
            }
            prop_assert!((y[j * channels] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn block_diagonal_composition(n1 in 1usize..3, n2 in 1usize..3, seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let mut block = |n: usize| {
            let b = sample_orthogonal(n, &mut prng);
            let d: Vec<f64> = (0..n).map(|_| prng.uniform_range(0.5, 2.0)).collect();
            let extra = sample_gaussian_matrix(1, n, &mut prng);
            Matrix::vstack(&[&construct_minimal(&b, &d).unwrap(), &extra]).unwrap()
        };
        let (w1, w2) = (block(n1), block(n2));
        prop_assert_eq!(certify_dss_all(&w1).verdict, Verdict::Injective);
        prop_assert_eq!(certify_dss_all(&w2).verdict, Verdict::Injective);
        let n = n1 + n2;
        let mut rows = Vec::new();
        for r in w1.row_iter() {
            let mut v = r.to_vec();
            v.resize(n, 0.0);
            rows.push(v);
        }
        for r in w2.row_iter() {
            let mut v = vec![0.0; n1];
            v.extend_from_slice(r);
            rows.push(v);
        }
        let stacked = Matrix::from_rows(&rows).unwrap();
        prop_assert_eq!(certify_dss_all(&stacked).verdict, Verdict::Injective);
    }
}

#[test]
fn full_conv_examples() {
    let appendix: Vec<Kernel> = {
        let base = [
            [3.0, -1.0, -1.0, -1.0],
            [-1.0, 3.0, -1.0, -1.0],
            [-1.0, -1.0, 3.0, -1.0],
            [-1.0, -1.0, -1.0, 3.0],
        ];
        let pos: Vec<Kernel> = base
            .iter()
            .map(|v| Kernel::new(mi(&[2, 2]), v.to_vec()).unwrap())
            .collect();
        let neg: Vec<Kernel> = pos.iter().map(|k| k.scaled(-1.0)).collect();
        pos.into_iter().chain(neg).collect()
    };
    let spec = ConvSpec::new(appendix, mi(&[3, 3]), Boundary::ZeroPadded).unwrap();
    assert_eq!(cross_check_full(&spec).unwrap().verdict, Verdict::Injective);

    let delta = vec![Kernel::from_slice(&[1.0]).unwrap()];
    let spec = ConvSpec::new(delta, mi(&[2]), Boundary::ZeroPadded).unwrap();
    assert_eq!(
        cross_check_full(&spec).unwrap().verdict,
        Verdict::NonInjective
    );

    let width3 = [
        [1.0, 0.0, -1.0],
        [1.0, 0.0, 1.0],
        [-1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
    ]
    .iter()
    .map(|v| Kernel::from_slice(v).unwrap())
    .collect();
    let spec = ConvSpec::new(width3, mi(&[5]), Boundary::ZeroPadded).unwrap();
    assert_eq!(cross_check_full(&spec).unwrap().verdict, Verdict::Injective);
}
