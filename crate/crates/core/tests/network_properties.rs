use injectcheck_core::arrangement::affine_cell_bound;
use injectcheck_core::dense::{construct_minimal, Activation, DenseLayer};
use injectcheck_core::network::{
    build_cascade, certify_exact, certify_layerwise, collision_search, enumerate_regions,
    nearest_preimage, region_contains, CascadeSpec, ReluNetwork, TAU_NUM,
};
use injectcheck_core::numeric::{distance, sample_gaussian_matrix, sample_orthogonal};
use injectcheck_core::{Error, Matrix, Prng, Verdict};
use proptest::prelude::*;

fn random_layer(m: usize, n: usize, prng: &mut Prng) -> DenseLayer {
    let w = sample_gaussian_matrix(m, n, prng);
    let b = prng.normal_vec(m);
    DenseLayer::new(w, b, Activation::Relu).unwrap()
}

fn random_net(dims: &[usize], prng: &mut Prng) -> ReluNetwork {
    let layers = dims
        .windows(2)
        .map(|d| random_layer(d[1], d[0], prng))
        .collect();
    ReluNetwork::new(layers, None).unwrap()
}

/// Straight-line evaluation from the public layer fields.
fn evaluate(net: &ReluNetwork, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for layer in net.layers() {
        let mut next = Vec::with_capacity(layer.weight.rows());
        for (r, b) in layer.weight.row_iter().zip(&layer.bias) {
            let z: f64 = r.iter().zip(&h).map(|(a, v)| a * v).sum::<f64>() + b;
            next.push(match layer.activation {
                Activation::Relu => z.max(0.0),
                Activation::LeakyRelu(a) => {
                    if z >= 0.0 {
                        z
                    } else {
                        a * z
                    }
                }
                Activation::Identity => z,
            });
        }
        h = next;
    }
    if let Some(f) = net.final_linear() {
        h = f
            .row_iter()
            .map(|r| r.iter().zip(&h).map(|(a, v)| a * v).sum())
            .collect();
    }
    h
}

fn pm_layer(n: usize, prng: &mut Prng) -> DenseLayer {
    let b = sample_orthogonal(n, prng);
    DenseLayer::relu(construct_minimal(&b, &vec![1.0; n]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_matches_straight_line_evaluation(depth in 1usize..4, seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let mut dims = vec![1 + prng.below(3) as usize];
        for _ in 0..depth {
            dims.push(1 + prng.below(5) as usize);
        }
        let net = random_net(&dims, &mut prng);
        for _ in 0..20 {
            let x = prng.normal_vec(dims[0]);
            prop_assert!(distance(&net.forward(&x).unwrap(), &evaluate(&net, &x)) <= 1e-12);
        }
    }

    #[test]
    fn regions_carry_consistent_affine_maps(seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let net = random_net(&[2, 3, 3], &mut prng);
        let regions = enumerate_regions(&net, 100_000).unwrap();
        for region in &regions {
            prop_assert!(region_contains(region, &region.witness));
            let mut hits = 0;
            let mut radius = 1.0;
            for _ in 0..2000 {
                if hits == 100 {
                    break;
                }
                let x: Vec<f64> = region.witness.iter().map(|v| v + radius * prng.normal()).collect();
                if !region_contains(region, &x) {
                    radius *= 0.9;
                    continue;
                }
                hits += 1;
                let y = net.forward(&x).unwrap();
                prop_assert!(distance(&y, &region.eval(&x)) <= TAU_NUM * (1.0 + distance(&x, &[0.0; 2])));
            }
            prop_assert!(hits > 0);
        }
    }

    #[test]
    fn single_layer_region_count_is_bounded(m in 1usize..7, n in 1usize..4, seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let net = random_net(&[n, m], &mut prng);
        let regions = enumerate_regions(&net, 100_000).unwrap();
        prop_assert!(regions.len() as u128 <= affine_cell_bound(m, n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn layerwise_certificates_survive_exact_checking(seed in any::<u64>()) {
        let mut prng = Prng::new(seed, 0);
        let first = if prng.uniform() < 0.5 { pm_layer(2, &mut prng) } else { random_layer(5, 2, &mut prng) };
        let second = random_layer(9, first.output_dim(), &mut prng);
        let net = ReluNetwork::new(vec![first, second], None).unwrap();
        let exact = certify_exact(&net);
        if certify_layerwise(&net).verdict == Verdict::Injective {
            prop_assert_eq!(exact.verdict, Verdict::Injective);
        }
        if let Some(c) = exact.collision {
            prop_assert_eq!(exact.verdict, Verdict::NonInjective);
            let gap = distance(&net.forward(&c.x1).unwrap(), &net.forward(&c.x2).unwrap());
            prop_assert!(gap <= TAU_NUM);
            prop_assert!(c.input_distance > 0.0);
        }
    }
}

#[test]
fn collision_search_refutes_the_identity() {
    for n in 1..5 {
        let net = ReluNetwork::new(vec![DenseLayer::relu(Matrix::identity(n))], None).unwrap();
        let c = collision_search(&net, 500, &mut Prng::new(n as u64, 0), 1e-9).expect("collision");
        let gap = distance(&net.forward(&c.x1).unwrap(), &net.forward(&c.x2).unwrap());
        assert!(gap <= 1e-9 && c.input_distance >= 1e-6);
        assert_eq!(certify_exact(&net).verdict, Verdict::NonInjective);
    }
}

#[test]
fn nearest_neighbor_inversion_recovers_inputs() {
    let mut prng = Prng::new(8, 0);
    let first = pm_layer(2, &mut prng);
    let second = pm_layer(4, &mut prng);
    let net = ReluNetwork::new(vec![first, second], None).unwrap();
    assert_eq!(certify_exact(&net).verdict, Verdict::Injective);
    let h = 0.05;
    let steps = (2.0 / h) as i32;
    let grid: Vec<Vec<f64>> = (0..=steps)
        .flat_map(|i| (0..=steps).map(move |j| vec![-1.0 + i as f64 * h, -1.0 + j as f64 * h]))
        .collect();
    // Each layer scales distances by a factor in [1/sqrt(2), 1], so the
    // recovered point is within 2 * (h / sqrt(2)) of the input.
    for _ in 0..200 {
        let x = vec![prng.uniform_range(-1.0, 1.0), prng.uniform_range(-1.0, 1.0)];
        let y = net.forward(&x).unwrap();
        let g = nearest_preimage(&net, &grid, &y).unwrap();
        assert!(distance(g, &x) <= 2.0 * h, "{x:?} recovered as {g:?}");
    }
}

#[test]
fn cascade_examples() {
    let net = build_cascade(&CascadeSpec::new(vec![2, 8, 5]), &mut Prng::new(3, 0)).unwrap();
    assert_eq!(net.input_dim(), 2);
    assert_eq!(net.output_dim(), 5);
    assert_eq!(certify_exact(&net).verdict, Verdict::Injective);

    let plain = build_cascade(&CascadeSpec::new(vec![2, 4]), &mut Prng::new(3, 0)).unwrap();
    assert_eq!(certify_layerwise(&plain).verdict, Verdict::Injective);
    assert_eq!(certify_exact(&plain).verdict, Verdict::Injective);

    let thin = build_cascade(&CascadeSpec::new(vec![2, 8, 4]), &mut Prng::new(3, 0));
    assert!(matches!(thin, Err(Error::Dimension(_))));
}
