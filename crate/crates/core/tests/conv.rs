mod common;

use common::{max_abs_diff, naive_conv, rng, uniform};
use oocs_core::error::Error;
use oocs_core::tensor::{
    conv3d_backward, conv3d_forward, pad_zero, ConvWeights, FeatureMap, Padding,
};
use oocs_core::volume::Volume;
use proptest::prelude::*;
use rand::Rng;

fn random_case(seed: u64) -> (FeatureMap, ConvWeights, Padding) {
    let mut r = rng(seed);
    let k = [1, 3, 5][r.random_range(0..3)];
    let dims: [usize; 3] = std::array::from_fn(|_| r.random_range(k.max(1)..=8));
    let c_in = r.random_range(1..=4);
    let c_out = r.random_range(1..=4);
    let padding = if r.random_bool(0.5) { Padding::SameZero } else { Padding::Valid };
    let x = FeatureMap::new(uniform(&mut r, c_in * dims.iter().product::<usize>()), [c_in, dims[0], dims[1], dims[2]]).unwrap();
    let bias = r.random_bool(0.5).then(|| uniform(&mut r, c_out));
    let w = ConvWeights::new(uniform(&mut r, c_out * c_in * k * k * k), [c_out, c_in, k, k, k], bias).unwrap();
    (x, w, padding)
}

#[test]
fn forward_matches_naive_oracle() {
    for seed in 0..100 {
        let (x, w, padding) = random_case(seed);
        let got = conv3d_forward(&x, &w, padding).unwrap();
        let want = naive_conv(&x, &w, padding);
        assert_eq!(got.shape(), want.shape(), "seed {seed}");
        assert!(max_abs_diff(got.data(), want.data()) < 1e-9, "seed {seed}");
    }
}

#[test]
fn documented_example_shape() {
    let mut r = rng(11);
    let x = FeatureMap::new(uniform(&mut r, 2 * 5 * 6 * 7), [2, 5, 6, 7]).unwrap();
    let w = ConvWeights::new(uniform(&mut r, 3 * 2 * 27), [3, 2, 3, 3, 3], None).unwrap();
    for padding in [Padding::SameZero, Padding::Valid] {
        let got = conv3d_forward(&x, &w, padding).unwrap();
        assert!(max_abs_diff(got.data(), naive_conv(&x, &w, padding).data()) < 1e-9);
    }
    assert_eq!(conv3d_forward(&x, &w, Padding::Valid).unwrap().shape(), [3, 3, 4, 5]);
}

#[test]
fn identity_kernel() {
    let mut r = rng(1);
    let x = FeatureMap::new(uniform(&mut r, 4 * 5 * 6), [1, 4, 5, 6]).unwrap();
    let w = ConvWeights::new(vec![1.0], [1, 1, 1, 1, 1], None).unwrap();
    assert_eq!(conv3d_forward(&x, &w, Padding::SameZero).unwrap(), x);
    assert_eq!(conv3d_forward(&x, &w, Padding::Valid).unwrap(), x);
}

#[test]
fn zero_sum_kernel_annihilates_constants() {
    let x = FeatureMap::new(vec![2.5; 6 * 6 * 6], [1, 6, 6, 6]).unwrap();
    let mut data = vec![-1.0 / 26.0; 27];
    data[13] = 1.0;
    let w = ConvWeights::new(data, [1, 1, 3, 3, 3], None).unwrap();
    let y = conv3d_forward(&x, &w, Padding::Valid).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn shape_errors() {
    let x = FeatureMap::zeros([2, 4, 4, 4]).unwrap();
    let w = ConvWeights::zeros(1, 3, 3, false).unwrap();
    assert!(matches!(conv3d_forward(&x, &w, Padding::SameZero), Err(Error::Dimension(_))));
    let w = ConvWeights::zeros(1, 2, 5, false).unwrap();
    assert!(matches!(conv3d_forward(&x, &w, Padding::Valid), Err(Error::Dimension(_))));
    assert!(matches!(ConvWeights::new(vec![0.0; 8], [1, 1, 2, 2, 2], None), Err(Error::InvalidKernel(_))));
    let w = ConvWeights::zeros(1, 2, 3, false).unwrap();
    let bad_grad = FeatureMap::zeros([2, 4, 4, 4]).unwrap();
    assert!(matches!(conv3d_backward(&x, &w, &bad_grad, Padding::SameZero), Err(Error::Dimension(_))));
}

#[test]
fn linearity_and_negation() {
    for seed in 0..20 {
        let (x, mut w, padding) = random_case(seed);
        if let Some(b) = w.bias_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut r = rng(seed + 1000);
        let y = FeatureMap::new(uniform(&mut r, x.len()), x.shape()).unwrap();
        let (a, b) = (1.7, -0.3);
        let mix = FeatureMap::new(
            x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
            x.shape(),
        )
        .unwrap();
        let lhs = conv3d_forward(&mix, &w, padding).unwrap();
        let cx = conv3d_forward(&x, &w, padding).unwrap();
        let cy = conv3d_forward(&y, &w, padding).unwrap();
        let rhs: Vec<f64> = cx.data().iter().zip(cy.data()).map(|(p, q)| a * p + b * q).collect();
        assert!(max_abs_diff(lhs.data(), &rhs) < 1e-9);

        let neg = conv3d_forward(&x, &w.negated(), padding).unwrap();
        for (p, q) in neg.data().iter().zip(cx.data()) {
            assert_eq!(*p, -*q);
        }
    }
}

#[test]
fn bit_identical_across_thread_counts() {
    let (x, w, padding) = random_case(42);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let y = conv3d_forward(&x, &w, padding).unwrap();
            let g = FeatureMap::new(vec![0.5; y.len()], y.shape()).unwrap();
            let grads = conv3d_backward(&x, &w, &g, padding).unwrap();
            (y, grads.input, grads.weights)
        })
    };
    let one = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t), one);
    }
}

#[test]
fn zero_upstream_gradient() {
    let (x, w, padding) = random_case(5);
    let y = conv3d_forward(&x, &w, padding).unwrap();
    let g = FeatureMap::zeros(y.shape()).unwrap();
    let grads = conv3d_backward(&x, &w, &g, padding).unwrap();
    assert!(grads.input.data().iter().all(|&v| v == 0.0));
    assert!(grads.weights.data().iter().all(|&v| v == 0.0));
}

#[test]
fn scalar_chain_rule() {
    let x = FeatureMap::new(vec![1.5], [1, 1, 1, 1]).unwrap();
    let w = ConvWeights::new(vec![-2.0], [1, 1, 1, 1, 1], None).unwrap();
    let g = FeatureMap::new(vec![0.25], [1, 1, 1, 1]).unwrap();
    let grads = conv3d_backward(&x, &w, &g, Padding::SameZero).unwrap();
    assert_eq!(grads.weights.data(), &[1.5 * 0.25]);
    assert_eq!(grads.input.data(), &[-2.0 * 0.25]);
}

#[test]
fn backward_is_adjoint_of_forward() {
    // <conv(x), g> == <x, conv^T(g)> for the input gradient
    for seed in 0..20 {
        let (x, mut w, padding) = random_case(seed);
        if let Some(b) = w.bias_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let y = conv3d_forward(&x, &w, padding).unwrap();
        let mut r = rng(seed + 77);
        let g = FeatureMap::new(uniform(&mut r, y.len()), y.shape()).unwrap();
        let grads = conv3d_backward(&x, &w, &g, padding).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(grads.input.data()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = w.data().iter().zip(grads.weights.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "seed {seed}");
        assert!((lhs - rhs_w).abs() < 1e-9 * (1.0 + lhs.abs()), "seed {seed}");
    }
}

#[test]
fn pad_zero_examples() {
    let v = Volume::filled([1, 1, 1], [1.0; 3], 5.0).unwrap();
    let p = pad_zero(&v, [1, 1, 1]);
    assert_eq!(p.shape(), [3, 3, 3]);
    assert_eq!(p.get(1, 1, 1), 5.0);
    assert_eq!(p.sum(), 5.0);
    assert_eq!(p.data().iter().filter(|&&x| x == 0.0).count(), 26);
    assert_eq!(pad_zero(&v, [0, 0, 0]), v);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pad_preserves_sum_and_zero_border(
        d in 1usize..4, h in 1usize..4, w in 1usize..4,
        m in proptest::array::uniform3(0usize..3),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let fm = FeatureMap::new(uniform(&mut r, 2 * d * h * w), [2, d, h, w]).unwrap();
        let p = pad_zero(&fm, m);
        prop_assert_eq!(p.shape(), [2, d + 2 * m[0], h + 2 * m[1], w + 2 * m[2]]);
        let s_in: f64 = fm.data().iter().sum();
        let s_out: f64 = p.data().iter().sum();
        prop_assert!((s_in - s_out).abs() < 1e-12);
        let [_, pd, ph, pw] = p.shape();
        for c in 0..2 {
            for z in 0..pd {
                for y in 0..ph {
                    for x in 0..pw {
                        let inside = z >= m[0] && z < m[0] + d && y >= m[1] && y < m[1] + h && x >= m[2] && x < m[2] + w;
                        if !inside {
                            prop_assert_eq!(p.data()[p.index(c, z, y, x)], 0.0);
                        } else {
                            prop_assert_eq!(p.data()[p.index(c, z, y, x)], fm.data()[fm.index(c, z - m[0], y - m[1], x - m[2])]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn optimized_equals_naive(seed in 1000u64..u64::MAX) {
        let (x, w, padding) = random_case(seed);
        let got = conv3d_forward(&x, &w, padding).unwrap();
        prop_assert!(max_abs_diff(got.data(), naive_conv(&x, &w, padding).data()) < 1e-9);
    }
}
