mod common;

use common::{brute_dice, brute_hausdorff, random_mask, rng};
use oocs_core::error::Error;
use oocs_core::metrics::{dice, directed_hausdorff_mm, hausdorff_mm, BinaryMask};
use proptest::prelude::*;
use rand::Rng;

fn mask(shape: [usize; 3], spacing: [f64; 3], pts: &[[usize; 3]]) -> BinaryMask {
    BinaryMask::from_fn(shape, spacing, |z, y, x| pts.contains(&[z, y, x])).unwrap()
}

#[test]
fn dice_examples() {
    let s = [1.0; 3];
    let a = mask([1, 1, 8], s, &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 0, 3]]);
    let b = mask([1, 1, 8], s, &[[0, 0, 1], [0, 0, 2], [0, 0, 3], [0, 0, 4], [0, 0, 5], [0, 0, 6]]);
    assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-15);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    let c = mask([1, 1, 8], s, &[[0, 0, 7]]);
    assert_eq!(dice(&a, &c).unwrap(), 0.0);
    let e = BinaryMask::empty([2, 2, 2], s).unwrap();
    assert_eq!(dice(&e, &e).unwrap(), 1.0);
}

#[test]
fn hausdorff_examples() {
    let s = [0.6; 3];
    let a = mask([1, 1, 4], s, &[[0, 0, 0]]);
    let b = mask([1, 1, 4], s, &[[0, 0, 3]]);
    assert!((hausdorff_mm(&a, &b).unwrap() - 1.8).abs() < 1e-12);
    assert_eq!(hausdorff_mm(&a, &a).unwrap(), 0.0);
}

#[test]
fn anisotropic_spacing_is_used() {
    let s = [2.5, 0.5, 0.25];
    let a = mask([3, 3, 3], s, &[[0, 0, 0]]);
    let b = mask([3, 3, 3], s, &[[2, 1, 2]]);
    let want = ((2.0f64 * 2.5).powi(2) + 0.25 + 0.25).sqrt();
    assert!((hausdorff_mm(&a, &b).unwrap() - want).abs() < 1e-12);
}

#[test]
fn errors() {
    let s = [1.0; 3];
    let a = mask([2, 2, 2], s, &[[0, 0, 0]]);
    let e = BinaryMask::empty([2, 2, 2], s).unwrap();
    assert!(matches!(hausdorff_mm(&a, &e), Err(Error::UndefinedDistance(_))));
    assert!(matches!(hausdorff_mm(&e, &a), Err(Error::UndefinedDistance(_))));
    let other_shape = mask([2, 2, 3], s, &[[0, 0, 0]]);
    assert!(matches!(dice(&a, &other_shape), Err(Error::Dimension(_))));
    let other_spacing = mask([2, 2, 2], [1.0, 1.0, 2.0], &[[0, 0, 0]]);
    assert!(matches!(hausdorff_mm(&a, &other_spacing), Err(Error::Dimension(_))));
}

#[test]
fn match_brute_force_oracles() {
    for seed in 0..200u64 {
        let mut r = rng(seed);
        let shape: [usize; 3] = std::array::from_fn(|_| r.random_range(1..=6));
        let spacing: [f64; 3] = std::array::from_fn(|_| r.random_range(0.3..3.0));
        let pa = r.random_range(0.02..0.9);
        let pb = r.random_range(0.02..0.9);
        let a = random_mask(&mut r, shape, spacing, pa);
        let b = random_mask(&mut r, shape, spacing, pb);
        assert_eq!(dice(&a, &b).unwrap(), brute_dice(&a, &b), "seed {seed}");
        if a.count() > 0 && b.count() > 0 {
            let got = hausdorff_mm(&a, &b).unwrap();
            assert_eq!(got.to_bits(), brute_hausdorff(&a, &b).to_bits(), "seed {seed}");
            assert_eq!(got, hausdorff_mm(&b, &a).unwrap());
        }
    }
}

#[test]
fn sparse_far_apart_sets() {
    // large empty interiors exercise the boundary-only candidate list
    let s = [0.7, 1.1, 0.9];
    let a = BinaryMask::from_fn([12, 12, 12], s, |z, y, x| z < 6 && y < 8 && x > 2).unwrap();
    let b = BinaryMask::from_fn([12, 12, 12], s, |z, y, x| (z as i64 - 8).pow(2) + (y as i64 - 3).pow(2) + (x as i64 - 9).pow(2) < 9).unwrap();
    let got = hausdorff_mm(&a, &b).unwrap();
    assert_eq!(got.to_bits(), brute_hausdorff(&a, &b).to_bits());
    assert!(directed_hausdorff_mm(&a, &b).unwrap() <= got);
}

fn shifted(m: &BinaryMask, d: [usize; 3], shape: [usize; 3]) -> BinaryMask {
    BinaryMask::from_fn(shape, m.spacing(), |z, y, x| {
        z >= d[0] && y >= d[1] && x >= d[2] && {
            let (z, y, x) = (z - d[0], y - d[1], x - d[2]);
            let s = m.shape();
            z < s[0] && y < s[1] && x < s[2] && m.get(z, y, x)
        }
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn symmetric_and_reflexive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_mask(&mut r, [4, 5, 3], [0.6, 0.8, 1.0], 0.4);
        let b = random_mask(&mut r, [4, 5, 3], [0.6, 0.8, 1.0], 0.4);
        prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        if a.count() > 0 {
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            prop_assert_eq!(hausdorff_mm(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn translation_invariant(seed in any::<u64>(), dz in 0usize..3, dy in 0usize..3, dx in 0usize..3) {
        let mut r = rng(seed);
        let a = random_mask(&mut r, [4, 4, 4], [0.6, 0.9, 1.3], 0.3);
        let b = random_mask(&mut r, [4, 4, 4], [0.6, 0.9, 1.3], 0.3);
        prop_assume!(a.count() > 0 && b.count() > 0);
        let big = [7, 7, 7];
        let h0 = hausdorff_mm(&shifted(&a, [0, 0, 0], big), &shifted(&b, [0, 0, 0], big)).unwrap();
        let h1 = hausdorff_mm(&shifted(&a, [dz, dy, dx], big), &shifted(&b, [dz, dy, dx], big)).unwrap();
        prop_assert_eq!(h0, h1);
    }
}
