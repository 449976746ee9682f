mod common;

use common::{max_abs_diff, rng, uniform};
use oocs_core::error::Error;
use oocs_core::interp::{Affine, Interpolation};
use oocs_core::metrics::{dice, BinaryMask};
use oocs_core::preprocess::{
    apply_geometric, augment, crop_or_pad, crop_or_pad_mask, draw_augmentation, resample,
    resample_mask, resampled_shape, zscore, AugmentOp, GeometricTransform, ResampleSpec,
};
use oocs_core::volume::Volume;
use proptest::prelude::*;

fn random_volume(seed: u64, shape: [usize; 3], spacing: [f64; 3]) -> Volume {
    let mut r = rng(seed);
    Volume::new(uniform(&mut r, shape.iter().product()), shape, spacing).unwrap()
}

fn trilinear(spacing: [f64; 3]) -> ResampleSpec {
    ResampleSpec::new(spacing, Interpolation::Trilinear).unwrap()
}

#[test]
fn resample_identity_at_equal_spacing() {
    let v = random_volume(1, [5, 6, 7], [0.6, 0.6, 0.6]);
    let out = resample(&v, &ResampleSpec::default()).unwrap();
    assert_eq!(out.shape(), v.shape());
    assert!(max_abs_diff(out.data(), v.data()) <= 1e-12);
    let aniso = random_volume(2, [4, 5, 6], [2.5, 0.7, 0.7]);
    let out = resample(&aniso, &trilinear([2.5, 0.7, 0.7])).unwrap();
    assert!(max_abs_diff(out.data(), aniso.data()) <= 1e-12);
}

#[test]
fn resample_constant_stays_constant() {
    let v = Volume::filled([7, 5, 9], [1.3, 0.9, 0.5], 42.0).unwrap();
    for mode in [Interpolation::Trilinear, Interpolation::Nearest] {
        let out = resample(&v, &ResampleSpec::new([0.6; 3], mode).unwrap()).unwrap();
        assert!(out.data().iter().all(|x| (x - 42.0).abs() < 1e-12));
        assert_eq!(out.spacing(), [0.6; 3]);
    }
}

#[test]
fn downsampled_ramp_is_exact_in_interior() {
    let ramp = |z: f64, y: f64, x: f64| 0.3 * z - 1.7 * y + 2.1 * x + 5.0;
    let v = Volume::from_fn([12, 10, 14], [1.0; 3], |z, y, x| ramp(z as f64, y as f64, x as f64)).unwrap();
    let out = resample(&v, &trilinear([2.0; 3])).unwrap();
    assert_eq!(out.shape(), [6, 5, 7]);
    let [d, h, w] = out.shape();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let src = |j: usize| 2.0 * j as f64 + 0.5;
                let want = ramp(src(z), src(y), src(x));
                assert!((out.get(z, y, x) - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn resample_round_trip_on_smooth_phantom() {
    let v = Volume::from_fn([20, 18, 22], [1.0, 1.2, 0.9], |z, y, x| {
        let (z, y, x) = (z as f64 * 1.0 - 10.0, y as f64 * 1.2 - 10.8, x as f64 * 0.9 - 9.9);
        100.0 * (-(z * z + y * y + x * x) / (2.0 * 25.0)).exp() + 20.0
    })
    .unwrap();
    let fine = resample(&v, &ResampleSpec::default()).unwrap();
    let back = resample(&fine, &trilinear(v.spacing())).unwrap();
    assert_eq!(back.shape(), v.shape());
    let err: f64 = back.data().iter().zip(v.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = v.data().iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(err / norm < 0.02, "relative L2 error {}", err / norm);
}

#[test]
fn resample_shape_rule_and_errors() {
    assert_eq!(resampled_shape([10, 10, 10], [0.9; 3], [0.6; 3]).unwrap(), [15, 15, 15]);
    assert_eq!(resampled_shape([3, 3, 3], [1.0; 3], [2.0; 3]).unwrap(), [2, 2, 2]);
    let v = Volume::zeros([1, 4, 4], [0.1, 1.0, 1.0]).unwrap();
    assert!(matches!(resample(&v, &trilinear([1.0; 3])), Err(Error::Resample(_))));
    assert!(ResampleSpec::new([0.0, 1.0, 1.0], Interpolation::Nearest).is_err());
}

#[test]
fn resample_mask_uses_nearest() {
    let m = BinaryMask::from_fn([6, 6, 6], [1.2; 3], |z, y, x| z < 3 && y > 1 && x % 2 == 0).unwrap();
    let out = resample_mask(&m, [0.6; 3]).unwrap();
    assert_eq!(out.shape(), [12, 12, 12]);
    for z in 0..12 {
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(out.get(z, y, x), m.get(z / 2, y / 2, x / 2));
            }
        }
    }
}

#[test]
fn zscore_moments_and_invariance() {
    for seed in 0..10 {
        let v = random_volume(seed, [6, 7, 8], [1.0; 3]);
        let z = zscore(&v).unwrap();
        assert!(z.mean().abs() < 1e-9);
        assert!((z.variance().sqrt() - 1.0).abs() < 1e-9);
        let again = zscore(&z).unwrap();
        assert!(max_abs_diff(again.data(), z.data()) < 1e-9);
        let affine = v.with_data(v.data().iter().map(|x| 3.7 * x - 12.0).collect()).unwrap();
        assert!(max_abs_diff(zscore(&affine).unwrap().data(), z.data()) < 1e-9);
    }
    let flat = Volume::filled([3, 3, 3], [1.0; 3], 2.0).unwrap();
    assert!(matches!(zscore(&flat), Err(Error::Normalization(_))));
}

#[test]
fn crop_and_pad() {
    let v = Volume::from_fn([4, 4, 4], [1.0; 3], |z, y, x| (z * 16 + y * 4 + x) as f64).unwrap();
    assert_eq!(crop_or_pad(&v, [4, 4, 4]).unwrap(), v);
    let c = crop_or_pad(&v, [2, 2, 2]).unwrap();
    assert_eq!(c.data(), &[21.0, 22.0, 25.0, 26.0, 37.0, 38.0, 41.0, 42.0]);

    let small = Volume::filled([2, 2, 2], [0.6; 3], 3.0).unwrap();
    let p = crop_or_pad(&small, [4, 4, 4]).unwrap();
    assert_eq!(p.data().iter().filter(|&&x| x == 0.0).count(), 56);
    for z in 1..3 {
        for y in 1..3 {
            for x in 1..3 {
                assert_eq!(p.get(z, y, x), 3.0);
            }
        }
    }
    let mixed = crop_or_pad(&v, [3, 6, 2]).unwrap();
    assert_eq!(mixed.shape(), [3, 6, 2]);
    assert_eq!(mixed.get(0, 1, 0), v.get(0, 0, 1));

    let m = BinaryMask::from_fn([2, 2, 2], [1.0; 3], |_, _, _| true).unwrap();
    let pm = crop_or_pad_mask(&m, [4, 4, 4]).unwrap();
    assert_eq!(pm.count(), 8);
    assert!(crop_or_pad(&v, [0, 2, 2]).is_err());
}

fn phantom(shape: [usize; 3]) -> Volume {
    let c = shape.map(|n| (n as f64 - 1.0) / 2.0);
    Volume::from_fn(shape, [1.0; 3], |z, y, x| {
        let r2 = (z as f64 - c[0]).powi(2) + 0.6 * (y as f64 - c[1]).powi(2) + 1.7 * (x as f64 - c[2] - 0.7).powi(2);
        (10.0 - r2).max(0.0) + 0.1 * x as f64 + 0.03 * z as f64 + 0.07 * y as f64
    })
    .unwrap()
}

#[test]
fn flip_twice_and_identity_affine() {
    let v = phantom([5, 6, 7]);
    let m = BinaryMask::threshold(&v, 4.0);
    for axis in 0..3 {
        let t = GeometricTransform::Flip { axis };
        let (v1, m1) = apply_geometric(&v, &m, &t).unwrap();
        assert_ne!(v1, v);
        let (v2, m2) = apply_geometric(&v1, &m1, &t).unwrap();
        assert_eq!((v2, m2), (v.clone(), m.clone()));
    }
    let (vi, mi) = apply_geometric(&v, &m, &GeometricTransform::Affine(Affine::identity())).unwrap();
    assert_eq!(vi, v);
    assert_eq!(mi, m);
    let ops = [AugmentOp::Affine { max_scale: 0.0, max_rot_deg: 0.0, max_trans_mm: 0.0 }];
    assert_eq!(augment(&v, &m, &ops, 3).unwrap(), (v, m));
}

#[test]
fn quarter_turn_of_a_box() {
    let shape = [5, 9, 9];
    let v = Volume::zeros(shape, [1.0; 3]).unwrap();
    let boxed = BinaryMask::from_fn(shape, [1.0; 3], |z, y, x| (1..4).contains(&z) && (3..6).contains(&y) && (1..8).contains(&x)).unwrap();
    let turned = BinaryMask::from_fn(shape, [1.0; 3], |z, y, x| (1..4).contains(&z) && (1..8).contains(&y) && (3..6).contains(&x)).unwrap();
    let t = GeometricTransform::Affine(Affine::rigid([90.0, 0.0, 0.0], [0.0; 3]));
    let (_, out) = apply_geometric(&v, &boxed, &t).unwrap();
    assert_eq!(dice(&out, &turned).unwrap(), 1.0);
}

#[test]
fn image_and_mask_stay_consistent() {
    let v = phantom([7, 9, 9]);
    let level = 3.0;
    let m = BinaryMask::threshold(&v, level);
    let transforms = [
        GeometricTransform::Flip { axis: 2 },
        GeometricTransform::Flip { axis: 0 },
        GeometricTransform::Affine(Affine::rigid([90.0, 0.0, 0.0], [0.0, 1.0, -2.0])),
        GeometricTransform::Affine(Affine::rigid([180.0, 0.0, 0.0], [1.0, 0.0, 0.0])),
        GeometricTransform::Affine(Affine::rigid([0.0, 0.0, 180.0], [0.0, 0.0, 0.0])),
    ];
    for t in transforms {
        let (vt, mt) = apply_geometric(&v, &m, &t).unwrap();
        assert_eq!(dice(&mt, &BinaryMask::threshold(&vt, level)).unwrap(), 1.0, "{t:?}");
    }
}

#[test]
fn augmentation_is_seeded() {
    let v = phantom([6, 8, 8]);
    let m = BinaryMask::threshold(&v, 2.0);
    let ops = [
        AugmentOp::AxialFlip { probability: 0.5 },
        AugmentOp::Affine { max_scale: 0.1, max_rot_deg: 15.0, max_trans_mm: 2.0 },
    ];
    assert_eq!(draw_augmentation(&ops, 11), draw_augmentation(&ops, 11));
    assert_eq!(augment(&v, &m, &ops, 11).unwrap(), augment(&v, &m, &ops, 11).unwrap());
    let flips = (0..200).filter(|&s| matches!(draw_augmentation(&ops[..1], s).first(), Some(GeometricTransform::Flip { axis: 2 }))).count();
    assert!((70..130).contains(&flips), "{flips}");
    let bad = BinaryMask::empty([6, 8, 7], [1.0; 3]).unwrap();
    assert!(matches!(augment(&v, &bad, &ops, 1), Err(Error::Dimension(_))));
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn zscore_moments(seed in any::<u64>(), scale in 1e-3f64..1e3, shift in -1e3f64..1e3) {
        let v = random_volume(seed, [4, 5, 3], [1.0; 3]);
        let w = v.with_data(v.data().iter().map(|x| scale * x + shift).collect()).unwrap();
        let z = zscore(&w).unwrap();
        prop_assert!(z.mean().abs() < 1e-9);
        prop_assert!((z.variance().sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crop_then_pad_restores_center(seed in any::<u64>(), d in 1usize..6, h in 1usize..6, w in 1usize..6) {
        let v = random_volume(seed, [d, h, w], [1.0; 3]);
        let big = crop_or_pad(&v, [d + 3, h + 2, w + 1]).unwrap();
        prop_assert_eq!(crop_or_pad(&big, [d, h, w]).unwrap(), v);
    }
}
