//! Dice similarity and symmetric Hausdorff distance on voxel masks.
//!
//! Distances are Euclidean between voxel centers, scaled per axis by the
//! mask spacing.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use crate::volume::BinaryMask;

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

fn check_compatible(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "mask shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.spacing() != b.spacing() {
        return Err(Error::Dimension(format!(
            "mask spacings differ: {:?} vs {:?}",
            a.spacing(),
            b.spacing()
        )));
    }
    Ok(())
}

/// `2|A∩B| / (|A| + |B|)`, and 1.0 when both masks are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_compatible(a, b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Squared physical distance between two voxel centers.
#[inline]
pub fn squared_distance_mm(p: [usize; 3], q: [usize; 3], spacing: [f64; 3]) -> f64 {
    let dz = (p[0] as f64 - q[0] as f64) * spacing[0];
    let dy = (p[1] as f64 - q[1] as f64) * spacing[1];
    let dx = (p[2] as f64 - q[2] as f64) * spacing[2];
    dz * dz + dy * dy + dx * dx
}

/// Foreground voxels with at least one in-grid 6-neighbour in background.
fn boundary_points(m: &BinaryMask) -> Vec<[usize; 3]> {
    let [d, h, w] = m.shape();
    m.points()
        .into_iter()
        .filter(|&[z, y, x]| {
            (z > 0 && !m.get(z - 1, y, x))
                || (z + 1 < d && !m.get(z + 1, y, x))
                || (y > 0 && !m.get(z, y - 1, x))
                || (y + 1 < h && !m.get(z, y + 1, x))
                || (x > 0 && !m.get(z, y, x - 1))
                || (x + 1 < w && !m.get(z, y, x + 1))
        })
        .collect()
}

/// `max_{a∈A} min_{b∈B} d(a, b)` in millimetres.
///
/// Exact. Points of A inside B contribute 0. For a point outside B its
/// nearest B voxel always lies on B's boundary (any interior voxel has a
/// strictly closer neighbour toward the query), so only boundary voxels are
/// scanned. The scan over B stops as soon as a distance below the running
/// maximum is found, which cannot change the result.
pub fn directed_hausdorff_mm(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_compatible(a, b)?;
    if a.count() == 0 || b.count() == 0 {
        return Err(Error::UndefinedDistance(
            "Hausdorff distance needs two non-empty masks".into(),
        ));
    }
    let spacing = a.spacing();
    let mut outside: Vec<[usize; 3]> = a
        .points()
        .into_iter()
        .filter(|&[z, y, x]| !b.get(z, y, x))
        .collect();
    if outside.is_empty() {
        return Ok(0.0);
    }
    // a shuffled query order makes early exits likely without changing the max
    outside.shuffle(&mut seeded(0, Stream::Testing));
    let candidates = boundary_points(b);

    let best = AtomicU64::new(0f64.to_bits());
    outside.par_chunks(64).for_each(|chunk| {
        for &p in chunk {
            let current = f64::from_bits(best.load(Ordering::Relaxed));
            let mut nearest = f64::INFINITY;
            for &q in &candidates {
                let d2 = squared_distance_mm(p, q, spacing);
                if d2 < nearest {
                    nearest = d2;
                    if nearest < current {
                        break;
                    }
                }
            }
            if nearest > current {
                // non-negative f64 order matches their bit patterns as u64
                best.fetch_max(nearest.to_bits(), Ordering::Relaxed);
            }
        }
    });
    Ok(f64::from_bits(best.into_inner()).sqrt())
}

/// Symmetric Hausdorff distance `max(h(A, B), h(B, A))` in millimetres.
/// Empty masks give [`Error::UndefinedDistance`].
pub fn hausdorff_mm(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(directed_hausdorff_mm(a, b)?.max(directed_hausdorff_mm(b, a)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(shape: [usize; 3], spacing: [f64; 3], pts: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::empty(shape, spacing).unwrap();
        for &[z, y, x] in pts {
            m.set(z, y, x, true);
        }
        m
    }

    #[test]
    fn dice_cases() {
        let a = mask([2, 2, 2], [1.0; 3], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask([2, 2, 2], [1.0; 3], &[[0, 1, 0]]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let e = BinaryMask::empty([2, 2, 2], [1.0; 3]).unwrap();
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn dice_hand_case() {
        // |A| = 4, |B| = 6, |A∩B| = 3
        let a = mask([1, 2, 5], [1.0; 3], &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 4]]);
        let b = mask(
            [1, 2, 5],
            [1.0; 3],
            &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 0], [0, 1, 1], [0, 1, 2]],
        );
        assert!((dice(&a, &b).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_hand_case() {
        let a = mask([1, 1, 4], [0.6; 3], &[[0, 0, 0]]);
        let b = mask([1, 1, 4], [0.6; 3], &[[0, 0, 3]]);
        assert!((hausdorff_mm(&a, &b).unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(hausdorff_mm(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_uses_anisotropic_spacing() {
        let a = mask([3, 3, 3], [2.0, 1.0, 0.5], &[[0, 0, 0]]);
        let b = mask([3, 3, 3], [2.0, 1.0, 0.5], &[[2, 1, 2]]);
        let expected = (16.0f64 + 1.0 + 1.0).sqrt();
        assert!((hausdorff_mm(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_are_undefined() {
        let a = mask([2, 2, 2], [1.0; 3], &[[0, 0, 0]]);
        let e = BinaryMask::empty([2, 2, 2], [1.0; 3]).unwrap();
        assert!(matches!(hausdorff_mm(&a, &e), Err(Error::UndefinedDistance(_))));
        assert!(matches!(hausdorff_mm(&e, &a), Err(Error::UndefinedDistance(_))));
    }

    #[test]
    fn mismatched_geometry() {
        let a = mask([2, 2, 2], [1.0; 3], &[[0, 0, 0]]);
        let b = mask([2, 2, 3], [1.0; 3], &[[0, 0, 0]]);
        let c = mask([2, 2, 2], [0.5, 1.0, 1.0], &[[0, 0, 0]]);
        assert!(matches!(dice(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(hausdorff_mm(&a, &c), Err(Error::Dimension(_))));
    }
}
