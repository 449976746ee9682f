//! Preprocessing pipeline: spacing resampling, z-score normalization,
//! center crop/pad, and seeded geometric augmentation of image/mask pairs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::interp::{sample, warp_mask, warp_volume, Affine, Boundary, Interpolation};
use crate::rng::{seeded, Stream};
use crate::volume::{check_spacing, BinaryMask, Shape3, Spacing3, Volume};

pub const DEFAULT_TARGET_SPACING: Spacing3 = [0.6, 0.6, 0.6];
/// Default crop in `(D, H, W)` order: 64 slices of 160 × 160.
pub const DEFAULT_CROP: Shape3 = [64, 160, 160];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleSpec {
    pub target_spacing: Spacing3,
    pub mode: Interpolation,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            target_spacing: DEFAULT_TARGET_SPACING,
            mode: Interpolation::Trilinear,
        }
    }
}

impl ResampleSpec {
    pub fn new(target_spacing: Spacing3, mode: Interpolation) -> Result<Self> {
        check_spacing(target_spacing).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            target_spacing,
            mode,
        })
    }
}

/// `round_half_up(n · s_in / s_out)` per axis.
pub fn resampled_shape(shape: Shape3, from: Spacing3, to: Spacing3) -> Result<Shape3> {
    let mut out = [0; 3];
    for a in 0..3 {
        out[a] = (shape[a] as f64 * from[a] / to[a] + 0.5).floor() as usize;
    }
    if out.iter().any(|&d| d == 0) {
        return Err(Error::Resample(format!(
            "resampling {shape:?} from {from:?} to {to:?} mm leaves an empty axis"
        )));
    }
    Ok(out)
}

/// Resamples onto a grid with `spec.target_spacing`. Output voxel `j` samples
/// the input at continuous index `(j + 0.5) · s_out / s_in - 0.5`, so voxel
/// centers line up with the physical extent; reads past the edge clamp.
pub fn resample(v: &Volume, spec: &ResampleSpec) -> Result<Volume> {
    check_spacing(spec.target_spacing).map_err(|e| Error::Config(e.to_string()))?;
    let from = v.spacing();
    let to = spec.target_spacing;
    let shape = resampled_shape(v.shape(), from, to)?;
    let ratio = [to[0] / from[0], to[1] / from[1], to[2] / from[2]];
    let src_index = |j: usize, a: usize| (j as f64 + 0.5) * ratio[a] - 0.5;
    let mut data = Vec::with_capacity(shape.iter().product());
    for z in 0..shape[0] {
        let pz = src_index(z, 0);
        for y in 0..shape[1] {
            let py = src_index(y, 1);
            for x in 0..shape[2] {
                data.push(sample(v, [pz, py, src_index(x, 2)], spec.mode, Boundary::Clamp));
            }
        }
    }
    Volume::new(data, shape, to)
}

/// Nearest-neighbour resampling for label masks.
pub fn resample_mask(m: &BinaryMask, target_spacing: Spacing3) -> Result<BinaryMask> {
    let spec = ResampleSpec::new(target_spacing, Interpolation::Nearest)?;
    let out = resample(&m.to_volume(), &spec)?;
    BinaryMask::from_volume(&out)
}

/// `(v - mean) / std` with the population standard deviation.
pub fn zscore(v: &Volume) -> Result<Volume> {
    let mean = v.mean();
    let var = v.variance();
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Normalization(format!(
            "cannot z-score a volume with variance {var}"
        )));
    }
    let std = var.sqrt();
    v.with_data(v.data().iter().map(|x| (x - mean) / std).collect())
}

/// For each axis: source start, destination start, and copied length.
fn crop_pad_plan(from: Shape3, to: Shape3) -> [(usize, usize, usize); 3] {
    let mut plan = [(0, 0, 0); 3];
    for a in 0..3 {
        plan[a] = if from[a] >= to[a] {
            ((from[a] - to[a]) / 2, 0, to[a])
        } else {
            (0, (to[a] - from[a]) / 2, from[a])
        };
    }
    plan
}

fn crop_or_pad_slice<T: Copy>(src: &[T], from: Shape3, to: Shape3, fill: T) -> Vec<T> {
    let plan = crop_pad_plan(from, to);
    let mut out = vec![fill; to.iter().product()];
    let (sz, dz, nz) = plan[0];
    let (sy, dy, ny) = plan[1];
    let (sx, dx, nx) = plan[2];
    for z in 0..nz {
        for y in 0..ny {
            let s = ((sz + z) * from[1] + sy + y) * from[2] + sx;
            let d = ((dz + z) * to[1] + dy + y) * to[2] + dx;
            out[d..d + nx].copy_from_slice(&src[s..s + nx]);
        }
    }
    out
}

/// Center-crops axes that are too long and zero-pads axes that are too short.
/// Odd differences put the extra voxel at the high end.
pub fn crop_or_pad(v: &Volume, target: Shape3) -> Result<Volume> {
    if target.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("crop target {target:?} has a zero extent")));
    }
    Volume::new(crop_or_pad_slice(v.data(), v.shape(), target, 0.0), target, v.spacing())
}

pub fn crop_or_pad_mask(m: &BinaryMask, target: Shape3) -> Result<BinaryMask> {
    if target.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("crop target {target:?} has a zero extent")));
    }
    BinaryMask::new(crop_or_pad_slice(m.data(), m.shape(), target, false), target, m.spacing())
}

/// A random augmentation with its sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    /// Left-right flip in the axial plane (the x axis) with this probability.
    AxialFlip { probability: f64 },
    /// Per-axis scale in `1 ± max_scale`, Euler angles in `±max_rot_deg`,
    /// translation in `±max_trans_mm`.
    Affine {
        max_scale: f64,
        max_rot_deg: f64,
        max_trans_mm: f64,
    },
}

/// A concrete geometric transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometricTransform {
    Flip { axis: usize },
    Affine(Affine),
}

/// Draws the concrete transforms for `ops` from the seeded augment stream.
pub fn draw_augmentation(ops: &[AugmentOp], seed: u64) -> Vec<GeometricTransform> {
    let mut rng = seeded(seed, Stream::Augment);
    let sym = |bound: f64, rng: &mut crate::rng::SeededRng| {
        if bound > 0.0 {
            rng.random_range(-bound..=bound)
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    for op in ops {
        match *op {
            AugmentOp::AxialFlip { probability } => {
                if rng.random::<f64>() < probability {
                    out.push(GeometricTransform::Flip { axis: 2 });
                }
            }
            AugmentOp::Affine {
                max_scale,
                max_rot_deg,
                max_trans_mm,
            } => {
                let mut draw3 = |b: f64| [sym(b, &mut rng), sym(b, &mut rng), sym(b, &mut rng)];
                let s = draw3(max_scale);
                let r = draw3(max_rot_deg);
                let t = draw3(max_trans_mm);
                out.push(GeometricTransform::Affine(Affine::scale_rotate_translate(
                    [1.0 + s[0], 1.0 + s[1], 1.0 + s[2]],
                    r,
                    t,
                )));
            }
        }
    }
    out
}

fn flip_slice<T: Copy>(src: &[T], shape: Shape3, axis: usize) -> Vec<T> {
    let mut out = src.to_vec();
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let mut p = [z, y, x];
                p[axis] = shape[axis] - 1 - p[axis];
                out[(p[0] * shape[1] + p[1]) * shape[2] + p[2]] =
                    src[(z * shape[1] + y) * shape[2] + x];
            }
        }
    }
    out
}

/// Applies one transform to an aligned image/mask pair: trilinear for the
/// image, nearest for the mask, zero outside the grid for both.
pub fn apply_geometric(
    v: &Volume,
    m: &BinaryMask,
    t: &GeometricTransform,
) -> Result<(Volume, BinaryMask)> {
    if v.shape() != m.shape() || v.spacing() != m.spacing() {
        return Err(Error::Dimension(format!(
            "image {:?}/{:?} and mask {:?}/{:?} are not aligned",
            v.shape(),
            v.spacing(),
            m.shape(),
            m.spacing()
        )));
    }
    match *t {
        GeometricTransform::Flip { axis } => {
            if axis > 2 {
                return Err(Error::Config(format!("flip axis must be 0..=2, got {axis}")));
            }
            Ok((
                v.with_data(flip_slice(v.data(), v.shape(), axis))?,
                BinaryMask::new(flip_slice(m.data(), m.shape(), axis), m.shape(), m.spacing())?,
            ))
        }
        GeometricTransform::Affine(a) => Ok((
            warp_volume(v, &a, Interpolation::Trilinear, Boundary::Zero),
            warp_mask(m, &a),
        )),
    }
}

/// Draws transforms for `ops` with `seed` and applies them in order.
pub fn augment(
    v: &Volume,
    m: &BinaryMask,
    ops: &[AugmentOp],
    seed: u64,
) -> Result<(Volume, BinaryMask)> {
    let mut pair = (v.clone(), m.clone());
    for t in draw_augmentation(ops, seed) {
        pair = apply_geometric(&pair.0, &pair.1, &t)?;
    }
    Ok(pair)
}
