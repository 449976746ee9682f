//! Robustness perturbations: Gaussian blur, additive Gaussian noise, and
//! simulated rigid patient motion. All are pure functions of the input and a
//! [`PerturbSpec`]; random draws come from [`crate::rng`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::interp::{warp_volume, Affine, Boundary, Interpolation};
use crate::rng::{seeded, Stream};
use crate::volume::Volume;

pub const DEFAULT_MOTION_MAX_ROT_DEG: f64 = 10.0;
pub const DEFAULT_MOTION_MAX_TRANS_MM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbKind {
    GaussianBlur,
    GaussianNoise,
    Motion,
}

impl std::str::FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blur" | "gaussian_blur" => Ok(PerturbKind::GaussianBlur),
            "noise" | "gaussian_noise" => Ok(PerturbKind::GaussianNoise),
            "motion" => Ok(PerturbKind::Motion),
            other => Err(Error::Config(format!("unknown perturbation kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    /// Blur width in voxels, or noise standard deviation in intensity units.
    pub sigma: f64,
    pub n_transforms: usize,
    pub seed: u64,
    pub motion_max_rot: f64,
    pub motion_max_trans: f64,
}

impl PerturbSpec {
    pub fn blur(sigma: f64) -> Self {
        Self {
            kind: PerturbKind::GaussianBlur,
            sigma,
            n_transforms: 0,
            seed: 0,
            motion_max_rot: DEFAULT_MOTION_MAX_ROT_DEG,
            motion_max_trans: DEFAULT_MOTION_MAX_TRANS_MM,
        }
    }

    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self {
            kind: PerturbKind::GaussianNoise,
            seed,
            ..Self::blur(sigma)
        }
    }

    pub fn motion(n_transforms: usize, seed: u64) -> Self {
        Self {
            kind: PerturbKind::Motion,
            sigma: 0.0,
            n_transforms,
            seed,
            ..Self::blur(0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PerturbKind::GaussianBlur | PerturbKind::GaussianNoise => {
                if !(self.sigma > 0.0 && self.sigma.is_finite()) {
                    return Err(Error::Config(format!(
                        "sigma must be positive, got {}",
                        self.sigma
                    )));
                }
            }
            PerturbKind::Motion => {
                if self.n_transforms == 0 {
                    return Err(Error::Config("motion needs at least one transform".into()));
                }
                if !(self.motion_max_rot >= 0.0 && self.motion_max_trans >= 0.0) {
                    return Err(Error::Config("motion bounds must be non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn apply(spec: &PerturbSpec, v: &Volume) -> Result<Volume> {
    spec.validate()?;
    match spec.kind {
        PerturbKind::GaussianBlur => gaussian_blur(v, spec.sigma),
        PerturbKind::GaussianNoise => gaussian_noise(v, spec.sigma, spec.seed),
        PerturbKind::Motion => motion_artifact(
            v,
            spec.n_transforms,
            spec.motion_max_rot,
            spec.motion_max_trans,
            spec.seed,
        ),
    }
}

/// Normalized 1D Gaussian taps on `[-⌈4σ⌉, ⌈4σ⌉]`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Half-sample symmetric reflection: `… b a | a b c | c b …`.
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn blur_axis(data: &[f64], shape: [usize; 3], axis: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as i64;
    let n = shape[axis] as i64;
    let strides = [shape[1] * shape[2], shape[2], 1];
    let stride = strides[axis];
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; shape[axis]];
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let pos = [z, y, x];
                if pos[axis] != 0 {
                    continue;
                }
                let start = z * strides[0] + y * strides[1] + x;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[start + j * stride];
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for (t, &w) in taps.iter().enumerate() {
                        acc += w * line[reflect(i + t as i64 - radius, n)];
                    }
                    out[start + i as usize * stride] = acc;
                }
            }
        }
    }
    out
}

/// Separable Gaussian filter along z, y and x with reflecting borders.
pub fn gaussian_blur(v: &Volume, sigma: f64) -> Result<Volume> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let taps = gaussian_taps(sigma);
    let mut data = v.data().to_vec();
    for axis in 0..3 {
        data = blur_axis(&data, v.shape(), axis, &taps);
    }
    v.with_data(data)
}

/// Adds i.i.d. `N(0, σ²)` noise drawn from the seeded noise stream.
pub fn gaussian_noise(v: &Volume, sigma: f64, seed: u64) -> Result<Volume> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be positive, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seeded(seed, Stream::Noise);
    let data = v.data().iter().map(|&x| x + normal.sample(&mut rng)).collect();
    v.with_data(data)
}

/// A rigid motion about the volume center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rot_deg: [f64; 3],
    pub trans_mm: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rot_deg: [0.0; 3],
            trans_mm: [0.0; 3],
        }
    }

    pub fn affine(&self) -> Affine {
        Affine::rigid(self.rot_deg, self.trans_mm)
    }
}

/// Draws `n` transforms with each angle uniform in `±max_rot` degrees and
/// each translation uniform in `±max_trans` millimetres.
pub fn draw_motion(n: usize, max_rot: f64, max_trans: f64, seed: u64) -> Vec<RigidTransform> {
    let mut rng = seeded(seed, Stream::Motion);
    let mut draw = |bound: f64| {
        if bound > 0.0 {
            rng.random_range(-bound..=bound)
        } else {
            0.0
        }
    };
    (0..n)
        .map(|_| RigidTransform {
            rot_deg: [draw(max_rot), draw(max_rot), draw(max_rot)],
            trans_mm: [draw(max_trans), draw(max_trans), draw(max_trans)],
        })
        .collect()
}

/// In-place 3D DFT over a C-order complex buffer. The inverse is normalized
/// by `1/N`.
pub fn fft3(data: &mut [Complex64], shape: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let strides = [shape[1] * shape[2], shape[2], 1];
    for axis in 0..3 {
        let n = shape[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let stride = strides[axis];
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    if [z, y, x][axis] != 0 {
                        continue;
                    }
                    let start = z * strides[0] + y * strides[1] + x;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = data[start + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, l) in line.iter().enumerate() {
                        data[start + j * stride] = *l;
                    }
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / data.len() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }
}

/// Slab index (0..=n) for every first-axis frequency row.
///
/// Rows are ordered from the most negative to the most positive frequency
/// (centered order) and cut into `n + 1` contiguous slabs of
/// `⌊D / (n + 1)⌋` rows; the remainder goes to the last slab.
pub fn slab_assignment(depth: usize, n_transforms: usize) -> Vec<usize> {
    let slabs = n_transforms + 1;
    let size = depth / slabs;
    let shift = depth / 2;
    let mut owner = vec![0; depth];
    for centered in 0..depth {
        let slab = if size == 0 {
            slabs - 1
        } else {
            (centered / size).min(slabs - 1)
        };
        // centered position c holds raw frequency row (c + D - D/2) mod D
        let raw = (centered + depth - shift) % depth;
        owner[raw] = slab;
    }
    owner
}

/// Composes k-space from the original volume and one rigidly moved copy per
/// transform: slab `j` of the composite spectrum comes from copy `j`
/// (copy 0 is the original). Returns the real part of the inverse transform.
pub fn motion_artifact_with(v: &Volume, transforms: &[RigidTransform]) -> Result<Volume> {
    if transforms.is_empty() {
        return Err(Error::Config("motion needs at least one transform".into()));
    }
    let shape = v.shape();
    let plane = shape[1] * shape[2];
    let owner = slab_assignment(shape[0], transforms.len());

    let spectrum = |vol: &Volume| {
        let mut buf: Vec<Complex64> = vol.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft3(&mut buf, shape, false);
        buf
    };

    let mut composite = spectrum(v);
    for (j, t) in transforms.iter().enumerate() {
        let slab = j + 1;
        if !owner.contains(&slab) {
            continue;
        }
        let moved = warp_volume(v, &t.affine(), Interpolation::Trilinear, Boundary::Zero);
        let spec = spectrum(&moved);
        for (row, &o) in owner.iter().enumerate() {
            if o == slab {
                composite[row * plane..(row + 1) * plane]
                    .copy_from_slice(&spec[row * plane..(row + 1) * plane]);
            }
        }
    }
    fft3(&mut composite, shape, true);
    v.with_data(composite.iter().map(|c| c.re).collect())
}

/// Motion artifact with `n_transforms` random rigid transforms.
pub fn motion_artifact(
    v: &Volume,
    n_transforms: usize,
    max_rot: f64,
    max_trans: f64,
    seed: u64,
) -> Result<Volume> {
    if n_transforms == 0 {
        return Err(Error::Config("motion needs at least one transform".into()));
    }
    motion_artifact_with(v, &draw_motion(n_transforms, max_rot, max_trans, seed))
}
