//! Balanced On/Off center-surround kernels.
//!
//! A kernel of odd size `k` samples a difference of Gaussians on the integer
//! offsets `[-(k-1)/2, (k-1)/2]` per axis:
//!
//! ```text
//! 3D:  DoG(ρ²) = γ⁻³ exp(-ρ² / (2γ²σ²)) - exp(-ρ² / (2σ²))
//! 2D:  DoG(ρ²) = γ⁻² exp(-ρ² / (2γ²σ²)) - exp(-ρ² / (2σ²))
//! ```
//!
//! with one shared amplitude for center and surround. The surround radius is
//! `k / 2` voxels, the center radius `γ · k / 2`, and σ follows from the
//! center radius so that the DoG changes sign exactly at the center radius.
//! Positive and negative entries are then rescaled separately so they sum to
//! `+c` and `-c`. The Off kernel is the element-wise negation of the On kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 2.0 / 3.0;
pub const DEFAULT_C: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelDims {
    Two,
    Three,
}

impl KernelDims {
    pub fn rank(self) -> usize {
        match self {
            KernelDims::Two => 2,
            KernelDims::Three => 3,
        }
    }

    pub fn from_rank(rank: usize) -> Result<Self> {
        match rank {
            2 => Ok(KernelDims::Two),
            3 => Ok(KernelDims::Three),
            other => Err(Error::Config(format!("kernel dims must be 2 or 3, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    On,
    Off,
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Polarity::On),
            "off" => Ok(Polarity::Off),
            other => Err(Error::Config(format!("unknown polarity '{other}'"))),
        }
    }
}

/// Parameters of a center-surround kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub k: usize,
    pub gamma: f64,
    pub c: f64,
    pub dims: KernelDims,
    /// Sub-samples per voxel and axis; 1 samples voxel centers only.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

fn default_oversample() -> usize {
    1
}

impl KernelSpec {
    pub fn new(k: usize, gamma: f64, c: f64, dims: KernelDims) -> Result<Self> {
        let spec = Self {
            k,
            gamma,
            c,
            dims,
            oversample: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 3D kernel of size `k` with γ = 2/3 and c = 3.
    pub fn preset(k: usize) -> Result<Self> {
        Self::new(k, DEFAULT_GAMMA, DEFAULT_C, KernelDims::Three)
    }

    pub fn with_oversample(mut self, oversample: usize) -> Result<Self> {
        self.oversample = oversample;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "kernel size must be odd and >= 3, got {}",
                self.k
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(Error::Domain(format!("c must be >= 1, got {}", self.c)));
        }
        if self.oversample == 0 {
            return Err(Error::Config("oversample must be >= 1".into()));
        }
        Ok(())
    }

    pub fn r_surround(&self) -> f64 {
        self.k as f64 / 2.0
    }

    pub fn r_center(&self) -> f64 {
        self.gamma * self.r_surround()
    }

    /// Number of weights, `k²` or `k³`.
    pub fn len(&self) -> usize {
        self.k.pow(self.dims.rank() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Derived quantities of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDerivation {
    pub r_surround: f64,
    pub r_center: f64,
    pub sigma: f64,
    /// Factor applied to the positive raw entries during balancing.
    pub scale_pos: f64,
    /// Factor applied to the negative raw entries during balancing.
    pub scale_neg: f64,
}

/// Gaussian width for a center radius `r_center` and ratio `gamma`:
/// `σ = (r/γ) · sqrt((1 - γ²) / (-6 ln γ))`.
pub fn compute_sigma(r_center: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(r_center > 0.0 && r_center.is_finite()) {
        return Err(Error::Domain(format!(
            "center radius must be positive, got {r_center}"
        )));
    }
    Ok((r_center / gamma) * ((1.0 - gamma * gamma) / (-6.0 * gamma.ln())).sqrt())
}

/// Center and surround terms at squared radius `rho2`.
#[inline]
fn dog_terms(rho2: f64, sigma: f64, gamma: f64, dims: KernelDims) -> (f64, f64) {
    let s2 = sigma * sigma;
    let g2 = gamma * gamma;
    let amp = match dims {
        KernelDims::Two => 1.0 / g2,
        KernelDims::Three => 1.0 / (g2 * gamma),
    };
    (
        amp * (-rho2 / (2.0 * g2 * s2)).exp(),
        (-rho2 / (2.0 * s2)).exp(),
    )
}

/// Unbalanced DoG with unit amplitudes.
pub fn dog_value(rho2: f64, sigma: f64, gamma: f64, dims: KernelDims) -> f64 {
    let (center, surround) = dog_terms(rho2, sigma, gamma, dims);
    center - surround
}

/// Relative size below which `center - surround` is treated as the analytic
/// zero crossing rather than a sign.
const CANCELLATION_ULPS: f64 = 8.0;

fn sample_point(rho2: f64, sigma: f64, gamma: f64, dims: KernelDims) -> f64 {
    let (center, surround) = dog_terms(rho2, sigma, gamma, dims);
    let diff = center - surround;
    if diff.abs() <= CANCELLATION_ULPS * f64::EPSILON * center.max(surround) {
        0.0
    } else {
        diff
    }
}

/// Dense `k^rank` grid of kernel weights, C order (z, y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub dims: KernelDims,
    pub k: usize,
    pub weights: Vec<f64>,
}

impl KernelGrid {
    pub fn half(&self) -> i64 {
        (self.k / 2) as i64
    }

    /// Weight at signed offset `(z, y, x)` from the center; `z` is ignored
    /// for 2D grids.
    pub fn at(&self, z: i64, y: i64, x: i64) -> f64 {
        let h = self.half();
        let k = self.k as i64;
        let idx = match self.dims {
            KernelDims::Two => (y + h) * k + (x + h),
            KernelDims::Three => ((z + h) * k + (y + h)) * k + (x + h),
        };
        self.weights[idx as usize]
    }

    /// Signed offsets of every entry, in storage order.
    pub fn offsets(&self) -> Vec<[i64; 3]> {
        let h = self.half();
        let zs: Vec<i64> = match self.dims {
            KernelDims::Two => vec![0],
            KernelDims::Three => (-h..=h).collect(),
        };
        let mut out = Vec::with_capacity(self.weights.len());
        for &z in &zs {
            for y in -h..=h {
                for x in -h..=h {
                    out.push([z, y, x]);
                }
            }
        }
        out
    }
}

/// Samples the unbalanced DoG for `spec` on its integer grid.
///
/// Values are computed from the sorted absolute offsets, so the grid is
/// exactly invariant under axis permutations and reflections. Entries where
/// center and surround cancel to rounding level are stored as exact zeros.
pub fn sample_dog(spec: &KernelSpec) -> Result<KernelGrid> {
    spec.validate()?;
    let sigma = compute_sigma(spec.r_center(), spec.gamma)?;
    let grid = KernelGrid {
        dims: spec.dims,
        k: spec.k,
        weights: Vec::new(),
    };
    let s = spec.oversample;
    let sub: Vec<f64> = (0..s)
        .map(|j| (j as f64 + 0.5) / s as f64 - 0.5)
        .collect();
    let rank = spec.dims.rank();

    let value = |canon: [i64; 3]| -> f64 {
        if s == 1 {
            let rho2 = canon.iter().map(|&c| (c * c) as f64).sum();
            return sample_point(rho2, sigma, spec.gamma, spec.dims);
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        let zs: &[f64] = if rank == 2 { &[0.0] } else { &sub };
        for &dz in zs {
            for &dy in &sub {
                for &dx in &sub {
                    let (z, y, x) = (canon[0] as f64 + dz, canon[1] as f64 + dy, canon[2] as f64 + dx);
                    acc += sample_point(z * z + y * y + x * x, sigma, spec.gamma, spec.dims);
                    count += 1;
                }
            }
        }
        acc / count as f64
    };

    let weights = grid
        .offsets()
        .into_iter()
        .map(|[z, y, x]| {
            let mut canon = [z.abs(), y.abs(), x.abs()];
            canon.sort_unstable();
            value(canon)
        })
        .collect();
    Ok(KernelGrid { weights, ..grid })
}

/// Per-sign scale factors produced by [`balance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceScales {
    pub pos: f64,
    pub neg: f64,
}

/// Rescales positive entries to sum to `+c` and negative entries to `-c`.
/// Exact zeros are left alone.
pub fn balance(raw: &[f64], c: f64) -> Result<(Vec<f64>, BalanceScales)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("balance constant must be positive, got {c}")));
    }
    let pos: f64 = raw.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = raw.iter().filter(|&&v| v < 0.0).sum();
    if pos <= 0.0 || neg >= 0.0 {
        return Err(Error::DegenerateKernel(format!(
            "kernel needs entries of both signs (positive sum {pos}, negative sum {neg})"
        )));
    }
    let scales = BalanceScales {
        pos: c / pos,
        neg: c / -neg,
    };
    let out = raw
        .iter()
        .map(|&v| {
            if v > 0.0 {
                v * scales.pos
            } else if v < 0.0 {
                v * scales.neg
            } else {
                v
            }
        })
        .collect();
    Ok((out, scales))
}

/// A balanced On or Off kernel together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedKernel {
    spec: KernelSpec,
    derivation: KernelDerivation,
    polarity: Polarity,
    grid: KernelGrid,
}

pub fn make_kernel(spec: &KernelSpec, polarity: Polarity) -> Result<BalancedKernel> {
    let raw = sample_dog(spec)?;
    let (weights, scales) = balance(&raw.weights, spec.c)?;
    let weights = match polarity {
        Polarity::On => weights,
        Polarity::Off => weights.into_iter().map(|v| -v).collect(),
    };
    Ok(BalancedKernel {
        spec: *spec,
        derivation: KernelDerivation {
            r_surround: spec.r_surround(),
            r_center: spec.r_center(),
            sigma: compute_sigma(spec.r_center(), spec.gamma)?,
            scale_pos: scales.pos,
            scale_neg: scales.neg,
        },
        polarity,
        grid: KernelGrid { weights, ..raw },
    })
}

impl BalancedKernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn derivation(&self) -> &KernelDerivation {
        &self.derivation
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn grid(&self) -> &KernelGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.grid.weights
    }

    pub fn at(&self, z: i64, y: i64, x: i64) -> f64 {
        self.grid.at(z, y, x)
    }

    pub fn sum_positive(&self) -> f64 {
        self.weights().iter().filter(|&&v| v > 0.0).sum()
    }

    pub fn sum_negative(&self) -> f64 {
        self.weights().iter().filter(|&&v| v < 0.0).sum()
    }

    pub fn sum(&self) -> f64 {
        self.weights().iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.weights().iter().map(|v| v.abs()).sum()
    }

    /// The opposite-polarity kernel.
    pub fn negated(&self) -> Self {
        Self {
            polarity: match self.polarity {
                Polarity::On => Polarity::Off,
                Polarity::Off => Polarity::On,
            },
            grid: KernelGrid {
                weights: self.grid.weights.iter().map(|v| -v).collect(),
                ..self.grid.clone()
            },
            ..self.clone()
        }
    }

    /// Reassembles a kernel from exported parts, checking consistency.
    pub fn from_parts(
        spec: KernelSpec,
        derivation: KernelDerivation,
        polarity: Polarity,
        weights: Vec<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.len() {
            return Err(Error::Dimension(format!(
                "kernel of size {} and rank {} needs {} weights, got {}",
                spec.k,
                spec.dims.rank(),
                spec.len(),
                weights.len()
            )));
        }
        Ok(Self {
            spec,
            derivation,
            polarity,
            grid: KernelGrid {
                dims: spec.dims,
                k: spec.k,
                weights,
            },
        })
    }
}

/// Result of integrating the unbalanced continuous DoG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousBalance {
    /// Signed integral of the DoG over the ball.
    pub integral: f64,
    /// Integral of |DoG| over the same ball.
    pub abs_integral: f64,
    /// Radius of the integration ball in voxels.
    pub radius: f64,
}

impl ContinuousBalance {
    pub fn residual(&self) -> f64 {
        self.integral.abs()
    }
}

/// Integrates the continuous DoG (unit amplitudes) over a ball of radius 6σ.
///
/// The ball is split into `n_grid` cells along each polar coordinate (radius
/// and one or two angles). Each cell contributes its exact volume times the
/// integrand at the cell's coordinate midpoint, evaluated in Cartesian
/// coordinates. The signed integral tends to zero as the grid is refined
/// because equal amplitudes give center and surround equal mass.
pub fn continuous_balance_check(spec: &KernelSpec, n_grid: usize) -> Result<ContinuousBalance> {
    use rayon::prelude::*;
    use std::f64::consts::PI;

    spec.validate()?;
    if n_grid < 64 {
        return Err(Error::Config(format!("n_grid must be >= 64, got {n_grid}")));
    }
    let sigma = compute_sigma(spec.r_center(), spec.gamma)?;
    let radius = 6.0 * sigma;
    let n = n_grid as f64;
    let dr = radius / n;
    let dtheta = 2.0 * PI / n;
    let dphi = PI / n;
    let gamma = spec.gamma;
    let dims = spec.dims;

    // one (signed, absolute) pair per radial shell, summed in shell order
    let shells: Vec<(f64, f64)> = (0..n_grid)
        .into_par_iter()
        .map(|i| {
            let r0 = i as f64 * dr;
            let r1 = r0 + dr;
            let r = r0 + 0.5 * dr;
            let mut signed = 0.0;
            let mut abs = 0.0;
            match dims {
                KernelDims::Two => {
                    let area = 0.5 * (r1 * r1 - r0 * r0) * dtheta;
                    for t in 0..n_grid {
                        let theta = (t as f64 + 0.5) * dtheta;
                        let (x, y) = (r * theta.cos(), r * theta.sin());
                        let f = dog_value(x * x + y * y, sigma, gamma, dims);
                        signed += f * area;
                        abs += f.abs() * area;
                    }
                }
                KernelDims::Three => {
                    let radial = (r1 * r1 * r1 - r0 * r0 * r0) / 3.0;
                    for p in 0..n_grid {
                        let phi0 = p as f64 * dphi;
                        let phi = phi0 + 0.5 * dphi;
                        let vol = radial * (phi0.cos() - (phi0 + dphi).cos()) * dtheta;
                        let (sp, cp) = phi.sin_cos();
                        for t in 0..n_grid {
                            let theta = (t as f64 + 0.5) * dtheta;
                            let (st, ct) = theta.sin_cos();
                            let (x, y, z) = (r * sp * ct, r * sp * st, r * cp);
                            let f = dog_value(x * x + y * y + z * z, sigma, gamma, dims);
                            signed += f * vol;
                            abs += f.abs() * vol;
                        }
                    }
                }
            }
            (signed, abs)
        })
        .collect();

    let (integral, abs_integral) = shells
        .iter()
        .fold((0.0, 0.0), |(s, a), &(ds, da)| (s + ds, a + da));
    Ok(ContinuousBalance {
        integral,
        abs_integral,
        radius,
    })
}
