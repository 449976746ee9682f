//! Central finite-difference checks for the convolution, the encoder block
//! and the losses.
//!
//! A perturbed coordinate's numeric derivative is `Σ g·(y(θ+h) − y(θ−h)) / 2h`
//! for tensor outputs probed with a fixed random cotangent `g`, and
//! `(L(θ+h) − L(θ−h)) / 2h` for scalar losses. Errors are reported as
//! `|a − n| / max(|a|, |n|, REL_FLOOR)`.
//!
//! Block coordinates whose two probes see different ReLU sign patterns sit on
//! a kink where the function has no derivative; they are counted as skipped.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::block::{block_backward, block_forward, OocsBlockConfig, OocsBlockParams};
use crate::error::Result;
use crate::losses::{bce_dice_loss, bce_loss, soft_dice_loss, LossOutput, PredictionPair};
use crate::rng::{seeded, SeededRng, Stream};
use crate::tensor::{conv3d_backward, conv3d_forward, ConvWeights, FeatureMap, Padding};

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-4;
pub const BLOCK_TOLERANCE: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CheckStats {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckStats {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(relative_error(analytic, numeric));
        self.checked += 1;
    }

    pub fn merge(&mut self, other: CheckStats) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

fn uniform_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

pub fn random_feature_map(rng: &mut SeededRng, shape: [usize; 4]) -> Result<FeatureMap> {
    FeatureMap::new(uniform_vec(rng, shape.iter().product()), shape)
}

pub fn random_weights(
    rng: &mut SeededRng,
    c_out: usize,
    c_in: usize,
    k: usize,
    with_bias: bool,
) -> Result<ConvWeights> {
    let data = uniform_vec(rng, c_out * c_in * k * k * k);
    let bias = with_bias.then(|| uniform_vec(rng, c_out));
    ConvWeights::new(data, [c_out, c_in, k, k, k], bias)
}

/// Indices to probe: all of them, or `limit` distinct ones drawn at random.
fn probe_indices(rng: &mut SeededRng, len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(m) if m < len => {
            let mut idx = sample(rng, len, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

fn dot_diff(g: &FeatureMap, plus: &FeatureMap, minus: &FeatureMap) -> f64 {
    g.data()
        .iter()
        .zip(plus.data().iter().zip(minus.data()))
        .map(|(g, (p, m))| g * (p - m))
        .sum()
}

/// Probes `len` coordinates of one parameter tensor. `eval` runs the forward
/// pass with coordinate `i` shifted by `delta` and returns the output and an
/// optional kink fingerprint.
fn probe<F>(
    rng: &mut SeededRng,
    len: usize,
    limit: Option<usize>,
    analytic: &[f64],
    g: &FeatureMap,
    mut eval: F,
) -> Result<CheckStats>
where
    F: FnMut(usize, f64) -> Result<(FeatureMap, Option<Vec<bool>>)>,
{
    let mut stats = CheckStats::default();
    for i in probe_indices(rng, len, limit) {
        let (plus, pat_plus) = eval(i, FD_STEP)?;
        let (minus, pat_minus) = eval(i, -FD_STEP)?;
        if pat_plus != pat_minus {
            stats.skipped += 1;
            continue;
        }
        let numeric = dot_diff(g, &plus, &minus) / (2.0 * FD_STEP);
        stats.record(analytic[i], numeric);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvCase {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub spatial: [usize; 3],
    pub padding: Padding,
    pub with_bias: bool,
}

/// Checks input, weight and bias gradients of the convolution.
pub fn check_conv(case: &ConvCase, seed: u64, limit: Option<usize>) -> Result<CheckStats> {
    let mut rng = seeded(seed, Stream::Testing);
    let [d, h, w] = case.spatial;
    let x = random_feature_map(&mut rng, [case.c_in, d, h, w])?;
    let wt = random_weights(&mut rng, case.c_out, case.c_in, case.k, case.with_bias)?;
    let y = conv3d_forward(&x, &wt, case.padding)?;
    let g = random_feature_map(&mut rng, y.shape())?;
    let grads = conv3d_backward(&x, &wt, &g, case.padding)?;

    let mut stats = probe(&mut rng, x.len(), limit, grads.input.data(), &g, |i, dv| {
        let mut xp = x.clone();
        xp.data_mut()[i] += dv;
        Ok((conv3d_forward(&xp, &wt, case.padding)?, None))
    })?;
    stats.merge(probe(&mut rng, wt.data().len(), limit, grads.weights.data(), &g, |i, dv| {
        let mut wp = wt.clone();
        wp.data_mut()[i] += dv;
        Ok((conv3d_forward(&x, &wp, case.padding)?, None))
    })?);
    if let (Some(_), Some(gb)) = (wt.bias(), grads.weights.bias()) {
        stats.merge(probe(&mut rng, case.c_out, limit, gb, &g, |i, dv| {
            let mut wp = wt.clone();
            wp.bias_mut().expect("bias present")[i] += dv;
            Ok((conv3d_forward(&x, &wp, case.padding)?, None))
        })?);
    }
    Ok(stats)
}

#[derive(Clone, Copy)]
enum BlockTensor {
    W1On,
    W1Off,
    W2On,
    W2Off,
}

fn tensor_mut(p: &mut OocsBlockParams, t: BlockTensor) -> &mut ConvWeights {
    match t {
        BlockTensor::W1On => &mut p.w1_on,
        BlockTensor::W1Off => &mut p.w1_off,
        BlockTensor::W2On => &mut p.w2_on,
        BlockTensor::W2Off => &mut p.w2_off,
    }
}

/// Checks the input gradient and all four learnable weight and bias
/// gradients of the encoder block.
pub fn check_block(
    cfg: &OocsBlockConfig,
    spatial: [usize; 3],
    seed: u64,
    limit: Option<usize>,
) -> Result<CheckStats> {
    let mut rng = seeded(seed, Stream::Testing);
    let [d, h, w] = spatial;
    let x = random_feature_map(&mut rng, [cfg.c_in, d, h, w])?;
    let params = OocsBlockParams::init(cfg, seed)?;
    let (y, cache) = block_forward(&x, &params, cfg)?;
    let g = random_feature_map(&mut rng, y.shape())?;
    let (gx, grads) = block_backward(&g, &cache, &params, cfg)?;

    let run = |xv: &FeatureMap, p: &OocsBlockParams| -> Result<(FeatureMap, Option<Vec<bool>>)> {
        let (y, cache) = block_forward(xv, p, cfg)?;
        Ok((y, Some(cache.activation_pattern())))
    };

    let mut stats = probe(&mut rng, x.len(), limit, gx.data(), &g, |i, dv| {
        let mut xp = x.clone();
        xp.data_mut()[i] += dv;
        run(&xp, &params)
    })?;
    for (t, grad) in [
        (BlockTensor::W1On, &grads.w1_on),
        (BlockTensor::W1Off, &grads.w1_off),
        (BlockTensor::W2On, &grads.w2_on),
        (BlockTensor::W2Off, &grads.w2_off),
    ] {
        stats.merge(probe(&mut rng, grad.data().len(), limit, grad.data(), &g, |i, dv| {
            let mut pp = params.clone();
            tensor_mut(&mut pp, t).data_mut()[i] += dv;
            run(&x, &pp)
        })?);
        if let Some(gb) = grad.bias() {
            stats.merge(probe(&mut rng, gb.len(), limit, gb, &g, |i, dv| {
                let mut pp = params.clone();
                tensor_mut(&mut pp, t).bias_mut().expect("bias present")[i] += dv;
                run(&x, &pp)
            })?);
        }
    }
    Ok(stats)
}

/// Random logits in `[-3, 3]` with a random {0, 1} target.
pub fn random_prediction(seed: u64, spatial: [usize; 3], epsilon: f64) -> Result<PredictionPair> {
    let mut rng = seeded(seed, Stream::Testing);
    let n: usize = spatial.iter().product();
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..=3.0)).collect();
    let target: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    let [d, h, w] = spatial;
    PredictionPair::new(FeatureMap::new(logits, [1, d, h, w])?, target, epsilon)
}

/// Checks a scalar loss against finite differences in every logit.
pub fn check_loss<F>(p: &PredictionPair, loss: F) -> Result<CheckStats>
where
    F: Fn(&PredictionPair) -> Result<LossOutput>,
{
    let base = loss(p)?;
    let mut stats = CheckStats::default();
    for i in 0..p.logits().len() {
        let shifted = |dv: f64| -> Result<f64> {
            let mut z = p.logits().clone();
            z.data_mut()[i] += dv;
            let q = PredictionPair::new(z, p.target().to_vec(), p.epsilon())?;
            Ok(loss(&q)?.value)
        };
        let numeric = (shifted(FD_STEP)? - shifted(-FD_STEP)?) / (2.0 * FD_STEP);
        stats.record(base.grad.data()[i], numeric);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossStats {
    pub bce: CheckStats,
    pub dice: CheckStats,
    pub bce_dice: CheckStats,
}

pub fn check_losses(seed: u64, spatial: [usize; 3]) -> Result<LossStats> {
    let p = random_prediction(seed, spatial, crate::losses::DEFAULT_DICE_EPSILON)?;
    Ok(LossStats {
        bce: check_loss(&p, |q| Ok(bce_loss(q)))?,
        dice: check_loss(&p, |q| Ok(soft_dice_loss(q)))?,
        bce_dice: check_loss(&p, |q| bce_dice_loss(q, 1.0, 1.0))?,
    })
}

/// One cell of the block gradient-check grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub k_oocs: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub spatial: [usize; 3],
    pub seeds: usize,
    pub base_seed: u64,
    pub limit: Option<usize>,
    pub tolerance: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            spatial: [5, 5, 5],
            seeds: 2,
            base_seed: 0,
            limit: Some(24),
            tolerance: BLOCK_TOLERANCE,
        }
    }
}

pub const GRID_K_OOCS: [usize; 2] = [3, 5];
pub const GRID_C_IN: [usize; 2] = [1, 2];
pub const GRID_C_OUT: [usize; 2] = [4, 8];

/// Runs [`check_block`] over `{3, 5} × {1, 2} × {4, 8}`.
pub fn run_grid(opts: &GridOptions) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for k_oocs in GRID_K_OOCS {
        for c_in in GRID_C_IN {
            for c_out in GRID_C_OUT {
                let cfg = OocsBlockConfig::new(c_in, c_out, k_oocs)?;
                let mut stats = CheckStats::default();
                for s in 0..opts.seeds as u64 {
                    stats.merge(check_block(&cfg, opts.spatial, opts.base_seed + s, opts.limit)?);
                }
                rows.push(GridRow {
                    k_oocs,
                    c_in,
                    c_out,
                    seeds: opts.seeds,
                    max_rel_error: stats.max_rel_error,
                    checked: stats.checked,
                    skipped: stats.skipped,
                    pass: stats.passes(opts.tolerance),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(0.0, 1e-6) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn small_conv_passes() {
        let case = ConvCase {
            c_in: 2,
            c_out: 2,
            k: 3,
            spatial: [3, 4, 5],
            padding: Padding::SameZero,
            with_bias: true,
        };
        let s = check_conv(&case, 1, None).unwrap();
        assert!(s.passes(1e-6), "{s:?}");
    }
}
