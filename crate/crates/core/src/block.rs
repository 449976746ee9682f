//! The OOCS encoder block.
//!
//! The block's two convolutions are split into an On and an Off pathway with
//! half the filters each. The fixed On (resp. Off) center-surround response of
//! the block input is added to the first convolution's output before the
//! nonlinearity; the second-layer activations of both pathways are
//! concatenated, On first.
//!
//! ```text
//! a1_on  = relu(conv(x, w1_on)  + conv(x, fixed_on))
//! a2_on  = relu(conv(a1_on, w2_on))
//! a1_off = relu(conv(x, w1_off) + conv(x, fixed_off))
//! a2_off = relu(conv(a1_off, w2_off))
//! y      = [a2_on; a2_off]
//! ```
//!
//! All convolutions use zero "same" padding. Fixed kernels act on a
//! multi-channel input by averaging over input channels (see [`lift_kernel`]).

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{make_kernel, BalancedKernel, KernelDims, KernelSpec, Polarity};
use crate::rng::{seeded, Stream};
use crate::tensor::{conv3d_backward, conv3d_forward, ConvWeights, FeatureMap, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OocsBlockConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub k_learn: usize,
    pub k_oocs: usize,
    pub gamma: f64,
    pub c: f64,
    pub activation: Activation,
}

impl OocsBlockConfig {
    /// Defaults: 3³ learnable kernels, γ = 2/3, c = 3, ReLU.
    pub fn new(c_in: usize, c_out: usize, k_oocs: usize) -> Result<Self> {
        let cfg = Self {
            c_in,
            c_out,
            k_learn: 3,
            k_oocs,
            gamma: crate::kernel::DEFAULT_GAMMA,
            c: crate::kernel::DEFAULT_C,
            activation: Activation::Relu,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 {
            return Err(Error::Config("c_in must be >= 1".into()));
        }
        if self.c_out == 0 || self.c_out % 2 != 0 {
            return Err(Error::Config(format!(
                "c_out must be a positive even number, got {}",
                self.c_out
            )));
        }
        if self.k_learn % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "learnable kernel size must be odd, got {}",
                self.k_learn
            )));
        }
        self.kernel_spec()?;
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.c_out / 2
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.k_oocs, self.gamma, self.c, KernelDims::Three)
    }
}

/// Broadcasts a 3D kernel to `(c_path, c_in, k, k, k)` weights, each entry
/// divided by `c_in`, so every output channel sees the channel-averaged
/// response.
pub fn lift_kernel(kern: &BalancedKernel, c_in: usize, c_path: usize) -> Result<ConvWeights> {
    if kern.spec().dims != KernelDims::Three {
        return Err(Error::InvalidKernel(
            "only 3D kernels can be lifted to convolution weights".into(),
        ));
    }
    if c_in == 0 || c_path == 0 {
        return Err(Error::Dimension(format!(
            "channel counts must be >= 1, got c_in={c_in}, c_path={c_path}"
        )));
    }
    let k = kern.spec().k;
    let scaled: Vec<f64> = kern.weights().iter().map(|w| w / c_in as f64).collect();
    let mut data = Vec::with_capacity(c_path * c_in * scaled.len());
    for _ in 0..c_path * c_in {
        data.extend_from_slice(&scaled);
    }
    ConvWeights::new(data, [c_path, c_in, k, k, k], None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OocsBlockParams {
    pub w1_on: ConvWeights,
    pub w1_off: ConvWeights,
    pub w2_on: ConvWeights,
    pub w2_off: ConvWeights,
    fixed_on: ConvWeights,
    fixed_off: ConvWeights,
}

fn uniform_weights(
    rng: &mut impl Rng,
    c_out: usize,
    c_in: usize,
    k: usize,
) -> Result<ConvWeights> {
    let fan_in = (c_in * k * k * k) as f64;
    let bound = 1.0 / fan_in.sqrt();
    let n = c_out * c_in * k * k * k;
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    let bias = (0..c_out).map(|_| rng.random_range(-bound..bound)).collect();
    ConvWeights::new(data, [c_out, c_in, k, k, k], Some(bias))
}

impl OocsBlockParams {
    /// Fixed kernels from `cfg`, learnable weights uniform in
    /// `±1/sqrt(fan_in)` from the seeded stream.
    pub fn init(cfg: &OocsBlockConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed, Stream::Init);
        let h = cfg.half();
        let k = cfg.k_learn;
        let w1_on = uniform_weights(&mut rng, h, cfg.c_in, k)?;
        let w1_off = uniform_weights(&mut rng, h, cfg.c_in, k)?;
        let w2_on = uniform_weights(&mut rng, h, h, k)?;
        let w2_off = uniform_weights(&mut rng, h, h, k)?;
        Self::from_learnable(cfg, w1_on, w1_off, w2_on, w2_off)
    }

    /// Builds the fixed kernels from `cfg` around caller-supplied learnable
    /// weights.
    pub fn from_learnable(
        cfg: &OocsBlockConfig,
        w1_on: ConvWeights,
        w1_off: ConvWeights,
        w2_on: ConvWeights,
        w2_off: ConvWeights,
    ) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.half();
        let k = cfg.k_learn;
        for (name, w, c_in) in [
            ("w1_on", &w1_on, cfg.c_in),
            ("w1_off", &w1_off, cfg.c_in),
            ("w2_on", &w2_on, h),
            ("w2_off", &w2_off, h),
        ] {
            if w.shape() != [h, c_in, k, k, k] {
                return Err(Error::Dimension(format!(
                    "{name} has shape {:?}, expected {:?}",
                    w.shape(),
                    [h, c_in, k, k, k]
                )));
            }
        }
        let on = make_kernel(&cfg.kernel_spec()?, Polarity::On)?;
        let fixed_on = lift_kernel(&on, cfg.c_in, h)?;
        let fixed_off = fixed_on.negated();
        Ok(Self {
            w1_on,
            w1_off,
            w2_on,
            w2_off,
            fixed_on,
            fixed_off,
        })
    }

    pub fn fixed_on(&self) -> &ConvWeights {
        &self.fixed_on
    }

    pub fn fixed_off(&self) -> &ConvWeights {
        &self.fixed_off
    }

    /// Replaces the fixed kernels. The Off kernel is always rederived as the
    /// negation of `fixed_on`.
    pub fn set_fixed_on(&mut self, fixed_on: ConvWeights) -> Result<()> {
        if fixed_on.shape() != self.fixed_on.shape() {
            return Err(Error::Dimension(format!(
                "fixed kernel shape {:?} does not match {:?}",
                fixed_on.shape(),
                self.fixed_on.shape()
            )));
        }
        self.fixed_off = fixed_on.negated();
        self.fixed_on = fixed_on;
        Ok(())
    }

    /// Weights and biases of the four learnable convolutions.
    pub fn learnable_parameter_count(&self) -> usize {
        [&self.w1_on, &self.w1_off, &self.w2_on, &self.w2_off]
            .iter()
            .map(|w| w.parameter_count())
            .sum()
    }
}

/// Learnable parameters of an ordinary two-convolution block
/// (`c_in → c_out → c_out`, kernel `k`, with biases).
pub fn plain_block_parameter_count(c_in: usize, c_out: usize, k: usize) -> usize {
    let k3 = k * k * k;
    c_out * c_in * k3 + c_out + c_out * c_out * k3 + c_out
}

/// Intermediates kept by [`block_forward`] for [`block_backward`].
#[derive(Debug, Clone)]
pub struct BlockCache {
    x: FeatureMap,
    z1_on: FeatureMap,
    z1_off: FeatureMap,
    a1_on: FeatureMap,
    a1_off: FeatureMap,
    z2_on: FeatureMap,
    z2_off: FeatureMap,
}

impl BlockCache {
    /// Pre-activations of the first layer, On pathway.
    pub fn z1_on(&self) -> &FeatureMap {
        &self.z1_on
    }

    pub fn z1_off(&self) -> &FeatureMap {
        &self.z1_off
    }

    /// Sign pattern of every pre-activation (`> 0`), in a fixed order.
    pub fn activation_pattern(&self) -> Vec<bool> {
        [&self.z1_on, &self.z1_off, &self.z2_on, &self.z2_off]
            .iter()
            .flat_map(|z| z.data().iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Gradients for the learnable weights only; the fixed kernels have none.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub w1_on: ConvWeights,
    pub w1_off: ConvWeights,
    pub w2_on: ConvWeights,
    pub w2_off: ConvWeights,
}

fn add_assign(a: &mut FeatureMap, b: &FeatureMap) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

fn first_layer(
    x: &FeatureMap,
    w1: &ConvWeights,
    fixed: &ConvWeights,
) -> Result<FeatureMap> {
    let mut z = conv3d_forward(x, w1, Padding::SameZero)?;
    add_assign(&mut z, &conv3d_forward(x, fixed, Padding::SameZero)?);
    Ok(z)
}

pub fn block_forward(
    x: &FeatureMap,
    p: &OocsBlockParams,
    cfg: &OocsBlockConfig,
) -> Result<(FeatureMap, BlockCache)> {
    if x.channels() != cfg.c_in {
        return Err(Error::Dimension(format!(
            "block expects {} input channels, got {}",
            cfg.c_in,
            x.channels()
        )));
    }
    let act = cfg.activation;
    let z1_on = first_layer(x, &p.w1_on, &p.fixed_on)?;
    let z1_off = first_layer(x, &p.w1_off, &p.fixed_off)?;
    let a1_on = z1_on.map(|v| act.apply(v));
    let a1_off = z1_off.map(|v| act.apply(v));
    let z2_on = conv3d_forward(&a1_on, &p.w2_on, Padding::SameZero)?;
    let z2_off = conv3d_forward(&a1_off, &p.w2_off, Padding::SameZero)?;
    let y = FeatureMap::concat_channels(&[&z2_on.map(|v| act.apply(v)), &z2_off.map(|v| act.apply(v))])?;
    Ok((
        y,
        BlockCache {
            x: x.clone(),
            z1_on,
            z1_off,
            a1_on,
            a1_off,
            z2_on,
            z2_off,
        },
    ))
}

fn through_activation(grad: &FeatureMap, pre: &FeatureMap, act: Activation) -> FeatureMap {
    let mut out = grad.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre.data()) {
        *g *= act.derivative(z);
    }
    out
}

struct PathwayGrads {
    x: FeatureMap,
    w1: ConvWeights,
    w2: ConvWeights,
}

fn pathway_backward(
    grad_a2: &FeatureMap,
    x: &FeatureMap,
    z1: &FeatureMap,
    a1: &FeatureMap,
    z2: &FeatureMap,
    w1: &ConvWeights,
    w2: &ConvWeights,
    fixed: &ConvWeights,
    act: Activation,
) -> Result<PathwayGrads> {
    let dz2 = through_activation(grad_a2, z2, act);
    let g2 = conv3d_backward(a1, w2, &dz2, Padding::SameZero)?;
    let dz1 = through_activation(&g2.input, z1, act);
    let g1 = conv3d_backward(x, w1, &dz1, Padding::SameZero)?;
    let gf = conv3d_backward(x, fixed, &dz1, Padding::SameZero)?;
    let mut gx = g1.input;
    add_assign(&mut gx, &gf.input);
    Ok(PathwayGrads {
        x: gx,
        w1: g1.weights,
        w2: g2.weights,
    })
}

pub fn block_backward(
    grad_y: &FeatureMap,
    cache: &BlockCache,
    p: &OocsBlockParams,
    cfg: &OocsBlockConfig,
) -> Result<(FeatureMap, BlockGrads)> {
    let expected = [cfg.c_out, cache.x.shape()[1], cache.x.shape()[2], cache.x.shape()[3]];
    if grad_y.shape() != expected {
        return Err(Error::Dimension(format!(
            "grad_y shape {:?} does not match block output {:?}",
            grad_y.shape(),
            expected
        )));
    }
    let h = cfg.half();
    let on = pathway_backward(
        &grad_y.slice_channels(0, h)?,
        &cache.x,
        &cache.z1_on,
        &cache.a1_on,
        &cache.z2_on,
        &p.w1_on,
        &p.w2_on,
        &p.fixed_on,
        cfg.activation,
    )?;
    let off = pathway_backward(
        &grad_y.slice_channels(h, h)?,
        &cache.x,
        &cache.z1_off,
        &cache.a1_off,
        &cache.z2_off,
        &p.w1_off,
        &p.w2_off,
        &p.fixed_off,
        cfg.activation,
    )?;
    let mut gx = on.x;
    add_assign(&mut gx, &off.x);
    Ok((
        gx,
        BlockGrads {
            w1_on: on.w1,
            w1_off: off.w1,
            w2_on: on.w2,
            w2_off: off.w2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(matches!(OocsBlockConfig::new(1, 3, 3), Err(Error::Config(_))));
        assert!(matches!(OocsBlockConfig::new(0, 4, 3), Err(Error::Config(_))));
        assert!(matches!(OocsBlockConfig::new(1, 4, 4), Err(Error::InvalidKernel(_))));
        assert!(OocsBlockConfig::new(2, 4, 5).is_ok());
    }

    #[test]
    fn lift_single_channel_is_the_kernel() {
        let k = make_kernel(&KernelSpec::preset(3).unwrap(), Polarity::On).unwrap();
        let w = lift_kernel(&k, 1, 1).unwrap();
        assert_eq!(w.data(), k.weights());
        assert_eq!(w.shape(), [1, 1, 3, 3, 3]);
    }

    #[test]
    fn lift_preserves_zero_sum() {
        let k = make_kernel(&KernelSpec::preset(5).unwrap(), Polarity::On).unwrap();
        let w = lift_kernel(&k, 3, 2).unwrap();
        assert!(w.data().iter().sum::<f64>().abs() < 1e-9);
        assert!(lift_kernel(&k, 0, 2).is_err());
        let k2 = make_kernel(&KernelSpec::new(3, 0.5, 3.0, KernelDims::Two).unwrap(), Polarity::On)
            .unwrap();
        assert!(matches!(lift_kernel(&k2, 1, 1), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn fixed_off_is_exact_negation() {
        let cfg = OocsBlockConfig::new(2, 4, 5).unwrap();
        let p = OocsBlockParams::init(&cfg, 3).unwrap();
        for (a, b) in p.fixed_on().data().iter().zip(p.fixed_off().data()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn parameter_counts_closed_form() {
        for &(c_in, c_out) in &[(1, 4), (2, 8), (3, 6)] {
            let cfg = OocsBlockConfig::new(c_in, c_out, 3).unwrap();
            let p = OocsBlockParams::init(&cfg, 0).unwrap();
            let k3 = 27;
            let expected = c_out * c_in * k3 + c_out * c_out * k3 / 2 + 2 * c_out;
            assert_eq!(p.learnable_parameter_count(), expected);
            // the split second layer carries half the plain block's weights
            assert!(p.learnable_parameter_count() <= plain_block_parameter_count(c_in, c_out, 3));
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let cfg = OocsBlockConfig::new(2, 4, 3).unwrap();
        let p = OocsBlockParams::init(&cfg, 1).unwrap();
        let x = FeatureMap::zeros([3, 4, 4, 4]).unwrap();
        assert!(matches!(block_forward(&x, &p, &cfg), Err(Error::Dimension(_))));
        let x = FeatureMap::zeros([2, 4, 4, 4]).unwrap();
        let (_, cache) = block_forward(&x, &p, &cfg).unwrap();
        let bad = FeatureMap::zeros([2, 4, 4, 4]).unwrap();
        assert!(matches!(block_backward(&bad, &cache, &p, &cfg), Err(Error::Dimension(_))));
    }
}
