//! Dense 4D activation tensors, 3D convolution weights, zero padding, and the
//! convolution engine in [`conv`].

pub mod conv;

pub use conv::{conv3d_backward, conv3d_forward, ConvGrads, Padding};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// `(C, D, H, W)` activations, C order, W fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Vec<f64>,
    shape: [usize; 4],
}

impl FeatureMap {
    pub fn new(data: Vec<f64>, shape: [usize; 4]) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "feature map shape {shape:?} has a zero extent"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "feature map shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::new(vec![0.0; shape.iter().product()], shape)
    }

    /// Single-channel view of a volume; spacing is dropped.
    pub fn from_volume(v: &Volume) -> Self {
        let [d, h, w] = v.shape();
        Self {
            data: v.data().to_vec(),
            shape: [1, d, h, w],
        }
    }

    /// Extracts one channel as a volume with the given spacing.
    pub fn channel_volume(&self, channel: usize, spacing: [f64; 3]) -> Result<Volume> {
        if channel >= self.shape[0] {
            return Err(Error::Dimension(format!(
                "channel {channel} out of range for {} channels",
                self.shape[0]
            )));
        }
        Volume::new(
            self.channel(channel).to_vec(),
            [self.shape[1], self.shape[2], self.shape[3]],
            spacing,
        )
    }

    /// Stacks feature maps along the channel axis.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("nothing to concatenate".into()))?;
        let spatial = first.spatial_shape();
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.spatial_shape() != spatial {
                return Err(Error::Dimension(format!(
                    "cannot concatenate spatial shapes {:?} and {:?}",
                    spatial,
                    p.spatial_shape()
                )));
            }
            channels += p.channels();
            data.extend_from_slice(&p.data);
        }
        Self::new(data, [channels, spatial[0], spatial[1], spatial[2]])
    }

    /// Channel range `[start, start + count)` as a new map.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.channels() {
            return Err(Error::Dimension(format!(
                "channel slice {start}..{} out of range for {} channels",
                start + count,
                self.channels()
            )));
        }
        let n = self.channel_len();
        Self::new(
            self.data[start * n..(start + count) * n].to_vec(),
            [count, self.shape[1], self.shape[2], self.shape[3]],
        )
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn spatial_shape(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn channel_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        ((c * self.shape[1] + z) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape,
        }
    }
}

/// Weights of a dense 3D convolution, shape `(C_out, C_in, k, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    data: Vec<f64>,
    shape: [usize; 5],
    bias: Option<Vec<f64>>,
}

impl ConvWeights {
    pub fn new(data: Vec<f64>, shape: [usize; 5], bias: Option<Vec<f64>>) -> Result<Self> {
        let [c_out, c_in, kd, kh, kw] = shape;
        if kd != kh || kh != kw {
            return Err(Error::InvalidKernel(format!(
                "kernel must be cubic, got {kd}x{kh}x{kw}"
            )));
        }
        if kd % 2 == 0 {
            return Err(Error::InvalidKernel(format!(
                "kernel size must be odd, got {kd}"
            )));
        }
        if c_out == 0 || c_in == 0 {
            return Err(Error::Dimension(format!("weight shape {shape:?} is empty")));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "weight shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(Error::Dimension(format!(
                    "bias length {} does not match {c_out} output channels",
                    b.len()
                )));
            }
        }
        Ok(Self { data, shape, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize, with_bias: bool) -> Result<Self> {
        Self::new(
            vec![0.0; c_out * c_in * k * k * k],
            [c_out, c_in, k, k, k],
            with_bias.then(|| vec![0.0; c_out]),
        )
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn c_out(&self) -> usize {
        self.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.shape[1]
    }

    pub fn k(&self) -> usize {
        self.shape[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut [f64]> {
        self.bias.as_deref_mut()
    }

    /// Weights plus bias entries.
    pub fn parameter_count(&self) -> usize {
        self.data.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, a: usize, b: usize, c: usize) -> usize {
        let k = self.shape[2];
        (((o * self.shape[1] + i) * k + a) * k + b) * k + c
    }

    pub fn negated(&self) -> Self {
        Self {
            data: self.data.iter().map(|v| -v).collect(),
            shape: self.shape,
            bias: self.bias.as_ref().map(|b| b.iter().map(|v| -v).collect()),
        }
    }
}

/// Types that can be grown by zero borders along their three spatial axes.
pub trait PadZero: Sized {
    fn pad_zero(&self, margin: [usize; 3]) -> Self;
}

/// Zero-pads `v` by `margin` voxels on both sides of each spatial axis.
pub fn pad_zero<T: PadZero>(v: &T, margin: [usize; 3]) -> T {
    v.pad_zero(margin)
}

fn pad_block(src: &[f64], dims: [usize; 3], margin: [usize; 3], dst: &mut [f64]) {
    let [d, h, w] = dims;
    let [pd, ph, pw] = margin;
    let (nh, nw) = (h + 2 * ph, w + 2 * pw);
    for z in 0..d {
        for y in 0..h {
            let s = (z * h + y) * w;
            let t = ((z + pd) * nh + y + ph) * nw + pw;
            dst[t..t + w].copy_from_slice(&src[s..s + w]);
        }
    }
}

impl PadZero for FeatureMap {
    fn pad_zero(&self, margin: [usize; 3]) -> Self {
        if margin == [0; 3] {
            return self.clone();
        }
        let [c, d, h, w] = self.shape;
        let shape = [
            c,
            d + 2 * margin[0],
            h + 2 * margin[1],
            w + 2 * margin[2],
        ];
        let out_len = shape[1] * shape[2] * shape[3];
        let mut data = vec![0.0; c * out_len];
        for ch in 0..c {
            pad_block(
                self.channel(ch),
                [d, h, w],
                margin,
                &mut data[ch * out_len..(ch + 1) * out_len],
            );
        }
        Self { data, shape }
    }
}

impl PadZero for Volume {
    fn pad_zero(&self, margin: [usize; 3]) -> Self {
        let [d, h, w] = self.shape();
        let shape = [d + 2 * margin[0], h + 2 * margin[1], w + 2 * margin[2]];
        let mut data = vec![0.0; shape.iter().product()];
        pad_block(self.data(), [d, h, w], margin, &mut data);
        Volume::new(data, shape, self.spacing()).expect("padded geometry is valid")
    }
}
