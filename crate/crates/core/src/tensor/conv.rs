//! Direct 3D convolution, forward and backward.
//!
//! Convention: cross-correlation, weights applied as stored (no flip):
//!
//! `out[o, z, y, x] = bias[o] + Σ_i Σ_{a,b,c} in[i, z+a, y+b, x+c] · w[o, i, a, b, c]`
//!
//! on the (optionally zero-padded) input. `SameZero` pads by `k / 2` on every
//! side so the spatial shape is preserved; `Valid` shrinks each axis by `k - 1`.
//!
//! Work is split across threads by output plane (forward), by `(o, i)` weight
//! block and input plane (backward). Every output value is accumulated by a
//! single thread in a fixed order, bias first then `(i, a, b, c)`
//! lexicographically, so results are bit-identical for any thread count.

use rayon::prelude::*;

use super::{pad_zero, ConvWeights, FeatureMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    SameZero,
    Valid,
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" | "same_zero" => Ok(Padding::SameZero),
            "valid" => Ok(Padding::Valid),
            other => Err(Error::Config(format!("unknown padding '{other}'"))),
        }
    }
}

/// Gradients of a convolution with respect to its input and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: FeatureMap,
    /// Same shape as the forward weights; carries a bias gradient iff the
    /// forward weights had a bias.
    pub weights: ConvWeights,
}

fn padded_input(input: &FeatureMap, w: &ConvWeights, padding: Padding) -> Result<FeatureMap> {
    if input.channels() != w.c_in() {
        return Err(Error::Dimension(format!(
            "input has {} channels, weights expect {}",
            input.channels(),
            w.c_in()
        )));
    }
    let k = w.k();
    match padding {
        Padding::SameZero => {
            let m = k / 2;
            Ok(pad_zero(input, [m, m, m]))
        }
        Padding::Valid => {
            if input.spatial_shape().iter().any(|&d| d < k) {
                return Err(Error::Dimension(format!(
                    "valid convolution needs every spatial dim >= {k}, got {:?}",
                    input.spatial_shape()
                )));
            }
            Ok(input.clone())
        }
    }
}

fn output_dims(padded: [usize; 3], k: usize) -> [usize; 3] {
    [padded[0] - k + 1, padded[1] - k + 1, padded[2] - k + 1]
}

pub fn conv3d_forward(input: &FeatureMap, w: &ConvWeights, padding: Padding) -> Result<FeatureMap> {
    let xp = padded_input(input, w, padding)?;
    let k = w.k();
    let [_, pd, ph, pw] = xp.shape();
    let [od, oh, ow] = output_dims([pd, ph, pw], k);
    let c_in = w.c_in();
    let c_out = w.c_out();
    let plane = oh * ow;
    let mut out = vec![0.0; c_out * od * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(idx, dst)| {
        let o = idx / od;
        let z = idx % od;
        if let Some(b) = w.bias() {
            dst.fill(b[o]);
        }
        for i in 0..c_in {
            let src = xp.channel(i);
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        let wv = w.data()[w.index(o, i, a, b, c)];
                        for y in 0..oh {
                            let s = ((z + a) * ph + y + b) * pw + c;
                            let row = &src[s..s + ow];
                            let out_row = &mut dst[y * ow..(y + 1) * ow];
                            for (acc, &v) in out_row.iter_mut().zip(row) {
                                *acc += wv * v;
                            }
                        }
                    }
                }
            }
        }
    });

    FeatureMap::new(out, [c_out, od, oh, ow])
}

pub fn conv3d_backward(
    input: &FeatureMap,
    w: &ConvWeights,
    grad_out: &FeatureMap,
    padding: Padding,
) -> Result<ConvGrads> {
    let xp = padded_input(input, w, padding)?;
    let k = w.k();
    let [_, pd, ph, pw] = xp.shape();
    let [od, oh, ow] = output_dims([pd, ph, pw], k);
    let (c_in, c_out) = (w.c_in(), w.c_out());
    if grad_out.shape() != [c_out, od, oh, ow] {
        return Err(Error::Dimension(format!(
            "grad_out shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            [c_out, od, oh, ow]
        )));
    }

    // dL/dw[o, i, a, b, c] = Σ_{z,y,x} xp[i, z+a, y+b, x+c] · g[o, z, y, x]
    let k3 = k * k * k;
    let mut gw = vec![0.0; c_out * c_in * k3];
    gw.par_chunks_mut(k3).enumerate().for_each(|(idx, dst)| {
        let o = idx / c_in;
        let i = idx % c_in;
        let g = grad_out.channel(o);
        let src = xp.channel(i);
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let mut acc = 0.0;
                    for z in 0..od {
                        for y in 0..oh {
                            let s = ((z + a) * ph + y + b) * pw + c;
                            let grow = &g[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                            for (&gv, &v) in grow.iter().zip(&src[s..s + ow]) {
                                acc += gv * v;
                            }
                        }
                    }
                    dst[(a * k + b) * k + c] = acc;
                }
            }
        }
    });
    let gb = w.bias().map(|_| {
        (0..c_out)
            .map(|o| grad_out.channel(o).iter().sum::<f64>())
            .collect::<Vec<_>>()
    });

    // dL/dxp[i, p, q, r] = Σ_o Σ_{a,b,c} w[o, i, a, b, c] · g[o, p-a, q-b, r-c]
    let pplane = ph * pw;
    let mut gxp = vec![0.0; c_in * pd * pplane];
    gxp.par_chunks_mut(pplane).enumerate().for_each(|(idx, dst)| {
        let i = idx / pd;
        let p = idx % pd;
        for o in 0..c_out {
            let g = grad_out.channel(o);
            for a in 0..k {
                if p < a || p - a >= od {
                    continue;
                }
                let z = p - a;
                for b in 0..k {
                    for c in 0..k {
                        let wv = w.data()[w.index(o, i, a, b, c)];
                        for y in 0..oh {
                            let q = y + b;
                            let grow = &g[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                            let drow = &mut dst[q * pw + c..q * pw + c + ow];
                            for (acc, &gv) in drow.iter_mut().zip(grow) {
                                *acc += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    });

    let gxp = FeatureMap::new(gxp, [c_in, pd, ph, pw])?;
    let grad_input = match padding {
        Padding::Valid => gxp,
        Padding::SameZero => crop_center(&gxp, k / 2, input.spatial_shape()),
    };
    Ok(ConvGrads {
        input: grad_input,
        weights: ConvWeights::new(gw, w.shape(), gb)?,
    })
}

fn crop_center(fm: &FeatureMap, m: usize, dims: [usize; 3]) -> FeatureMap {
    let [c, _, ph, pw] = fm.shape();
    let [d, h, w] = dims;
    let mut data = Vec::with_capacity(c * d * h * w);
    for ch in 0..c {
        let src = fm.channel(ch);
        for z in 0..d {
            for y in 0..h {
                let s = ((z + m) * ph + y + m) * pw + m;
                data.extend_from_slice(&src[s..s + w]);
            }
        }
    }
    FeatureMap::new(data, [c, d, h, w]).expect("cropped geometry is valid")
}
