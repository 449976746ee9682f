#![allow(dead_code)]

use oocs_core::block::{OocsBlockConfig, OocsBlockParams};
use oocs_core::metrics::BinaryMask;
use oocs_core::rng::{seeded, SeededRng, Stream};
use oocs_core::tensor::{ConvWeights, FeatureMap, Padding};
use rand::Rng;

pub fn rng(seed: u64) -> SeededRng {
    seeded(seed, Stream::Testing)
}

pub fn uniform(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Direct correlation with bounds checks standing in for zero padding.
pub fn naive_conv(x: &FeatureMap, w: &ConvWeights, padding: Padding) -> FeatureMap {
    let [ci, d, h, wd] = x.shape();
    let [co, _, k, _, _] = w.shape();
    let (p, od, oh, ow) = match padding {
        Padding::SameZero => ((k / 2) as i64, d, h, wd),
        Padding::Valid => (0, d + 1 - k, h + 1 - k, wd + 1 - k),
    };
    let mut out = vec![0.0; co * od * oh * ow];
    for o in 0..co {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = w.bias().map_or(0.0, |b| b[o]);
                    for i in 0..ci {
                        for a in 0..k {
                            for b in 0..k {
                                for c in 0..k {
                                    let sz = z as i64 + a as i64 - p;
                                    let sy = y as i64 + b as i64 - p;
                                    let sx = xx as i64 + c as i64 - p;
                                    if sz < 0 || sy < 0 || sx < 0 {
                                        continue;
                                    }
                                    let (sz, sy, sx) = (sz as usize, sy as usize, sx as usize);
                                    if sz >= d || sy >= h || sx >= wd {
                                        continue;
                                    }
                                    let xv = x.data()[((i * d + sz) * h + sy) * wd + sx];
                                    let wv = w.data()[(((o * ci + i) * k + a) * k + b) * k + c];
                                    acc += xv * wv;
                                }
                            }
                        }
                    }
                    out[((o * od + z) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    FeatureMap::new(out, [co, od, oh, ow]).unwrap()
}

fn relu(v: &FeatureMap) -> FeatureMap {
    v.map(|x| x.max(0.0))
}

fn add(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    FeatureMap::new(data, a.shape()).unwrap()
}

/// The encoder block written out directly from its definition.
pub fn naive_block(x: &FeatureMap, p: &OocsBlockParams, _cfg: &OocsBlockConfig) -> FeatureMap {
    let same = Padding::SameZero;
    let a1_on = relu(&add(&naive_conv(x, &p.w1_on, same), &naive_conv(x, p.fixed_on(), same)));
    let a1_off = relu(&add(&naive_conv(x, &p.w1_off, same), &naive_conv(x, p.fixed_off(), same)));
    let a2_on = relu(&naive_conv(&a1_on, &p.w2_on, same));
    let a2_off = relu(&naive_conv(&a1_off, &p.w2_off, same));
    let mut data = a2_on.data().to_vec();
    data.extend_from_slice(a2_off.data());
    let [c, d, h, w] = a2_on.shape();
    FeatureMap::new(data, [2 * c, d, h, w]).unwrap()
}

pub fn random_mask(rng: &mut SeededRng, shape: [usize; 3], spacing: [f64; 3], p: f64) -> BinaryMask {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_bool(p)).collect();
    BinaryMask::new(data, shape, spacing).unwrap()
}

pub fn brute_dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let na = a.data().iter().filter(|&&v| v).count();
    let nb = b.data().iter().filter(|&&v| v).count();
    let both = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

fn coords(m: &BinaryMask) -> Vec<[usize; 3]> {
    let [_, h, w] = m.shape();
    m.data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| [i / (h * w), (i / w) % h, i % w])
        .collect()
}

/// All-pairs symmetric Hausdorff distance.
pub fn brute_hausdorff(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let s = a.spacing();
    let d2 = |p: [usize; 3], q: [usize; 3]| {
        let dz = (p[0] as f64 - q[0] as f64) * s[0];
        let dy = (p[1] as f64 - q[1] as f64) * s[1];
        let dx = (p[2] as f64 - q[2] as f64) * s[2];
        dz * dz + dy * dy + dx * dx
    };
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        from.iter()
            .map(|&p| to.iter().map(|&q| d2(p, q).sqrt()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let (pa, pb) = (coords(a), coords(b));
    directed(&pa, &pb).max(directed(&pb, &pa))
}
