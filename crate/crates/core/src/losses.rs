//! Binary cross-entropy, soft Dice, and their weighted sum, each returning
//! the loss value together with its gradient with respect to the logits.

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

pub const DEFAULT_DICE_EPSILON: f64 = 1.0;

/// Single-channel logits with a matching {0, 1} target.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    logits: FeatureMap,
    target: Vec<f64>,
    epsilon: f64,
}

impl PredictionPair {
    pub fn new(logits: FeatureMap, target: Vec<f64>, epsilon: f64) -> Result<Self> {
        if logits.channels() != 1 {
            return Err(Error::Dimension(format!(
                "logits must have one channel, got {}",
                logits.channels()
            )));
        }
        if target.len() != logits.len() {
            return Err(Error::Dimension(format!(
                "target has {} voxels, logits have {}",
                target.len(),
                logits.len()
            )));
        }
        if let Some(bad) = target.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::Domain(format!("target values must be 0 or 1, found {bad}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            logits,
            target,
            epsilon,
        })
    }

    pub fn logits(&self) -> &FeatureMap {
        &self.logits
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: FeatureMap,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn with_grad(p: &PredictionPair, grad: Vec<f64>) -> FeatureMap {
    FeatureMap::new(grad, p.logits.shape()).expect("gradient matches logits shape")
}

/// Mean of `max(z, 0) - z·t + ln(1 + e^{-|z|})`; gradient `(σ(z) - t) / N`.
pub fn bce_loss(p: &PredictionPair) -> LossOutput {
    let n = p.target.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(p.target.len());
    for (&z, &t) in p.logits.data().iter().zip(&p.target) {
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - t) / n);
    }
    LossOutput {
        value: total / n,
        grad: with_grad(p, grad),
    }
}

/// `1 - (2·Σ s·t + ε) / (Σ s + Σ t + ε)` with `s = σ(z)`.
pub fn soft_dice_loss(p: &PredictionPair) -> LossOutput {
    let s: Vec<f64> = p.logits.data().iter().map(|&z| sigmoid(z)).collect();
    let eps = p.epsilon;
    let inter: f64 = s.iter().zip(&p.target).map(|(a, b)| a * b).sum();
    let sum_s: f64 = s.iter().sum();
    let sum_t: f64 = p.target.iter().sum();
    let num = 2.0 * inter + eps;
    let den = sum_s + sum_t + eps;
    let grad = s
        .iter()
        .zip(&p.target)
        .map(|(&si, &ti)| {
            let dl_ds = -(2.0 * ti * den - num) / (den * den);
            dl_ds * si * (1.0 - si)
        })
        .collect();
    LossOutput {
        value: 1.0 - num / den,
        grad: with_grad(p, grad),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { bce: 1.0, dice: 1.0 }
    }
}

pub fn bce_dice_loss(p: &PredictionPair, w_bce: f64, w_dice: f64) -> Result<LossOutput> {
    if !(w_bce >= 0.0 && w_dice >= 0.0) || !(w_bce.is_finite() && w_dice.is_finite()) {
        return Err(Error::Config(format!(
            "loss weights must be finite and non-negative, got ({w_bce}, {w_dice})"
        )));
    }
    if w_bce == 0.0 && w_dice == 0.0 {
        return Err(Error::Config("loss weights cannot both be zero".into()));
    }
    let bce = bce_loss(p);
    let dice = soft_dice_loss(p);
    let grad = bce
        .grad
        .data()
        .iter()
        .zip(dice.grad.data())
        .map(|(gb, gd)| w_bce * gb + w_dice * gd)
        .collect();
    Ok(LossOutput {
        value: w_bce * bce.value + w_dice * dice.value,
        grad: with_grad(p, grad),
    })
}
