//! Scalar losses and scores with their derivatives.
//!
//! Every exponential goes through a max-shift or a sign branch, so the
//! functions here stay finite for any finite input.

use crate::error::{Error, Result};

/// A loss value with its gradient w.r.t. the logits and, for losses that
/// involve the energy slope, w.r.t. `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_logits: Vec<f64>,
    pub grad_w: Option<f64>,
}

/// Sigmoid loss of a scalar energy: value and partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidLoss {
    pub value: f64,
    pub grad_energy: f64,
    pub grad_w: f64,
}

/// Hinge losses of the OOD head score `g` and their (sub)gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeLosses {
    /// `max(1 − g, 0)`: paid by wild samples not scored as outliers.
    pub loss_in: f64,
    /// `max(1 + g, 0)`: paid by in-distribution samples scored as outliers.
    pub loss_out: f64,
    pub grad_in: f64,
    pub grad_out: f64,
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let (max, rest) = shifted_tail(logits);
    max + rest.ln_1p()
}

/// `(max, Σ_{j ≠ argmax} exp(f_j − max))`; keeps `ln_1p` precision when one
/// logit dominates.
fn shifted_tail(logits: &[f64]) -> (f64, f64) {
    let (arg, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ai, am), (i, v)| {
            if v > am {
                (i, v)
            } else {
                (ai, am)
            }
        });
    if !max.is_finite() {
        return (max, 0.0);
    }
    let rest = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg)
        .map(|(_, &z)| (z - max).exp())
        .sum();
    (max, rest)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[y]`, gradient `softmax − onehot(y)`.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<LossValue> {
    if y >= logits.len() {
        return Err(Error::Index {
            label: y,
            classes: logits.len(),
        });
    }
    let (max, rest) = shifted_tail(logits);
    let mut grad = softmax(logits);
    grad[y] -= 1.0;
    Ok(LossValue {
        value: ((max - logits[y]) + rest.ln_1p()).max(0.0),
        grad_logits: grad,
        grad_w: None,
    })
}

/// Energy `E = log Σ_j exp(f_j)`; its gradient w.r.t. the logits is the softmax.
pub fn energy_score(logits: &[f64]) -> f64 {
    log_sum_exp(logits)
}

/// `σ(w·E)`: the wild-sample objective (a wild sample kept "in").
pub fn ood_loss_in(energy: f64, w: f64) -> SigmoidLoss {
    let z = w * energy;
    let s = sigmoid(z);
    let slope = s * sigmoid(-z);
    SigmoidLoss {
        value: s,
        grad_energy: w * slope,
        grad_w: energy * slope,
    }
}

/// `σ(−w·E)`: the in-distribution constraint term (an ID sample sent "out").
pub fn ood_loss_out(energy: f64, w: f64) -> SigmoidLoss {
    let z = -w * energy;
    let s = sigmoid(z);
    let slope = s * sigmoid(-z);
    SigmoidLoss {
        value: s,
        grad_energy: -w * slope,
        grad_w: -energy * slope,
    }
}

/// [`ood_loss_in`] composed with the energy of `logits`.
pub fn ood_loss_in_logits(logits: &[f64], w: f64) -> LossValue {
    compose_energy(logits, ood_loss_in(energy_score(logits), w))
}

/// [`ood_loss_out`] composed with the energy of `logits`.
pub fn ood_loss_out_logits(logits: &[f64], w: f64) -> LossValue {
    compose_energy(logits, ood_loss_out(energy_score(logits), w))
}

fn compose_energy(logits: &[f64], l: SigmoidLoss) -> LossValue {
    LossValue {
        value: l.value,
        grad_logits: softmax(logits)
            .into_iter()
            .map(|p| l.grad_energy * p)
            .collect(),
        grad_w: Some(l.grad_w),
    }
}

/// Hinge losses of the head score. At the kinks the subgradient is 0.
pub fn hinge_head_losses(g: f64) -> HingeLosses {
    let a = 1.0 - g;
    let b = 1.0 + g;
    HingeLosses {
        loss_in: a.max(0.0),
        loss_out: b.max(0.0),
        grad_in: if a > 0.0 { -1.0 } else { 0.0 },
        grad_out: if b > 0.0 { 1.0 } else { 0.0 },
    }
}

/// Maximum softmax probability; higher means more in-distribution.
pub fn msp_score(logits: &[f64]) -> f64 {
    softmax(logits).into_iter().fold(0.0, f64::max)
}

/// Cross-entropy between the softmax and the uniform distribution, minus
/// the constant `ln K`: `logsumexp(f) − mean(f)`. Zero gradient at uniform logits.
pub fn uniform_cross_entropy(logits: &[f64]) -> LossValue {
    let k = logits.len() as f64;
    let mean = logits.iter().sum::<f64>() / k;
    LossValue {
        value: log_sum_exp(logits) - mean,
        grad_logits: softmax(logits).into_iter().map(|p| p - 1.0 / k).collect(),
        grad_w: None,
    }
}

/// Squared hinge on the free energy `F = −E` of an in-distribution sample:
/// `max(0, F − m_in)²`.
pub fn energy_margin_in(logits: &[f64], m_in: f64) -> LossValue {
    let free = -energy_score(logits);
    let gap = (free - m_in).max(0.0);
    // dF/dlogits = −softmax
    let scale = -2.0 * gap;
    LossValue {
        value: gap * gap,
        grad_logits: softmax(logits).into_iter().map(|p| scale * p).collect(),
        grad_w: None,
    }
}

/// Squared hinge on the free energy of a wild sample: `max(0, m_out − F)²`.
pub fn energy_margin_out(logits: &[f64], m_out: f64) -> LossValue {
    let free = -energy_score(logits);
    let gap = (m_out - free).max(0.0);
    let scale = 2.0 * gap;
    LossValue {
        value: gap * gap,
        grad_logits: softmax(logits).into_iter().map(|p| scale * p).collect(),
        grad_w: None,
    }
}
