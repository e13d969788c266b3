//! Augmented-Lagrangian constrained training.
//!
//! The trainer minimises the wild-data objective subject to two
//! inequality constraints on the labeled in-distribution data:
//!
//! ```text
//! min  mean_wild L_in(x̃)
//! s.t. mean_id L_out(x) ≤ α        (ID samples kept "in")
//!      mean_id CE(x, y) ≤ τ        (classification quality)
//! ```
//!
//! Each constraint `c ≤ 0` enters through `ψ_β(c, λ)`, the classical
//! augmented-Lagrangian term for inequalities. λ is updated by dual ascent
//! at the end of every epoch and β grows geometrically while a constraint
//! stays violated beyond the tolerance.

mod lagrangian;
mod reference;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lagrangian::{
    batch_lagrangian, batch_lagrangian_with, constraint_values, full_lagrangian, wild_objective,
    BatchLoss, IdSample, OodLossKind,
};
pub use reference::{alm_reference_solve, augmented_value, ConstrainedProblem, QuadraticProblem, ReferenceSchedule, ReferenceSolution};
pub use trainer::{calibrate_tau, woods_nn_head_train, woods_train, woods_train_with};

/// Constraint levels: α for the ID OOD-loss, τ for the classification loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub alpha: f64,
    pub tau: f64,
    pub tol: f64,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            tau: f64::INFINITY,
            tol: 0.05,
        }
    }
}

impl ConstraintSpec {
    /// α must lie in (0, 1]; α = 1 makes the OOD constraint vacuous.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::config(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::config(format!("tol must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Dual variables, penalty weights and their update rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub mu2: f64,
}

impl AlmState {
    /// λ starts at zero.
    pub fn new(beta1: f64, beta2: f64, gamma: f64, mu2: f64) -> Result<Self> {
        let state = Self {
            lambda1: 0.0,
            lambda2: 0.0,
            beta1,
            beta2,
            gamma,
            mu2,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta2 > 0.0) {
            return Err(Error::config("penalty weights must be positive"));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::config("penalty multiplier must exceed 1"));
        }
        if !(self.mu2 > 0.0) {
            return Err(Error::config("dual learning rate must be positive"));
        }
        Ok(())
    }
}

/// One row of the training trajectory. Constraint values are raw means
/// over the full ID training set (not shifted by α or τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub ood_constraint: f64,
    pub cls_constraint: f64,
    pub objective: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,ood_constraint,cls_constraint,objective,lambda1,lambda2,beta1,beta2";

/// Render logs as CSV with [`EPOCH_LOG_HEADER`].
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.epoch, l.ood_constraint, l.cls_constraint, l.objective, l.lambda1, l.lambda2, l.beta1, l.beta2
        ));
    }
    out
}

/// `ψ_β(u, v) = uv + (β/2)u²` if `βu + v ≥ 0`, else `−v²/(2β)`.
pub fn psi(u: f64, v: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    Ok(psi_unchecked(u, v, beta))
}

#[inline]
pub(crate) fn psi_unchecked(u: f64, v: f64, beta: f64) -> f64 {
    if beta * u + v >= 0.0 {
        u * v + 0.5 * beta * u * u
    } else {
        -v * v / (2.0 * beta)
    }
}

/// `(∂ψ/∂u, ∂ψ/∂v)`: `(v + βu, u)` on the active branch, `(0, −v/β)` otherwise.
pub fn psi_grad(u: f64, v: f64, beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    Ok(psi_grad_unchecked(u, v, beta))
}

#[inline]
pub(crate) fn psi_grad_unchecked(u: f64, v: f64, beta: f64) -> (f64, f64) {
    if beta * u + v >= 0.0 {
        (v + beta * u, u)
    } else {
        (0.0, -v / beta)
    }
}

/// `λᵢ ← λᵢ + μ₂ ∂ψ_{βᵢ}/∂v (uᵢ, λᵢ)` with `u₁ = ood − α`, `u₂ = cls − τ`.
/// λ is not clamped.
pub fn dual_ascent_update(state: &AlmState, spec: &ConstraintSpec, ood_value: f64, cls_value: f64) -> AlmState {
    let (_, d1) = psi_grad_unchecked(ood_value - spec.alpha, state.lambda1, state.beta1);
    let (_, d2) = psi_grad_unchecked(cls_value - spec.tau, state.lambda2, state.beta2);
    AlmState {
        lambda1: state.lambda1 + state.mu2 * d1,
        lambda2: state.lambda2 + state.mu2 * d2,
        ..*state
    }
}

/// Grow each βᵢ by γ when its constraint exceeds its level by more than `tol`.
pub fn penalty_update(state: &AlmState, spec: &ConstraintSpec, ood_value: f64, cls_value: f64) -> AlmState {
    let mut next = *state;
    if ood_value > spec.alpha + spec.tol {
        next.beta1 *= state.gamma;
    }
    if cls_value > spec.tau + spec.tol {
        next.beta2 *= state.gamma;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psi_table() {
        assert_eq!(psi(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(psi(0.0, 0.0, 7.5).unwrap(), 0.0);
        assert_eq!(psi(1.0, 1.0, 1.0).unwrap(), 1.5);
        assert_eq!(psi(-2.0, 1.0, 1.0).unwrap(), -0.5);
        assert!(matches!(psi(1.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(psi_grad(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn psi_grad_table() {
        assert_eq!(psi_grad(1.0, 1.0, 1.0).unwrap(), (2.0, 1.0));
        assert_eq!(psi_grad(-2.0, 1.0, 1.0).unwrap(), (0.0, -1.0));
        // boundary βu + v = 0 takes the first branch and agrees with the second
        let (du, dv) = psi_grad(-1.0, 1.0, 1.0).unwrap();
        assert_eq!((du, dv), (0.0, -1.0));
        assert_eq!(psi(-1.0, 1.0, 1.0).unwrap(), -0.5);
    }

    #[test]
    fn dual_ascent_examples() {
        let spec = ConstraintSpec {
            alpha: 0.05,
            tau: 1.0,
            tol: 0.05,
        };
        let s = AlmState::new(1.0, 1.0, 1.5, 0.5).unwrap();
        let next = dual_ascent_update(&s, &spec, 0.15, 1.0);
        assert!((next.lambda1 - 0.5 * 0.1).abs() < 1e-15);
        assert_eq!(next.lambda2, 0.0);

        let s = AlmState {
            lambda1: 1.0,
            ..s
        };
        let next = dual_ascent_update(&s, &spec, 0.05 - 5.0, 1.0);
        assert_eq!(next.lambda1, 1.0 - 0.5);
    }

    #[test]
    fn penalty_examples() {
        let spec = ConstraintSpec {
            alpha: 0.05,
            tau: 0.5,
            tol: 0.05,
        };
        let s = AlmState::new(2.0, 3.0, 1.5, 1.0).unwrap();
        let same = penalty_update(&s, &spec, spec.alpha + spec.tol, 0.1);
        assert_eq!(same, s);
        let grown = penalty_update(&s, &spec, spec.alpha + spec.tol + 0.01, 0.1);
        assert_eq!(grown.beta1, 3.0);
        assert_eq!(grown.beta2, 3.0);
        let both = penalty_update(&s, &spec, 0.9, 0.9);
        assert_eq!((both.beta1, both.beta2), (3.0, 4.5));
    }

    #[test]
    fn spec_and_state_validation() {
        assert!(ConstraintSpec { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(ConstraintSpec { alpha: 1.0, ..Default::default() }.validate().is_ok());
        assert!(ConstraintSpec { tau: -1.0, ..Default::default() }.validate().is_err());
        assert!(AlmState::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(AlmState::new(0.0, 1.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn epoch_log_csv_layout() {
        let csv = epoch_log_csv(&[EpochLog {
            epoch: 0,
            ood_constraint: 0.5,
            cls_constraint: 0.25,
            objective: 0.125,
            lambda1: 0.0,
            lambda2: -1.0,
            beta1: 1.0,
            beta2: 1.5,
        }]);
        assert_eq!(csv, format!("{EPOCH_LOG_HEADER}\n0,0.5,0.25,0.125,0,-1,1,1.5\n"));
    }

    proptest! {
        #[test]
        fn psi_convex_in_u(a in -10.0f64..10.0, b in -10.0f64..10.0, v in -10.0f64..10.0, beta in 0.01f64..10.0) {
            let mid = psi(0.5 * (a + b), v, beta).unwrap();
            let avg = 0.5 * (psi(a, v, beta).unwrap() + psi(b, v, beta).unwrap());
            prop_assert!(mid <= avg + 1e-12);
        }

        #[test]
        fn penalties_never_decrease(ood in 0.0f64..1.0, cls in 0.0f64..3.0, b1 in 0.1f64..10.0, b2 in 0.1f64..10.0) {
            let spec = ConstraintSpec { alpha: 0.05, tau: 0.5, tol: 0.05 };
            let s = AlmState::new(b1, b2, 1.5, 1.0).unwrap();
            let next = penalty_update(&s, &spec, ood, cls);
            prop_assert!(next.beta1 >= s.beta1 && next.beta2 >= s.beta2);
        }
    }
}
