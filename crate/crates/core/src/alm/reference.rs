use super::{psi_grad_unchecked, psi_unchecked};
use crate::error::{Error, Result};

/// A smooth problem `min f(x) s.t. cᵢ(x) ≤ 0`.
pub trait ConstrainedProblem {
    fn dim(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    fn objective_grad(&self, x: &[f64]) -> Vec<f64>;
    fn num_constraints(&self) -> usize;
    fn constraint(&self, i: usize, x: &[f64]) -> f64;
    fn constraint_grad(&self, i: usize, x: &[f64]) -> Vec<f64>;
}

/// `min ‖x − center‖² s.t. aᵢ·x ≤ bᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub center: Vec<f64>,
    pub constraints: Vec<(Vec<f64>, f64)>,
}

impl QuadraticProblem {
    pub fn new(center: Vec<f64>, constraints: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if center.is_empty() || center.len() > 10 {
            return Err(Error::config(format!(
                "reference problems have 1 to 10 variables, got {}",
                center.len()
            )));
        }
        if let Some((a, _)) = constraints.iter().find(|(a, _)| a.len() != center.len()) {
            return Err(Error::shape(format!(
                "constraint has {} coefficients for {} variables",
                a.len(),
                center.len()
            )));
        }
        Ok(Self { center, constraints })
    }
}

impl ConstrainedProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(xi, ci)| (xi - ci).powi(2)).sum()
    }

    fn objective_grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(xi, ci)| 2.0 * (xi - ci)).collect()
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn constraint(&self, i: usize, x: &[f64]) -> f64 {
        let (a, b) = &self.constraints[i];
        a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() - b
    }

    fn constraint_grad(&self, i: usize, _x: &[f64]) -> Vec<f64> {
        self.constraints[i].0.clone()
    }
}

/// Deterministic ALM schedule. The inner argmin runs gradient descent until
/// the gradient norm drops below `inner_tol` or `max_inner` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSchedule {
    pub outer_iters: usize,
    pub beta: f64,
    pub dual_lr: f64,
    pub inner_lr: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for ReferenceSchedule {
    fn default() -> Self {
        Self {
            outer_iters: 200,
            beta: 10.0,
            dual_lr: 10.0,
            inner_lr: 0.02,
            inner_tol: 1e-10,
            max_inner: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub outer_iterations: usize,
}

fn augmented_grad<P: ConstrainedProblem + ?Sized>(p: &P, x: &[f64], lambda: &[f64], beta: f64) -> Vec<f64> {
    let mut g = p.objective_grad(x);
    for (i, &l) in lambda.iter().enumerate() {
        let (du, _) = psi_grad_unchecked(p.constraint(i, x), l, beta);
        if du != 0.0 {
            for (gj, cj) in g.iter_mut().zip(p.constraint_grad(i, x)) {
                *gj += du * cj;
            }
        }
    }
    g
}

/// Augmented Lagrangian `f(x) + Σ ψ_β(cᵢ(x), λᵢ)`.
pub fn augmented_value<P: ConstrainedProblem + ?Sized>(p: &P, x: &[f64], lambda: &[f64], beta: f64) -> f64 {
    p.objective(x)
        + lambda
            .iter()
            .enumerate()
            .map(|(i, &l)| psi_unchecked(p.constraint(i, x), l, beta))
            .sum::<f64>()
}

/// Alternate an approximate argmin over x with a dual ascent step on λ,
/// starting from x = 0, λ = 0.
pub fn alm_reference_solve<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    schedule: &ReferenceSchedule,
) -> Result<ReferenceSolution> {
    let s = schedule;
    if !(s.beta > 0.0 && s.dual_lr > 0.0 && s.inner_lr > 0.0) {
        return Err(Error::config("reference schedule rates must be positive"));
    }
    let n = problem.dim();
    if n == 0 || n > 10 {
        return Err(Error::config(format!("reference problems have 1 to 10 variables, got {n}")));
    }
    let mut x = vec![0.0; n];
    let mut lambda = vec![0.0; problem.num_constraints()];
    for k in 0..s.outer_iters {
        for _ in 0..s.max_inner {
            let g = augmented_grad(problem, &x, &lambda, s.beta);
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() < s.inner_tol {
                break;
            }
            for (xj, gj) in x.iter_mut().zip(&g) {
                *xj -= s.inner_lr * gj;
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= 1e6) {
                return Err(Error::numeric(format!(
                    "reference solver diverged at outer iteration {k} (|x| = {norm:e})"
                )));
            }
        }
        for (i, l) in lambda.iter_mut().enumerate() {
            let (_, dv) = psi_grad_unchecked(problem.constraint(i, &x), *l, s.beta);
            *l += s.dual_lr * dv;
        }
    }
    Ok(ReferenceSolution {
        x,
        lambda,
        outer_iterations: s.outer_iters,
    })
}
