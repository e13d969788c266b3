use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel, ParamRole};
use crate::error::{Error, Result};

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            nesterov: true,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// SGD with (optionally Nesterov) momentum and decoupled-from-bias weight decay.
///
/// Per parameter, with `g' = g + wd·θ` for weight entries and `g' = g` otherwise:
///
/// ```text
/// v ← momentum·v + g'
/// θ ← θ − lr·(g' + momentum·v)   (nesterov)
/// θ ← θ − lr·v                   (classic)
/// ```
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: SgdConfig,
    velocity: Gradients,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: model.zero_gradients(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }

    /// Apply one update in place.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(model.params()) || !self.velocity.same_shape(grads) {
            return Err(Error::shape("gradients do not match model parameters"));
        }
        if let Some((path, i)) = grads.first_non_finite() {
            return Err(Error::numeric(format!("non-finite gradient at {path}[{i}]")));
        }
        let SgdConfig {
            learning_rate: lr,
            momentum,
            weight_decay,
            nesterov,
        } = self.config;
        let params = model.params_mut().blocks_mut();
        let vel = self.velocity.blocks_mut();
        for ((p, v), g) in params.into_iter().zip(vel).zip(grads.blocks()) {
            let decay = if p.role == ParamRole::Weight {
                weight_decay
            } else {
                0.0
            };
            for ((theta, vi), gi) in p.values.iter_mut().zip(v.values.iter_mut()).zip(g.values) {
                let g_eff = if decay != 0.0 { gi + decay * *theta } else { *gi };
                *vi = momentum * *vi + g_eff;
                let update = if nesterov {
                    g_eff + momentum * *vi
                } else {
                    *vi
                };
                *theta -= lr * update;
            }
        }
        Ok(())
    }
}

/// Convenience wrapper matching the single-call form `θ ← step(θ, g)`.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    state.step(model, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Activation;

    fn model() -> MlpModel {
        MlpModel::init(&[2, 3, 2], Activation::Relu, 9).unwrap()
    }

    fn filled(model: &MlpModel, v: f64) -> Gradients {
        let mut g = model.zero_gradients();
        let n = g.num_params();
        g.set_flat(&vec![v; n]).unwrap();
        g
    }

    #[test]
    fn plain_gradient_step() {
        let mut m = model();
        let before = m.params().to_flat();
        let g = filled(&m, 0.5);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            nesterov: true,
        };
        let mut opt = OptimizerState::new(&m, cfg).unwrap();
        opt.step(&mut m, &g).unwrap();
        for (a, b) in m.params().to_flat().iter().zip(&before) {
            assert_eq!(*a, b - 0.1 * 0.5);
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut m = model();
        let before = m.clone();
        let g = m.zero_gradients();
        let cfg = SgdConfig {
            weight_decay: 0.0,
            ..SgdConfig::default()
        };
        let mut opt = OptimizerState::new(&m, cfg).unwrap();
        for _ in 0..3 {
            opt.step(&mut m, &g).unwrap();
        }
        assert_eq!(m, before);
    }

    #[test]
    fn two_step_momentum_recurrence() {
        let g = 0.2;
        let lr = 0.05;
        let mu = 0.9;
        for nesterov in [false, true] {
            let mut m = model();
            let before = m.params().to_flat();
            let grads = filled(&m, g);
            let cfg = SgdConfig {
                learning_rate: lr,
                momentum: mu,
                weight_decay: 0.0,
                nesterov,
            };
            let mut opt = OptimizerState::new(&m, cfg).unwrap();
            opt.step(&mut m, &grads).unwrap();
            opt.step(&mut m, &grads).unwrap();
            // v1 = g, v2 = mu*g + g
            let v1 = g;
            let v2 = mu * v1 + g;
            let (u1, u2) = if nesterov {
                (g + mu * v1, g + mu * v2)
            } else {
                (v1, v2)
            };
            for (a, b) in m.params().to_flat().iter().zip(&before) {
                let expected = b - lr * u1 - lr * u2;
                assert!((a - expected).abs() < 1e-15, "{a} vs {expected}");
            }
        }
    }

    #[test]
    fn decay_skips_biases_and_slope() {
        let mut m = model();
        m.params_mut().layers[0].bias[0] = 1.0;
        let before = m.clone();
        let g = m.zero_gradients();
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.5,
            nesterov: false,
        };
        let mut opt = OptimizerState::new(&m, cfg).unwrap();
        opt.step(&mut m, &g).unwrap();
        assert_eq!(m.layers()[0].bias, before.layers()[0].bias);
        assert_eq!(m.energy_slope(), before.energy_slope());
        let w0 = before.layers()[0].weight.get(0, 0);
        assert_eq!(m.layers()[0].weight.get(0, 0), w0 - 0.1 * 0.5 * w0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut m = model();
        let mut g = m.zero_gradients();
        g.layers[1].bias[1] = f64::NAN;
        let mut opt = OptimizerState::new(&m, SgdConfig::default()).unwrap();
        let err = opt.step(&mut m, &g).unwrap_err();
        assert!(err.to_string().contains("layers[1].bias[1]"), "{err}");
    }

    #[test]
    fn rejects_bad_momentum() {
        let m = model();
        let cfg = SgdConfig {
            momentum: 1.0,
            ..SgdConfig::default()
        };
        assert!(OptimizerState::new(&m, cfg).is_err());
    }
}
