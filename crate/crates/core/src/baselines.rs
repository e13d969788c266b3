//! Regularized-classifier baselines trained on the same ID and wild data.
//!
//! * `ce_only`: plain cross-entropy on the ID data.
//! * `oe`: CE plus λ times the cross-entropy of the wild softmax to the
//!   uniform distribution (Outlier Exposure).
//! * `energy_reg`: CE plus λ times squared hinges on the free energy,
//!   `max(0, F(x) − m_in)²` on ID and `max(0, m_out − F(x̃))²` on wild data.
//!
//! Every baseline shares the ID batch stream of the constrained trainer, so
//! with λ = 0 all three produce bitwise identical parameters.

use serde::{Deserialize, Serialize};

use crate::alm::{constraint_values, EpochLog, IdSample, OodLossKind};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, energy_margin_in, energy_margin_out, uniform_cross_entropy};
use crate::nnet::{Gradients, MlpModel, OptimizerState};
use crate::train::{mean, BatchSampler, TrainConfig};

pub const DEFAULT_MARGIN_IN: f64 = -25.0;
pub const DEFAULT_MARGIN_OUT: f64 = -7.0;
pub const OE_LAMBDA_GRID: [f64; 3] = [0.1, 0.5, 1.0];
pub const ENERGY_LAMBDA_GRID: [f64; 3] = [0.1, 1.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    CeOnly,
    Oe,
    EnergyReg,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::CeOnly => "ce_only",
            BaselineMethod::Oe => "oe",
            BaselineMethod::EnergyReg => "energy_reg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub lambda_reg: f64,
    /// `(m_in, m_out)` free-energy margins; required for `energy_reg`.
    pub margins: Option<(f64, f64)>,
}

impl BaselineConfig {
    pub fn ce_only() -> Self {
        Self {
            method: BaselineMethod::CeOnly,
            lambda_reg: 0.0,
            margins: None,
        }
    }

    pub fn oe(lambda_reg: f64) -> Self {
        Self {
            method: BaselineMethod::Oe,
            lambda_reg,
            margins: None,
        }
    }

    pub fn energy_reg(lambda_reg: f64, m_in: f64, m_out: f64) -> Self {
        Self {
            method: BaselineMethod::EnergyReg,
            lambda_reg,
            margins: Some((m_in, m_out)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::config(format!(
                "lambda_reg must be a non-negative number, got {}",
                self.lambda_reg
            )));
        }
        match (self.method, self.margins) {
            (BaselineMethod::EnergyReg, None) => Err(Error::config("energy_reg needs margins (m_in, m_out)")),
            (BaselineMethod::EnergyReg, Some((a, b))) if !(a.is_finite() && b.is_finite()) => {
                Err(Error::config("margins must be finite"))
            }
            (BaselineMethod::CeOnly | BaselineMethod::Oe, Some(_)) => Err(Error::config(format!(
                "margins only apply to energy_reg, not {}",
                self.method.name()
            ))),
            _ => Ok(()),
        }
    }
}

/// Mean regularizer over ID and wild data (0 for `ce_only`).
pub fn regularizer_value(
    config: &BaselineConfig,
    model: &MlpModel,
    id: &[&[f64]],
    wild: &[&[f64]],
) -> Result<f64> {
    match config.method {
        BaselineMethod::CeOnly => Ok(0.0),
        BaselineMethod::Oe => {
            let v = wild
                .iter()
                .map(|x| model.logits(x).map(|l| uniform_cross_entropy(&l).value))
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(&v))
        }
        BaselineMethod::EnergyReg => {
            let (m_in, m_out) = config
                .margins
                .ok_or_else(|| Error::config("energy_reg needs margins (m_in, m_out)"))?;
            let a = id
                .iter()
                .map(|x| model.logits(x).map(|l| energy_margin_in(&l, m_in).value))
                .collect::<Result<Vec<_>>>()?;
            let b = wild
                .iter()
                .map(|x| model.logits(x).map(|l| energy_margin_out(&l, m_out).value))
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(&a) + mean(&b))
        }
    }
}

/// Mini-batch loss `mean CE + λ·regularizer` and its gradient.
pub fn baseline_batch_loss(
    config: &BaselineConfig,
    model: &MlpModel,
    id_batch: &[IdSample<'_>],
    wild_batch: &[&[f64]],
) -> Result<(f64, Gradients)> {
    if id_batch.is_empty() {
        return Err(Error::usage("empty ID batch"));
    }
    let lambda = config.lambda_reg;
    let regularized = config.method != BaselineMethod::CeOnly && lambda != 0.0;
    let margins = config.margins.unwrap_or((DEFAULT_MARGIN_IN, DEFAULT_MARGIN_OUT));
    let mut grads = model.zero_gradients();
    let s_id = 1.0 / id_batch.len() as f64;
    let mut ce_values = Vec::with_capacity(id_batch.len());
    let mut reg_id = Vec::new();
    for &(x, y) in id_batch {
        let (logits, trace) = model.forward(x)?;
        let ce = cross_entropy(&logits, y)?;
        ce_values.push(ce.value);
        let mut d: Vec<f64> = ce.grad_logits.iter().map(|g| g * s_id).collect();
        if regularized && config.method == BaselineMethod::EnergyReg {
            let r = energy_margin_in(&logits, margins.0);
            reg_id.push(r.value);
            for (di, gi) in d.iter_mut().zip(&r.grad_logits) {
                *di += lambda * s_id * gi;
            }
        }
        model.backward_into(&trace, &d, 0.0, &mut grads)?;
    }
    let mut loss = mean(&ce_values);
    if regularized {
        if wild_batch.is_empty() {
            return Err(Error::usage("empty wild batch"));
        }
        let s_wild = 1.0 / wild_batch.len() as f64;
        let mut reg_wild = Vec::with_capacity(wild_batch.len());
        for x in wild_batch {
            let (logits, trace) = model.forward(x)?;
            let r = match config.method {
                BaselineMethod::Oe => uniform_cross_entropy(&logits),
                _ => energy_margin_out(&logits, margins.1),
            };
            reg_wild.push(r.value);
            let d: Vec<f64> = r.grad_logits.iter().map(|g| lambda * s_wild * g).collect();
            model.backward_into(&trace, &d, 0.0, &mut grads)?;
        }
        loss += lambda * (mean(&reg_id) + mean(&reg_wild));
    }
    Ok((loss, grads))
}

/// Shared training loop. Logs carry the full-data ID sigmoid-energy loss,
/// the full-data CE and the full-data regularizer; λ and β columns are zero.
pub fn baseline_train(
    config: &BaselineConfig,
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    train: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    config.validate()?;
    train.validate()?;
    if id.is_empty() {
        return Err(Error::usage("training needs a non-empty ID dataset"));
    }
    if id.num_classes() < 2 {
        return Err(Error::config("training needs at least 2 classes"));
    }
    if model.num_classes() != id.num_classes() || model.input_dim() != id.dim() {
        return Err(Error::shape(format!(
            "model maps {} → {} but data has {} features and {} classes",
            model.input_dim(),
            model.num_classes(),
            id.dim(),
            id.num_classes()
        )));
    }
    let uses_wild = config.method != BaselineMethod::CeOnly;
    if uses_wild && wild.is_empty() {
        return Err(Error::usage("regularized baselines need wild data"));
    }

    let mut model = model.clone();
    let mut opt = OptimizerState::new(&model, train.sgd)?;
    let mut sampler = BatchSampler::new(train.seed);
    let steps = train.steps_per_epoch(id.len());
    let b = train.batch_size;
    let id_rows: Vec<&[f64]> = id.features().iter().map(Vec::as_slice).collect();
    let wild_rows: Vec<&[f64]> = wild.iter().map(Vec::as_slice).collect();
    let mut logs = Vec::with_capacity(train.epochs);

    for epoch in 0..train.epochs {
        opt.set_learning_rate(train.lr_schedule.learning_rate(train.sgd.learning_rate, epoch, train.epochs));
        for step in 0..steps {
            let id_batch: Vec<IdSample<'_>> = sampler
                .id_batch(id.len(), b)
                .into_iter()
                .map(|i| (id_rows[i], id.labels()[i]))
                .collect();
            let wild_batch: Vec<&[f64]> = if uses_wild {
                sampler.wild_batch(wild.len(), b).into_iter().map(|i| wild_rows[i]).collect()
            } else {
                Vec::new()
            };
            let (loss, grads) = baseline_batch_loss(config, &model, &id_batch, &wild_batch)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("non-finite loss at epoch {epoch}, batch {step}")));
            }
            opt.step(&mut model, &grads).map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("epoch {epoch}, batch {step}: {msg}")),
                other => other,
            })?;
        }
        let (ood, cls) = constraint_values(OodLossKind::EnergySigmoid, &model, id)?;
        let objective = regularizer_value(config, &model, &id_rows, &wild_rows)?;
        if !(ood.is_finite() && cls.is_finite() && objective.is_finite()) {
            return Err(Error::numeric(format!("non-finite full-data loss at end of epoch {epoch}")));
        }
        logs.push(EpochLog {
            epoch,
            ood_constraint: ood,
            cls_constraint: cls,
            objective,
            lambda1: 0.0,
            lambda2: 0.0,
            beta1: 0.0,
            beta2: 0.0,
        });
    }
    Ok((model, logs))
}

pub fn ce_only_train(model: &MlpModel, id: &LabeledDataset, train: &TrainConfig) -> Result<(MlpModel, Vec<EpochLog>)> {
    baseline_train(&BaselineConfig::ce_only(), model, id, &[], train)
}

pub fn oe_train(
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    config: &BaselineConfig,
    train: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    if config.method != BaselineMethod::Oe {
        return Err(Error::config(format!("oe_train got method {}", config.method.name())));
    }
    baseline_train(config, model, id, wild, train)
}

pub fn energy_reg_train(
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    config: &BaselineConfig,
    train: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    if config.method != BaselineMethod::EnergyReg {
        return Err(Error::config(format!("energy_reg_train got method {}", config.method.name())));
    }
    baseline_train(config, model, id, wild, train)
}
