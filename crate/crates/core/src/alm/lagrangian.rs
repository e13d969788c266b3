use serde::{Deserialize, Serialize};

use super::{psi_grad_unchecked, psi_unchecked, AlmState, ConstraintSpec};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, hinge_head_losses, ood_loss_in_logits, ood_loss_out_logits};
use crate::nnet::{Gradients, MlpModel, Trace};
use crate::train::mean;

/// A labeled sample borrowed from a dataset.
pub type IdSample<'a> = (&'a [f64], usize);

/// Which OOD loss family drives the objective and the ID constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodLossKind {
    /// Sigmoid of the slope-scaled energy `w·E`.
    EnergySigmoid,
    /// Hinge losses on the auxiliary head score `g`.
    HingeHead,
}

/// Per-batch augmented Lagrangian and the quantities it was built from.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub objective: f64,
    pub ood_constraint: f64,
    pub cls_constraint: f64,
}

/// One sample's OOD loss with upstream derivatives.
struct OodTerm {
    value: f64,
    d_logits: Option<Vec<f64>>,
    d_head: f64,
    d_w: f64,
}

fn head_score(trace: &Trace) -> Result<f64> {
    trace
        .head_score()
        .ok_or_else(|| Error::config("hinge-head training needs a model with an ood head"))
}

/// Loss paid by a wild sample that is kept "in".
fn wild_term(kind: OodLossKind, model: &MlpModel, logits: &[f64], trace: &Trace) -> Result<OodTerm> {
    match kind {
        OodLossKind::EnergySigmoid => {
            let l = ood_loss_in_logits(logits, model.energy_slope());
            Ok(OodTerm {
                value: l.value,
                d_logits: Some(l.grad_logits),
                d_head: 0.0,
                d_w: l.grad_w.unwrap_or(0.0),
            })
        }
        OodLossKind::HingeHead => {
            let h = hinge_head_losses(head_score(trace)?);
            Ok(OodTerm {
                value: h.loss_in,
                d_logits: None,
                d_head: h.grad_in,
                d_w: 0.0,
            })
        }
    }
}

/// Loss paid by an ID sample that is sent "out".
fn id_term(kind: OodLossKind, model: &MlpModel, logits: &[f64], trace: &Trace) -> Result<OodTerm> {
    match kind {
        OodLossKind::EnergySigmoid => {
            let l = ood_loss_out_logits(logits, model.energy_slope());
            Ok(OodTerm {
                value: l.value,
                d_logits: Some(l.grad_logits),
                d_head: 0.0,
                d_w: l.grad_w.unwrap_or(0.0),
            })
        }
        OodLossKind::HingeHead => {
            let h = hinge_head_losses(head_score(trace)?);
            Ok(OodTerm {
                value: h.loss_out,
                d_logits: None,
                d_head: h.grad_out,
                d_w: 0.0,
            })
        }
    }
}

/// Energy-sigmoid per-batch Lagrangian and its parameter gradient.
pub fn batch_lagrangian(
    model: &MlpModel,
    id_batch: &[IdSample<'_>],
    wild_batch: &[&[f64]],
    spec: &ConstraintSpec,
    state: &AlmState,
) -> Result<(f64, Gradients)> {
    batch_lagrangian_with(OodLossKind::EnergySigmoid, model, id_batch, wild_batch, spec, state)
        .map(|b| (b.loss, b.grads))
}

/// ```text
/// L = mean_wild L_in
///   + ψ_β₁(mean_id L_out − α, λ₁)
///   + ψ_β₂(mean_id CE − τ, λ₂)
/// ```
/// λ and β are constants; gradients reach every network parameter, the
/// energy slope and (for [`OodLossKind::HingeHead`]) the head.
pub fn batch_lagrangian_with(
    kind: OodLossKind,
    model: &MlpModel,
    id_batch: &[IdSample<'_>],
    wild_batch: &[&[f64]],
    spec: &ConstraintSpec,
    state: &AlmState,
) -> Result<BatchLoss> {
    if id_batch.is_empty() || wild_batch.is_empty() {
        return Err(Error::usage("batch_lagrangian needs non-empty ID and wild batches"));
    }
    let mut grads = model.zero_gradients();

    let scale_wild = 1.0 / wild_batch.len() as f64;
    let mut wild_values = Vec::with_capacity(wild_batch.len());
    for x in wild_batch {
        let (logits, trace) = model.forward(x)?;
        let term = wild_term(kind, model, &logits, &trace)?;
        wild_values.push(term.value);
        let d_logits: Vec<f64> = match &term.d_logits {
            Some(d) => d.iter().map(|g| g * scale_wild).collect(),
            None => vec![0.0; logits.len()],
        };
        model.backward_into(&trace, &d_logits, term.d_head * scale_wild, &mut grads)?;
        grads.energy_slope_w += term.d_w * scale_wild;
    }
    let objective = mean(&wild_values);

    let mut id_terms = Vec::with_capacity(id_batch.len());
    let mut ood_values = Vec::with_capacity(id_batch.len());
    let mut ce_values = Vec::with_capacity(id_batch.len());
    for &(x, y) in id_batch {
        let (logits, trace) = model.forward(x)?;
        let ce = cross_entropy(&logits, y)?;
        let term = id_term(kind, model, &logits, &trace)?;
        ood_values.push(term.value);
        ce_values.push(ce.value);
        id_terms.push((trace, ce.grad_logits, term));
    }
    let ood_constraint = mean(&ood_values);
    let cls_constraint = mean(&ce_values);
    let u1 = ood_constraint - spec.alpha;
    let u2 = cls_constraint - spec.tau;
    let (du1, _) = psi_grad_unchecked(u1, state.lambda1, state.beta1);
    let (du2, _) = psi_grad_unchecked(u2, state.lambda2, state.beta2);
    let scale_id = 1.0 / id_batch.len() as f64;
    let c1 = du1 * scale_id;
    let c2 = du2 * scale_id;
    if c1 != 0.0 || c2 != 0.0 {
        for (trace, ce_grad, term) in &id_terms {
            let d_logits: Vec<f64> = match &term.d_logits {
                Some(d) => d.iter().zip(ce_grad).map(|(o, c)| c1 * o + c2 * c).collect(),
                None => ce_grad.iter().map(|c| c2 * c).collect(),
            };
            model.backward_into(trace, &d_logits, c1 * term.d_head, &mut grads)?;
            grads.energy_slope_w += c1 * term.d_w;
        }
    }

    let loss = objective
        + psi_unchecked(u1, state.lambda1, state.beta1)
        + psi_unchecked(u2, state.lambda2, state.beta2);
    Ok(BatchLoss {
        loss,
        grads,
        objective,
        ood_constraint,
        cls_constraint,
    })
}

/// Full-data constraint values `(mean L_out, mean CE)` over `id`.
pub fn constraint_values(kind: OodLossKind, model: &MlpModel, id: &LabeledDataset) -> Result<(f64, f64)> {
    if id.is_empty() {
        return Err(Error::usage("empty ID dataset"));
    }
    let mut ood = Vec::with_capacity(id.len());
    let mut ce = Vec::with_capacity(id.len());
    for (x, y) in id.iter() {
        let (logits, trace) = model.forward(x)?;
        ce.push(cross_entropy(&logits, y)?.value);
        ood.push(id_term(kind, model, &logits, &trace)?.value);
    }
    Ok((mean(&ood), mean(&ce)))
}

/// Full-data objective `mean_wild L_in`.
pub fn wild_objective(kind: OodLossKind, model: &MlpModel, wild: &[Vec<f64>]) -> Result<f64> {
    if wild.is_empty() {
        return Err(Error::usage("empty wild dataset"));
    }
    let values = wild
        .iter()
        .map(|x| {
            let (logits, trace) = model.forward(x)?;
            Ok(wild_term(kind, model, &logits, &trace)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&values))
}

/// The augmented Lagrangian evaluated on the full datasets.
pub fn full_lagrangian(
    kind: OodLossKind,
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    spec: &ConstraintSpec,
    state: &AlmState,
) -> Result<f64> {
    let (ood, cls) = constraint_values(kind, model, id)?;
    let objective = wild_objective(kind, model, wild)?;
    Ok(objective
        + psi_unchecked(ood - spec.alpha, state.lambda1, state.beta1)
        + psi_unchecked(cls - spec.tau, state.lambda2, state.beta2))
}
