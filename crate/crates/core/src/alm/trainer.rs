use super::lagrangian::{batch_lagrangian_with, constraint_values, wild_objective, IdSample, OodLossKind};
use super::{dual_ascent_update, penalty_update, AlmState, ConstraintSpec, EpochLog};
use crate::baselines::ce_only_train;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nnet::{MlpModel, OptimizerState};
use crate::train::{BatchSampler, TrainConfig};

/// Energy-sigmoid constrained training.
pub fn woods_train(
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    spec: &ConstraintSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    woods_train_with(OodLossKind::EnergySigmoid, model, id, wild, spec, config)
}

/// Constrained training of the auxiliary head with hinge losses; the
/// classification constraint is unchanged.
pub fn woods_nn_head_train(
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    spec: &ConstraintSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    if !model.has_head() {
        return Err(Error::config("woods_nn needs a model with an ood head"));
    }
    woods_train_with(OodLossKind::HingeHead, model, id, wild, spec, config)
}

/// The stochastic augmented-Lagrangian loop.
///
/// Per epoch: `T − 1` SGD steps on independently sampled ID and wild
/// batches, then both constraints are evaluated on the full ID set, the
/// dual variables take one ascent step and violated constraints get their
/// penalty multiplied by γ.
pub fn woods_train_with(
    kind: OodLossKind,
    model: &MlpModel,
    id: &LabeledDataset,
    wild: &[Vec<f64>],
    spec: &ConstraintSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    spec.validate()?;
    config.validate()?;
    if id.is_empty() || wild.is_empty() {
        return Err(Error::usage("training needs non-empty ID and wild data"));
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
    if kind == OodLossKind::HingeHead && !model.has_head() {
        return Err(Error::config("hinge-head training needs a model with an ood head"));
    }

    let (b1, b2) = config.initial_penalty;
    let mut state = AlmState::new(b1, b2, config.penalty_multiplier, config.dual_lr)?;
    let mut model = model.clone();
    let mut opt = OptimizerState::new(&model, config.sgd)?;
    let mut sampler = BatchSampler::new(config.seed);
    let steps = config.steps_per_epoch(id.len());
    let b = config.batch_size;
    let mut logs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.set_learning_rate(config.lr_schedule.learning_rate(
            config.sgd.learning_rate,
            epoch,
            config.epochs,
        ));
        for step in 0..steps {
            let id_idx = sampler.id_batch(id.len(), b);
            let wild_idx = sampler.wild_batch(wild.len(), b);
            let id_batch: Vec<IdSample<'_>> = id_idx
                .iter()
                .map(|&i| (id.features()[i].as_slice(), id.labels()[i]))
                .collect();
            let wild_batch: Vec<&[f64]> = wild_idx.iter().map(|&i| wild[i].as_slice()).collect();
            let batch = batch_lagrangian_with(kind, &model, &id_batch, &wild_batch, spec, &state)?;
            if !batch.loss.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {step}"
                )));
            }
            opt.step(&mut model, &batch.grads).map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("epoch {epoch}, batch {step}: {msg}")),
                other => other,
            })?;
        }

        let (ood, cls) = constraint_values(kind, &model, id)?;
        let objective = wild_objective(kind, &model, wild)?;
        if !(ood.is_finite() && cls.is_finite() && objective.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite full-data loss at end of epoch {epoch}"
            )));
        }
        state = dual_ascent_update(&state, spec, ood, cls);
        state = penalty_update(&state, spec, ood, cls);
        logs.push(EpochLog {
            epoch,
            ood_constraint: ood,
            cls_constraint: cls,
            objective,
            lambda1: state.lambda1,
            lambda2: state.lambda2,
            beta1: state.beta1,
            beta2: state.beta2,
        });
    }
    Ok((model, logs))
}

/// Warm up with plain cross-entropy and set τ to twice the resulting
/// full-data CE loss. Returns the warmed-up model and τ.
pub fn calibrate_tau(
    model: &MlpModel,
    id: &LabeledDataset,
    config: &TrainConfig,
    warmup_epochs: usize,
) -> Result<(MlpModel, f64)> {
    let warm_cfg = TrainConfig {
        epochs: warmup_epochs,
        ..config.clone()
    };
    let (warm, _) = ce_only_train(model, id, &warm_cfg)?;
    let (_, ce) = constraint_values(OodLossKind::EnergySigmoid, &warm, id)?;
    Ok((warm, 2.0 * ce))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_gaussian_task, make_wild, GaussianTaskSpec, MixtureSpec};
    use crate::nnet::{Activation, SgdConfig};

    fn small_task() -> (LabeledDataset, Vec<Vec<f64>>) {
        let spec = GaussianTaskSpec::two_class(4.0, [0.0, 8.0], 1.0, 100, 200);
        let (id, ood) = gen_gaussian_task(&spec, 1).unwrap();
        let wild = make_wild(id.features(), &ood, &MixtureSpec { pi: 0.5, m: 200, seed: 2 }).unwrap();
        (id, wild.samples().to_vec())
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let (id, wild) = small_task();
        let model = MlpModel::init(&[2, 8, 2], Activation::Relu, 0).unwrap();
        let (trained, logs) = woods_train(&model, &id, &wild, &ConstraintSpec::default(), &cfg(0)).unwrap();
        assert_eq!(trained, model);
        assert!(logs.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (id, wild) = small_task();
        let model = MlpModel::init(&[2, 8, 2], Activation::Relu, 0).unwrap();
        let spec = ConstraintSpec::default();
        let a = woods_train(&model, &id, &wild, &spec, &cfg(3)).unwrap();
        let b = woods_train(&model, &id, &wild, &spec, &cfg(3)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.len(), 3);
        assert!(a.1.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    }

    #[test]
    fn head_training_requires_head() {
        let (id, wild) = small_task();
        let model = MlpModel::init(&[2, 8, 2], Activation::Relu, 0).unwrap();
        let r = woods_nn_head_train(&model, &id, &wild, &ConstraintSpec::default(), &cfg(1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn head_training_is_deterministic() {
        let (id, wild) = small_task();
        let model = MlpModel::init_with_head(&[2, 8, 2], Activation::Relu, 16, 0).unwrap();
        let spec = ConstraintSpec::default();
        let a = woods_nn_head_train(&model, &id, &wild, &spec, &cfg(2)).unwrap();
        let b = woods_nn_head_train(&model, &id, &wild, &spec, &cfg(2)).unwrap();
        assert_eq!(a.1, b.1);
        assert_ne!(a.0, model);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let (id, wild) = small_task();
        let model = MlpModel::init(&[3, 8, 2], Activation::Relu, 0).unwrap();
        assert!(woods_train(&model, &id, &wild, &ConstraintSpec::default(), &cfg(1)).is_err());
    }

    #[test]
    fn divergence_is_reported_with_location() {
        let (id, wild) = small_task();
        let model = MlpModel::init(&[2, 8, 2], Activation::Relu, 0).unwrap();
        let mut config = cfg(5);
        config.sgd.learning_rate = 1e200;
        let err = woods_train(&model, &id, &wild, &ConstraintSpec::default(), &config).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert!(err.to_string().contains("epoch"), "{err}");
    }
}
