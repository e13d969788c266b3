//! Out-of-distribution detection trained on labeled in-distribution data
//! plus an unlabeled "wild" mixture of ID and OOD samples.
//!
//! The core method minimises how many wild samples are scored as
//! in-distribution while constraining the ID false-rejection loss and the
//! classification loss, solved with a stochastic augmented-Lagrangian
//! loop ([`alm::woods_train`]). Baselines, metrics, synthetic data
//! generators and a from-scratch MLP are included.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alm;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nnet;
pub mod train;

pub use alm::{
    alm_reference_solve, batch_lagrangian, calibrate_tau, dual_ascent_update, penalty_update, psi,
    psi_grad, woods_nn_head_train, woods_train, AlmState, ConstraintSpec, EpochLog, OodLossKind,
};
pub use baselines::{ce_only_train, energy_reg_train, oe_train, BaselineConfig, BaselineMethod};
pub use data::{
    gen_gaussian_task, gen_moons_ring_task, make_wild, GaussianTaskSpec, LabeledDataset,
    MixtureSpec, MoonsRingSpec, Provenance, WildDataset,
};
pub use error::{Error, Result};
pub use eval::{
    accuracy, auroc, evaluate, fpr_at_tpr, score_energy, select_candidate, validate_threshold, DetectionReport,
    ScoreSet, Scorer, ThresholdCandidate,
};
pub use nnet::{Activation, Gradients, MlpModel, OptimizerState, SgdConfig};
pub use train::{LrSchedule, TrainConfig};
