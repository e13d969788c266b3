//! OOD scores and detection metrics. Every score is oriented so that
//! higher means more in-distribution.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{energy_score, msp_score, sigmoid};
use crate::nnet::MlpModel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TPR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<Self> {
        if id_scores.iter().chain(&ood_scores).any(|s| !s.is_finite()) {
            return Err(Error::numeric("scores must be finite"));
        }
        Ok(Self { id_scores, ood_scores })
    }

    pub fn swapped(&self) -> Self {
        Self {
            id_scores: self.ood_scores.clone(),
            ood_scores: self.id_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// `σ(w·E)` with the model's learned energy slope.
    EnergySigmoid,
    /// Raw log-sum-exp of the logits.
    Energy,
    /// Negated auxiliary head score `−g`.
    NnHead,
    Msp,
}

impl Scorer {
    pub fn name(self) -> &'static str {
        match self {
            Scorer::EnergySigmoid => "energy_sigmoid",
            Scorer::Energy => "energy",
            Scorer::NnHead => "nn_head",
            Scorer::Msp => "msp",
        }
    }
}

impl std::str::FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy_sigmoid" => Ok(Scorer::EnergySigmoid),
            "energy" => Ok(Scorer::Energy),
            "nn_head" => Ok(Scorer::NnHead),
            "msp" => Ok(Scorer::Msp),
            other => Err(Error::config(format!(
                "unknown scorer {other:?} (expected energy_sigmoid, energy, nn_head or msp)"
            ))),
        }
    }
}

/// `σ(w · E(x))`.
pub fn score_energy(model: &MlpModel, x: &[f64]) -> Result<f64> {
    let logits = model.logits(x)?;
    Ok(sigmoid(model.energy_slope() * energy_score(&logits)))
}

pub fn score(model: &MlpModel, scorer: Scorer, x: &[f64]) -> Result<f64> {
    match scorer {
        Scorer::EnergySigmoid => score_energy(model, x),
        Scorer::Energy => Ok(energy_score(&model.logits(x)?)),
        Scorer::Msp => Ok(msp_score(&model.logits(x)?)),
        Scorer::NnHead => {
            if !model.has_head() {
                return Err(Error::config("nn_head scorer needs a model with an ood head"));
            }
            let (_, trace) = model.forward(x)?;
            trace
                .head_score()
                .map(|g| -g)
                .ok_or_else(|| Error::config("nn_head scorer needs a model with an ood head"))
        }
    }
}

pub fn score_all(model: &MlpModel, scorer: Scorer, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    xs.iter().map(|x| score(model, scorer, x)).collect()
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// FPR at the largest threshold `t` for which at least `tpr_target` of the
/// ID scores are `≥ t`. Returns `(fpr, t)`.
pub fn fpr_at_tpr(scores: &ScoreSet, tpr_target: f64) -> Result<(f64, f64)> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::usage(format!("tpr target must lie in (0, 1], got {tpr_target}")));
    }
    if scores.id_scores.is_empty() {
        return Err(Error::usage("fpr_at_tpr needs ID scores"));
    }
    if scores.ood_scores.is_empty() {
        return Err(Error::usage("fpr_at_tpr needs OOD scores"));
    }
    let n = scores.id_scores.len();
    let id = sorted_desc(&scores.id_scores);
    // smallest k with k / n ≥ target; the k-th largest score keeps ≥ k in
    let k = ((tpr_target * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let t = id[k - 1];
    let fp = scores.ood_scores.iter().filter(|&&s| s >= t).count();
    Ok((fp as f64 / scores.ood_scores.len() as f64, t))
}

/// Mann–Whitney AUROC with ties counted ½, via midranks.
pub fn auroc(scores: &ScoreSet) -> Result<f64> {
    let (n_id, n_ood) = (scores.id_scores.len(), scores.ood_scores.len());
    if n_id == 0 || n_ood == 0 {
        return Err(Error::usage("auroc needs ID and OOD scores"));
    }
    let mut all: Vec<(f64, bool)> = scores
        .id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(scores.ood_scores.iter().map(|&s| (s, false)))
        .collect();
    // IEEE order so that -0.0 and 0.0 tie; scores are finite
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // twice the rank sum stays integral with midranks
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let ids = all[i..j].iter().filter(|p| p.1).count() as u128;
        // ranks i+1..=j, midrank (i+1+j)/2
        rank_sum2 += ids * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n1 = n_id as u128;
    let u2 = rank_sum2 - n1 * (n1 + 1);
    Ok(u2 as f64 / (2.0 * n_id as f64 * n_ood as f64))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax logit (lowest index on ties) equals the label.
pub fn accuracy(model: &MlpModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::usage("accuracy needs a non-empty dataset"));
    }
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        if argmax(&model.logits(x)?) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Threshold selection on held-out data: among the distinct scores and
/// `±∞`, pick `t` minimizing the fraction of wild scores `≥ t` subject to
/// the fraction of ID scores `< t` being at most `α + ε`; ties go to the
/// larger `t`. Returns `(t, wild_in_rate)`.
pub fn validate_threshold(id_scores: &[f64], wild_scores: &[f64], alpha: f64, epsilon: f64) -> Result<(f64, f64)> {
    if id_scores.is_empty() || wild_scores.is_empty() {
        return Err(Error::usage("validate_threshold needs ID and wild scores"));
    }
    if !(epsilon >= 0.0) || alpha.is_nan() {
        return Err(Error::usage("epsilon must be non-negative"));
    }
    let limit = alpha + epsilon;
    let id = {
        let mut s = id_scores.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let wild = {
        let mut s = wild_scores.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let mut candidates: Vec<f64> = id.iter().chain(&wild).copied().collect();
    candidates.push(f64::NEG_INFINITY);
    candidates.push(f64::INFINITY);
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();

    let (n, m) = (id.len() as f64, wild.len() as f64);
    let below = |sorted: &[f64], t: f64| sorted.partition_point(|&s| s < t);
    let mut best: Option<(f64, usize)> = None;
    // descending candidates: first hit of a minimum is the largest t
    for t in candidates {
        let id_out = below(&id, t) as f64 / n;
        if id_out > limit {
            continue;
        }
        let wild_in = wild.len() - below(&wild, t);
        if best.map_or(true, |(_, w)| wild_in < w) {
            best = Some((t, wild_in));
        }
    }
    let (t, w) = best.expect("t = -inf is always feasible");
    Ok((t, w as f64 / m))
}

/// One trained model's validated threshold, for choosing among models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCandidate {
    pub wild_in_rate: f64,
    /// Fraction of held-out ID samples declared out at the threshold.
    pub id_out_rate: f64,
}

/// Index of the candidate with the lowest wild-in rate, then the lowest
/// ID-out rate; the first such index wins remaining ties.
pub fn select_candidate(candidates: &[ThresholdCandidate]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (x, y) = (candidates[a], candidates[b]);
        x.wild_in_rate
            .total_cmp(&y.wild_in_rate)
            .then(x.id_out_rate.total_cmp(&y.id_out_rate))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub scorer: Scorer,
    pub fpr_at_95tpr: f64,
    pub auroc: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn score_set(model: &MlpModel, scorer: Scorer, id: &LabeledDataset, ood: &[Vec<f64>]) -> Result<ScoreSet> {
    ScoreSet::new(score_all(model, scorer, id.features())?, score_all(model, scorer, ood)?)
}

pub fn evaluate(model: &MlpModel, id_test: &LabeledDataset, ood_test: &[Vec<f64>], scorer: Scorer) -> Result<DetectionReport> {
    if id_test.is_empty() || ood_test.is_empty() {
        return Err(Error::usage("evaluate needs non-empty ID and OOD test sets"));
    }
    let scores = score_set(model, scorer, id_test, ood_test)?;
    let (fpr, threshold) = fpr_at_tpr(&scores, DEFAULT_TPR)?;
    Ok(DetectionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scorer,
        fpr_at_95tpr: fpr,
        auroc: auroc(&scores)?,
        accuracy: accuracy(model, id_test)?,
        threshold,
        n_id: id_test.len(),
        n_ood: ood_test.len(),
    })
}

/// Write `score,source` rows with source `id` or `ood`.
pub fn write_scores_csv(path: &Path, scores: &ScoreSet) -> Result<()> {
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(["score", "source"]).map_err(wrap)?;
    for &s in &scores.id_scores {
        w.write_record([s.to_string().as_str(), "id"]).map_err(wrap)?;
    }
    for &s in &scores.ood_scores {
        w.write_record([s.to_string().as_str(), "ood"]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
