//! Deterministic inputs shared by the benchmarks.

use woods_core::alm::IdSample;
use woods_core::data::{gen_gaussian_task, make_wild, GaussianTaskSpec, LabeledDataset, MixtureSpec};
use woods_core::eval::ScoreSet;
use woods_core::nnet::{Activation, MlpModel};

pub struct Fixture {
    pub model: MlpModel,
    pub id: LabeledDataset,
    pub wild: Vec<Vec<f64>>,
}

impl Fixture {
    /// A 2-`hidden`-`hidden`-2 relu model with `n` ID and `n` wild samples.
    pub fn new(hidden: usize, n: usize) -> Self {
        let spec = GaussianTaskSpec::two_class(2.0, [0.0, 2.5], 1.0, n / 2, n);
        let (id, ood) = gen_gaussian_task(&spec, 7).expect("task");
        let wild = make_wild(id.features(), &ood, &MixtureSpec { pi: 0.3, m: n, seed: 8 }).expect("wild");
        let model = MlpModel::init(&[2, hidden, hidden, 2], Activation::Relu, 9).expect("model");
        Self {
            model,
            id,
            wild: wild.samples().to_vec(),
        }
    }

    pub fn id_batch(&self, b: usize) -> Vec<IdSample<'_>> {
        self.id.iter().take(b).collect()
    }

    pub fn wild_batch(&self, b: usize) -> Vec<&[f64]> {
        self.wild.iter().take(b).map(Vec::as_slice).collect()
    }
}

/// `n` ID and `n` OOD scores from a fixed linear congruential sequence,
/// with OOD shifted down by one.
pub fn score_set(n: usize) -> ScoreSet {
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = || {
        state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let id = (0..n).map(|_| next() * 4.0).collect();
    let ood = (0..n).map(|_| next() * 4.0 - 1.0).collect();
    ScoreSet::new(id, ood).expect("finite scores")
}
