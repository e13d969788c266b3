//! Datasets, synthetic generators, the wild-mixture sampler and CSV I/O.

mod csvio;
mod synth;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csvio::{
    load_csv, load_csv_with_labels, load_provenance_csv, write_features_csv, write_labeled_csv, write_provenance_csv,
    CsvData, CsvSchema, LabelDictionary,
};
pub use synth::{
    gen_gaussian_task, gen_moons_ring_task, sample_gaussian, Covariance, GaussianComponent,
    GaussianTaskSpec, MoonsRingSpec, MOON_CENTER,
};

/// Labeled in-distribution samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    dim: usize,
    dictionary: Option<LabelDictionary>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        if let Some(i) = features.iter().position(|f| f.len() != dim) {
            return Err(Error::shape(format!("row {i} has {} features, expected {dim}", features[i].len())));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Index {
                label,
                classes: num_classes,
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric("features must be finite"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            dim,
            dictionary: None,
        })
    }

    pub fn with_dictionary(mut self, dictionary: LabelDictionary) -> Result<Self> {
        if dictionary.len() != self.num_classes {
            return Err(Error::config(format!(
                "dictionary has {} names for {} classes",
                dictionary.len(),
                self.num_classes
            )));
        }
        self.dictionary = Some(dictionary);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dictionary(&self) -> Option<&LabelDictionary> {
        self.dictionary.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            dim: self.dim,
            dictionary: self.dictionary.clone(),
        }
    }

    /// Shuffle-split into parts with the given fractions.
    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<Self>> {
        Ok(split_indices(self.len(), fractions, seed)?
            .iter()
            .map(|idx| self.subset(idx))
            .collect())
    }
}

/// Where a wild sample was drawn from. Only synthetic wild sets carry it,
/// and only evaluation code reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    In,
    Out,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::In => "in",
            Provenance::Out => "out",
        }
    }
}

/// Unlabeled wild samples.
///
/// Training code receives [`WildDataset::samples`], a plain slice, and so
/// has no access to the provenance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct WildDataset {
    features: Vec<Vec<f64>>,
    provenance: Option<Vec<Provenance>>,
}

impl WildDataset {
    /// Wild data of unknown composition, e.g. loaded from disk.
    pub fn unlabeled(features: Vec<Vec<f64>>) -> Self {
        Self {
            features,
            provenance: None,
        }
    }

    pub fn with_provenance(features: Vec<Vec<f64>>, provenance: Vec<Provenance>) -> Result<Self> {
        if features.len() != provenance.len() {
            return Err(Error::shape("provenance length differs from sample count"));
        }
        Ok(Self {
            features,
            provenance: Some(provenance),
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Fraction of samples drawn from the outlier pool, if known.
    pub fn outlier_fraction(&self) -> Option<f64> {
        let p = self.provenance.as_ref()?;
        if p.is_empty() {
            return None;
        }
        Some(p.iter().filter(|&&s| s == Provenance::Out).count() as f64 / p.len() as f64)
    }
}

/// Huber contamination `P_wild = (1 − π) P_in + π P_out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub pi: f64,
    pub m: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(Error::config(format!("mixing ratio pi must lie in (0, 1], got {}", self.pi)));
        }
        Ok(())
    }
}

fn check_pools(id_pool: &[Vec<f64>], ood_pool: &[Vec<f64>], pi: f64) -> Result<()> {
    if ood_pool.is_empty() {
        return Err(Error::usage("outlier pool is empty"));
    }
    if pi < 1.0 && id_pool.is_empty() {
        return Err(Error::usage("in-distribution pool is empty but pi < 1"));
    }
    Ok(())
}

/// Draw `m` wild samples: each draw picks the outlier pool with probability
/// π (else the ID pool), then a uniform element of that pool.
pub fn make_wild(id_pool: &[Vec<f64>], ood_pool: &[Vec<f64>], spec: &MixtureSpec) -> Result<WildDataset> {
    spec.validate()?;
    check_pools(id_pool, ood_pool, spec.pi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.m);
    let mut provenance = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let from_out = rng.random::<f64>() < spec.pi;
        let (pool, tag) = if from_out {
            (ood_pool, Provenance::Out)
        } else {
            (id_pool, Provenance::In)
        };
        features.push(pool[rng.random_range(0..pool.len())].clone());
        provenance.push(tag);
    }
    WildDataset::with_provenance(features, provenance)
}

/// Like [`make_wild`] but with exactly `⌊π m⌋` outlier draws, in shuffled order.
pub fn make_wild_fixed(
    id_pool: &[Vec<f64>],
    ood_pool: &[Vec<f64>],
    spec: &MixtureSpec,
) -> Result<WildDataset> {
    spec.validate()?;
    check_pools(id_pool, ood_pool, spec.pi)?;
    let n_out = ((spec.pi * spec.m as f64) + 1e-9).floor() as usize;
    let n_out = n_out.min(spec.m);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tags: Vec<Provenance> = (0..spec.m)
        .map(|i| if i < n_out { Provenance::Out } else { Provenance::In })
        .collect();
    tags.shuffle(&mut rng);
    let features = tags
        .iter()
        .map(|t| {
            let pool = match t {
                Provenance::Out => ood_pool,
                Provenance::In => id_pool,
            };
            pool[rng.random_range(0..pool.len())].clone()
        })
        .collect();
    WildDataset::with_provenance(features, tags)
}

/// Disjoint shuffled index sets covering `0..n`. Part sizes are
/// `⌊f_i n⌋` with the remainder assigned by largest fractional part.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() {
        return Err(Error::config("split needs at least one fraction"));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::config(format!("split fraction {f} outside [0, 1]")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions sum to {total}, expected 1")));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    split_counts(n, &sizes, seed)
}

/// Disjoint shuffled index sets of exactly the given sizes, which must sum to `n`.
pub fn split_counts(n: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::config(format!("split sizes sum to {total}, expected {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        parts.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(parts)
}

/// Shuffle-split a list of raw feature vectors.
pub fn split_vectors(rows: &[Vec<f64>], fractions: &[f64], seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(split_indices(rows.len(), fractions, seed)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| rows[i].clone()).collect())
        .collect())
}
