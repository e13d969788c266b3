use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    /// Per-axis variances.
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl GaussianComponent {
    /// Unit-covariance component.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: Covariance::Diagonal(vec![variance; d]),
        }
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`, row-major `d × d`.
    fn cholesky(&self) -> Result<Vec<f64>> {
        let d = self.mean.len();
        if d == 0 {
            return Err(Error::config("gaussian component has zero dimension"));
        }
        match &self.cov {
            Covariance::Diagonal(vars) => {
                if vars.len() != d {
                    return Err(Error::config("covariance diagonal length differs from mean"));
                }
                if vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::config("covariance is not positive definite"));
                }
                let mut l = vec![0.0; d * d];
                for (i, v) in vars.iter().enumerate() {
                    l[i * d + i] = v.sqrt();
                }
                Ok(l)
            }
            Covariance::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::config("covariance must be d × d"));
                }
                for i in 0..d {
                    for j in 0..i {
                        let scale = rows[i][j].abs().max(rows[j][i].abs()).max(1.0);
                        if (rows[i][j] - rows[j][i]).abs() > 1e-12 * scale {
                            return Err(Error::config("covariance is not symmetric"));
                        }
                    }
                }
                let mut l = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..=i {
                        let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
                        if i == j {
                            let diag = rows[i][i] - s;
                            if !(diag > 0.0 && diag.is_finite()) {
                                return Err(Error::config("covariance is not positive definite"));
                            }
                            l[i * d + i] = diag.sqrt();
                        } else {
                            l[i * d + j] = (rows[i][j] - s) / l[j * d + j];
                        }
                    }
                }
                Ok(l)
            }
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, mean: &[f64], chol: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    (0..d)
        .map(|i| mean[i] + (0..=i).map(|k| chol[i * d + k] * z[k]).sum::<f64>())
        .collect()
}

/// `count` i.i.d. draws from one Gaussian component.
pub fn sample_gaussian(component: &GaussianComponent, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chol = component.cholesky()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| draw(&mut rng, &component.mean, &chol)).collect())
}

/// K in-distribution Gaussian classes and one outlier component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTaskSpec {
    pub classes: Vec<GaussianComponent>,
    pub ood: GaussianComponent,
    pub class_counts: Vec<usize>,
    pub ood_count: usize,
}

impl GaussianTaskSpec {
    /// Two ID classes at `(±sep, 0)` and an outlier blob at `ood_mean`,
    /// all with isotropic variance `var`.
    pub fn two_class(sep: f64, ood_mean: [f64; 2], var: f64, per_class: usize, ood_count: usize) -> Self {
        Self {
            classes: vec![
                GaussianComponent::isotropic(vec![-sep, 0.0], var),
                GaussianComponent::isotropic(vec![sep, 0.0], var),
            ],
            ood: GaussianComponent::isotropic(ood_mean.to_vec(), var),
            class_counts: vec![per_class, per_class],
            ood_count,
        }
    }

    pub fn with_class_counts(mut self, counts: &[usize]) -> Self {
        self.class_counts = counts.to_vec();
        self
    }
}

/// Samples are emitted class by class, then the outlier pool.
pub fn gen_gaussian_task(spec: &GaussianTaskSpec, seed: u64) -> Result<(LabeledDataset, Vec<Vec<f64>>)> {
    let k = spec.classes.len();
    if k < 2 {
        return Err(Error::config(format!("need at least 2 classes, got {k}")));
    }
    if spec.class_counts.len() != k {
        return Err(Error::config("class_counts length differs from number of classes"));
    }
    if let Some(c) = spec.class_counts.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("class {c} has count 0")));
    }
    let d = spec.ood.mean.len();
    if spec.classes.iter().any(|c| c.mean.len() != d) {
        return Err(Error::config("all components must share one dimension"));
    }
    let class_chol = spec
        .classes
        .iter()
        .map(GaussianComponent::cholesky)
        .collect::<Result<Vec<_>>>()?;
    let ood_chol = spec.ood.cholesky()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = spec.class_counts.iter().sum();
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (y, ((comp, chol), &n)) in spec
        .classes
        .iter()
        .zip(&class_chol)
        .zip(&spec.class_counts)
        .enumerate()
    {
        for _ in 0..n {
            features.push(draw(&mut rng, &comp.mean, chol));
            labels.push(y);
        }
    }
    let ood = (0..spec.ood_count)
        .map(|_| draw(&mut rng, &spec.ood.mean, &ood_chol))
        .collect();
    Ok((LabeledDataset::new(features, labels, k)?, ood))
}

/// Center of the two-moons layout; the outlier ring is centred here.
pub const MOON_CENTER: [f64; 2] = [0.5, 0.25];

/// Two interleaved half circles (the ID classes) surrounded by a ring of
/// outliers. Noise is Gaussian truncated at 4 standard deviations per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsRingSpec {
    pub noise: f64,
    pub class_counts: [usize; 2],
    pub ood_count: usize,
    pub ring_radius: f64,
}

impl Default for MoonsRingSpec {
    fn default() -> Self {
        Self {
            noise: 0.1,
            class_counts: [500, 500],
            ood_count: 500,
            ring_radius: 3.0,
        }
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 4.0 {
            return z;
        }
    }
}

pub fn gen_moons_ring_task(spec: &MoonsRingSpec, seed: u64) -> Result<(LabeledDataset, Vec<Vec<f64>>)> {
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config("noise must be non-negative"));
    }
    if !(spec.ring_radius > 0.0 && spec.ring_radius.is_finite()) {
        return Err(Error::config("ring radius must be positive"));
    }
    if let Some(c) = spec.class_counts.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("class {c} has count 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (y, &n) in spec.class_counts.iter().enumerate() {
        for _ in 0..n {
            let t = rng.random_range(0.0..=PI);
            let (x0, x1) = if y == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let e0 = spec.noise * truncated_normal(&mut rng);
            let e1 = spec.noise * truncated_normal(&mut rng);
            features.push(vec![x0 + e0, x1 + e1]);
            labels.push(y);
        }
    }
    let ood = (0..spec.ood_count)
        .map(|_| {
            let angle = rng.random_range(0.0..2.0 * PI);
            let r = spec.ring_radius + spec.noise * truncated_normal(&mut rng);
            vec![MOON_CENTER[0] + r * angle.cos(), MOON_CENTER[1] + r * angle.sin()]
        })
        .collect();
    Ok((LabeledDataset::new(features, labels, 2)?, ood))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> GaussianTaskSpec {
        GaussianTaskSpec::two_class(4.0, [0.0, 8.0], 1.0, 1000, 1000)
    }

    #[test]
    fn gaussian_means_within_three_sigma() {
        let (ds, ood) = gen_gaussian_task(&task(), 42).unwrap();
        let band = 3.0 / (1000f64).sqrt();
        for (y, mean) in [(0usize, [-4.0, 0.0]), (1, [4.0, 0.0])] {
            let rows: Vec<&[f64]> = ds.iter().filter(|(_, l)| *l == y).map(|(x, _)| x).collect();
            assert_eq!(rows.len(), 1000);
            for axis in 0..2 {
                let m = rows.iter().map(|r| r[axis]).sum::<f64>() / rows.len() as f64;
                assert!((m - mean[axis]).abs() <= band, "class {y} axis {axis}: {m}");
            }
        }
        for (axis, target) in [0.0, 8.0].into_iter().enumerate() {
            let m = ood.iter().map(|r| r[axis]).sum::<f64>() / ood.len() as f64;
            assert!((m - target).abs() <= band);
        }
    }

    #[test]
    fn gaussian_errors() {
        let mut spec = task();
        spec.class_counts[1] = 0;
        assert!(matches!(gen_gaussian_task(&spec, 0), Err(Error::Config(_))));
        let mut spec = task();
        spec.ood.cov = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(gen_gaussian_task(&spec, 0), Err(Error::Config(_))));
        let mut spec = task();
        spec.ood.cov = Covariance::Full(vec![vec![1.0, 0.5], vec![0.4, 1.0]]);
        assert!(gen_gaussian_task(&spec, 0).is_err());
        let mut spec = task();
        spec.classes.truncate(1);
        spec.class_counts.truncate(1);
        assert!(gen_gaussian_task(&spec, 0).is_err());
    }

    #[test]
    fn full_covariance_matches_diagonal_case() {
        let mut spec = task();
        spec.ood.cov = Covariance::Full(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = gen_gaussian_task(&spec, 5).unwrap();
        let b = gen_gaussian_task(&task(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_is_deterministic() {
        assert_eq!(gen_gaussian_task(&task(), 1).unwrap(), gen_gaussian_task(&task(), 1).unwrap());
        assert_ne!(gen_gaussian_task(&task(), 1).unwrap(), gen_gaussian_task(&task(), 2).unwrap());
    }

    #[test]
    fn moons_within_bounding_box() {
        let spec = MoonsRingSpec {
            noise: 0.2,
            ..MoonsRingSpec::default()
        };
        let (ds, ring) = gen_moons_ring_task(&spec, 3).unwrap();
        let pad = 4.0 * spec.noise;
        for (x, _) in ds.iter() {
            assert!(x[0] >= -1.0 - pad && x[0] <= 2.0 + pad);
            assert!(x[1] >= -0.5 - pad && x[1] <= 1.0 + pad);
        }
        for p in &ring {
            let r = ((p[0] - MOON_CENTER[0]).powi(2) + (p[1] - MOON_CENTER[1]).powi(2)).sqrt();
            assert!((r - spec.ring_radius).abs() <= pad + 1e-12);
        }
        assert_eq!(gen_moons_ring_task(&spec, 3).unwrap(), (ds, ring));
    }

    #[test]
    fn moons_errors() {
        let spec = MoonsRingSpec {
            ring_radius: 0.0,
            ..MoonsRingSpec::default()
        };
        assert!(matches!(gen_moons_ring_task(&spec, 0), Err(Error::Config(_))));
        let spec = MoonsRingSpec {
            class_counts: [0, 3],
            ..MoonsRingSpec::default()
        };
        assert!(gen_moons_ring_task(&spec, 0).is_err());
    }
}
