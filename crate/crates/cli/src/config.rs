use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use woods_core::nnet::{Activation, SgdConfig, DEFAULT_ENERGY_SLOPE, DEFAULT_HEAD_WIDTH};
use woods_core::train::{LrSchedule, TrainConfig};

use crate::error::CliError;

/// Overrides `output_dir` from the config file.
pub const OUTPUT_DIR_ENV: &str = "WOODS_OUTPUT_DIR";

/// One experiment: data task, wild mixture, method, model and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Directory holding the dataset CSVs; defaults to `<output_dir>/data`.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub task: TaskConfig,
    pub mixture: MixtureConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub generator: Generator,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_ood_test: usize,
    /// Distance of the two Gaussian class means from the origin along x.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_ood_mean")]
    pub ood_mean: [f64; 2],
    #[serde(default = "default_variance")]
    pub variance: f64,
    /// Moons noise standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_ring_radius")]
    pub ring_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Gaussian,
    MoonsRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub pi: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Woods,
    WoodsNn,
    CeOnly,
    Oe,
    EnergyReg,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Woods, Method::WoodsNn, Method::CeOnly, Method::Oe, Method::EnergyReg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Woods => "woods",
            Method::WoodsNn => "woods_nn",
            Method::CeOnly => "ce_only",
            Method::Oe => "oe",
            Method::EnergyReg => "energy_reg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown method {s:?}")))
    }
}

/// `tau = "auto"` sets τ to twice the warm-up cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Fixed(f64),
    Mode(TauMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: Method,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tau")]
    pub tau: TauSetting,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Primal learning rate μ₁.
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Dual learning rate μ₂.
    #[serde(default = "default_dual_lr")]
    pub dual_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_true")]
    pub nesterov: bool,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Epoch length T; `T − 1` steps per epoch.
    #[serde(default)]
    pub epoch_length: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Cross-entropy epochs run before the main phase.
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub lambda_reg: Option<f64>,
    #[serde(default)]
    pub margins: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub head: bool,
    #[serde(default = "default_head_width")]
    pub head_width: usize,
    #[serde(default = "default_energy_slope")]
    pub energy_slope_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: default_activation(),
            head: false,
            head_width: default_head_width(),
            energy_slope_init: default_energy_slope(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub data: u64,
    pub init: u64,
    pub training: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            training: 3,
        }
    }
}

fn default_separation() -> f64 {
    2.0
}
fn default_ood_mean() -> [f64; 2] {
    [0.0, 2.5]
}
fn default_variance() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.1
}
fn default_ring_radius() -> f64 {
    3.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_tau() -> TauSetting {
    TauSetting::Mode(TauMode::Auto)
}
fn default_tol() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    1.5
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_dual_lr() -> f64 {
    1.0
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_true() -> bool {
    true
}
fn default_batch_size() -> usize {
    128
}
fn default_epochs() -> usize {
    50
}
fn default_warmup() -> usize {
    20
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_head_width() -> usize {
    DEFAULT_HEAD_WIDTH
}
fn default_energy_slope() -> f64 {
    DEFAULT_ENERGY_SLOPE
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read, apply the output-dir environment override and validate.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.output_dir = PathBuf::from(dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.task;
        check(t.n_train > 0, || "task.n_train must be positive".into())?;
        check(t.n_test > 0, || "task.n_test must be positive".into())?;
        check(t.n_ood_test > 0, || "task.n_ood_test must be positive".into())?;
        check(t.variance > 0.0 && t.variance.is_finite(), || "task.variance must be positive".into())?;
        check(t.noise >= 0.0 && t.noise.is_finite(), || "task.noise must be non-negative".into())?;
        check(t.ring_radius > 0.0 && t.ring_radius.is_finite(), || "task.ring_radius must be positive".into())?;
        check(t.separation.is_finite() && t.ood_mean.iter().all(|v| v.is_finite()), || {
            "task means must be finite".into()
        })?;

        let mix = &self.mixture;
        check(mix.pi > 0.0 && mix.pi <= 1.0, || format!("mixture.pi must lie in (0, 1], got {}", mix.pi))?;
        check(mix.m > 0, || "mixture.m must be positive".into())?;

        let m = &self.method;
        check(m.alpha > 0.0 && m.alpha < 1.0, || format!("method.alpha must lie in (0, 1), got {}", m.alpha))?;
        check(m.gamma > 1.0 && m.gamma.is_finite(), || format!("method.gamma must exceed 1, got {}", m.gamma))?;
        check(m.tol >= 0.0 && m.tol.is_finite(), || "method.tol must be non-negative".into())?;
        if let TauSetting::Fixed(tau) = m.tau {
            check(tau >= 0.0, || format!("method.tau must be non-negative or \"auto\", got {tau}"))?;
        }
        check(m.dual_lr > 0.0 && m.dual_lr.is_finite(), || "method.dual_lr must be positive".into())?;
        check(m.batch_size > 0, || "method.batch_size must be positive".into())?;
        check(m.epoch_length != Some(0), || "method.epoch_length must be positive".into())?;
        self.sgd().validate().map_err(|e| CliError::Config(format!("method: {e}")))?;
        match m.name {
            Method::Oe | Method::EnergyReg => {
                let l = m.lambda_reg.ok_or_else(|| {
                    CliError::Config(format!("method.lambda_reg is required for {}", m.name.name()))
                })?;
                check(l >= 0.0 && l.is_finite(), || "method.lambda_reg must be non-negative".into())?;
            }
            _ => check(m.lambda_reg.is_none(), || {
                format!("method.lambda_reg does not apply to {}", m.name.name())
            })?,
        }
        match (m.name, m.margins) {
            (Method::EnergyReg, None) => {
                return Err(CliError::Config("method.margins = [m_in, m_out] is required for energy_reg".into()))
            }
            (Method::EnergyReg, Some(_)) => {}
            (other, Some(_)) => {
                return Err(CliError::Config(format!("method.margins does not apply to {}", other.name())))
            }
            _ => {}
        }

        let model = &self.model;
        check(model.hidden.iter().all(|&h| h > 0), || "model.hidden sizes must be positive".into())?;
        check(model.energy_slope_init.is_finite(), || "model.energy_slope_init must be finite".into())?;
        if m.name == Method::WoodsNn {
            check(model.head, || "method woods_nn needs model.head = true".into())?;
            check(!model.hidden.is_empty(), || "model.head needs at least one hidden layer".into())?;
        }
        if model.head {
            check(model.head_width > 0, || "model.head_width must be positive".into())?;
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.method.learning_rate,
            momentum: self.method.momentum,
            weight_decay: self.method.weight_decay,
            nesterov: self.method.nesterov,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let m = &self.method;
        TrainConfig {
            epochs: m.epochs,
            batch_size: m.batch_size,
            epoch_length: m.epoch_length,
            sgd: self.sgd(),
            lr_schedule: m.lr_schedule,
            dual_lr: m.dual_lr,
            penalty_multiplier: m.gamma,
            initial_penalty: (1.0, 1.0),
            seed: self.seeds.training,
        }
    }

    /// Canonical JSON of the config; key order is fixed by the struct layout.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
output_dir = "out"
[task]
generator = "gaussian"
n_train = 100
n_val = 20
n_test = 50
n_ood_test = 50
[mixture]
pi = 0.5
m = 100
[method]
name = "woods"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.method.alpha, 0.05);
        assert_eq!(c.method.tau, TauSetting::Mode(TauMode::Auto));
        assert_eq!(c.method.batch_size, 128);
        assert_eq!(c.model.hidden, vec![32, 32]);
        assert_eq!(c.data_dir(), PathBuf::from("out/data"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("name = \"woods\"", "name = \"woods\"\nbogus = 1");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn range_checks() {
        for (from, to) in [
            ("pi = 0.5", "pi = 0.0"),
            ("pi = 0.5", "pi = 1.5"),
            ("name = \"woods\"", "name = \"woods\"\nalpha = 1.0"),
            ("name = \"woods\"", "name = \"woods\"\ngamma = 1.0"),
            ("name = \"woods\"", "name = \"woods_nn\""),
            ("name = \"woods\"", "name = \"energy_reg\"\nlambda_reg = 1.0"),
            ("name = \"woods\"", "name = \"oe\""),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(
                matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))),
                "{to}"
            );
        }
        let ok = MINIMAL.replace("pi = 0.5", "pi = 1.0");
        assert!(ExperimentConfig::from_toml(&ok).is_ok());
    }

    #[test]
    fn missing_generator_names_the_field() {
        let text = MINIMAL.replace("generator = \"gaussian\"\n", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("generator"), "{err}");
    }

    #[test]
    fn tau_accepts_number_or_auto() {
        let text = MINIMAL.replace("name = \"woods\"", "name = \"woods\"\ntau = 0.3");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap().method.tau, TauSetting::Fixed(0.3));
        let text = MINIMAL.replace("name = \"woods\"", "name = \"woods\"\ntau = \"sometimes\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("m = 100", "m = 101")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
