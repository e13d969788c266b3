use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use woods_core::alm::{
    constraint_values, epoch_log_csv, woods_nn_head_train, woods_train, ConstraintSpec, EpochLog, OodLossKind,
};
use woods_core::baselines::{
    baseline_train, ce_only_train, BaselineConfig, DEFAULT_MARGIN_IN, DEFAULT_MARGIN_OUT,
};
use woods_core::data::{
    gen_gaussian_task, gen_moons_ring_task, load_csv, load_csv_with_labels, load_provenance_csv, make_wild, split_counts,
    write_features_csv, write_labeled_csv, write_provenance_csv, CsvSchema, GaussianTaskSpec,
    LabeledDataset, MixtureSpec, MoonsRingSpec, WildDataset,
};
use woods_core::eval::{evaluate, score_all, validate_threshold, write_scores_csv, DetectionReport, Scorer};
use woods_core::nnet::MlpModel;
use woods_core::train::TrainConfig;

use crate::config::{ExperimentConfig, Generator, Method, TauSetting};
use crate::error::CliError;

pub const ID_TRAIN_FILE: &str = "id_train.csv";
pub const ID_VAL_FILE: &str = "id_val.csv";
pub const ID_TEST_FILE: &str = "id_test.csv";
pub const WILD_FILE: &str = "wild.csv";
pub const WILD_PROVENANCE_FILE: &str = "wild_provenance.csv";
pub const OOD_TEST_FILE: &str = "ood_test.csv";
pub const MODEL_FILE: &str = "model.json";
pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const WARMUP_LOG_FILE: &str = "warmup_log.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const LABEL_COLUMN: &str = "label";

/// Everything one experiment trains and tests on.
#[derive(Debug, Clone)]
pub struct Splits {
    pub id_train: LabeledDataset,
    pub id_val: Option<LabeledDataset>,
    pub id_test: LabeledDataset,
    pub wild: WildDataset,
    pub ood_test: Vec<Vec<f64>>,
}

/// Draw the synthetic task. The ID sample is split into train, validation,
/// test and the pool that feeds the wild mixture; the outlier sample into
/// the wild pool and the OOD test set.
pub fn build_splits(config: &ExperimentConfig) -> Result<Splits, CliError> {
    let t = &config.task;
    let m = config.mixture.m;
    let seed = config.seeds.data;
    let n_id = t.n_train + t.n_val + t.n_test + m;
    let n_ood = m + t.n_ood_test;
    let halves = [n_id.div_ceil(2), n_id / 2];
    let (id, ood) = match t.generator {
        Generator::Gaussian => gen_gaussian_task(
            &GaussianTaskSpec::two_class(t.separation, t.ood_mean, t.variance, 0, n_ood).with_class_counts(&halves),
            seed,
        )?,
        Generator::MoonsRing => gen_moons_ring_task(
            &MoonsRingSpec {
                noise: t.noise,
                class_counts: halves,
                ood_count: n_ood,
                ring_radius: t.ring_radius,
            },
            seed,
        )?,
    };
    let parts = split_counts(n_id, &[t.n_train, t.n_val, t.n_test, m], seed.wrapping_add(1))?;
    let ood_parts = split_counts(n_ood, &[m, t.n_ood_test], seed.wrapping_add(2))?;
    let pick = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| ood[i].clone()).collect() };
    let wild_id = id.subset(&parts[3]);
    let wild = make_wild(
        wild_id.features(),
        &pick(&ood_parts[0]),
        &MixtureSpec {
            pi: config.mixture.pi,
            m,
            seed: seed.wrapping_add(3),
        },
    )?;
    Ok(Splits {
        id_train: id.subset(&parts[0]),
        id_val: (t.n_val > 0).then(|| id.subset(&parts[1])),
        id_test: id.subset(&parts[2]),
        wild,
        ood_test: pick(&ood_parts[1]),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

pub fn write_splits(dir: &Path, splits: &Splits) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_labeled_csv(out(ID_TRAIN_FILE), &splits.id_train)?;
    if let Some(val) = &splits.id_val {
        write_labeled_csv(out(ID_VAL_FILE), val)?;
    }
    write_labeled_csv(out(ID_TEST_FILE), &splits.id_test)?;
    write_features_csv(out(WILD_FILE), splits.wild.samples())?;
    if let Some(p) = splits.wild.provenance() {
        write_provenance_csv(out(WILD_PROVENANCE_FILE), p)?;
    }
    write_features_csv(out(OOD_TEST_FILE), &splits.ood_test)?;
    Ok(written)
}

/// Write the dataset CSVs into the data directory; returns the paths.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let splits = build_splits(config)?;
    write_splits(&config.data_dir(), &splits)
}

/// Load the CSVs written by [`cmd_generate`] (or prepared by hand).
pub fn load_splits(dir: &Path) -> Result<Splits, CliError> {
    let labeled = CsvSchema::labeled(LABEL_COLUMN);
    let id_train = load_csv(dir.join(ID_TRAIN_FILE), &labeled)?.into_labeled()?;
    let dict = id_train
        .dictionary()
        .cloned()
        .ok_or_else(|| CliError::Config("training labels have no dictionary".into()))?;
    let val_path = dir.join(ID_VAL_FILE);
    let id_val = if val_path.exists() {
        Some(load_csv_with_labels(&val_path, &labeled, &dict)?)
    } else {
        None
    };
    let id_test = load_csv_with_labels(dir.join(ID_TEST_FILE), &labeled, &dict)?;
    let wild_rows = load_csv(dir.join(WILD_FILE), &CsvSchema::unlabeled())?.into_vectors();
    let prov_path = dir.join(WILD_PROVENANCE_FILE);
    let wild = if prov_path.exists() {
        WildDataset::with_provenance(wild_rows, load_provenance_csv(&prov_path)?)?
    } else {
        WildDataset::unlabeled(wild_rows)
    };
    let ood_test = load_csv(dir.join(OOD_TEST_FILE), &CsvSchema::unlabeled())?.into_vectors();
    Ok(Splits {
        id_train,
        id_val,
        id_test,
        wild,
        ood_test,
    })
}

pub fn init_model(config: &ExperimentConfig, input_dim: usize, classes: usize) -> Result<MlpModel, CliError> {
    let mut dims = vec![input_dim];
    dims.extend(&config.model.hidden);
    dims.push(classes);
    let m = &config.model;
    let model = if m.head {
        MlpModel::init_with_head(&dims, m.activation, m.head_width, config.seeds.init)?
    } else {
        MlpModel::init(&dims, m.activation, config.seeds.init)?
    };
    Ok(model.with_energy_slope(m.energy_slope_init))
}

pub fn baseline_config(config: &ExperimentConfig) -> Option<BaselineConfig> {
    let m = &config.method;
    let lambda = m.lambda_reg.unwrap_or(0.0);
    match m.name {
        Method::Woods | Method::WoodsNn => None,
        Method::CeOnly => Some(BaselineConfig::ce_only()),
        Method::Oe => Some(BaselineConfig::oe(lambda)),
        Method::EnergyReg => {
            let (a, b) = m.margins.unwrap_or((DEFAULT_MARGIN_IN, DEFAULT_MARGIN_OUT));
            Some(BaselineConfig::energy_reg(lambda, a, b))
        }
    }
}

/// In-distribution score used to report each method.
pub fn default_scorer(method: Method) -> Scorer {
    match method {
        Method::Woods => Scorer::EnergySigmoid,
        Method::WoodsNn => Scorer::NnHead,
        Method::CeOnly | Method::EnergyReg => Scorer::Energy,
        Method::Oe => Scorer::Msp,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub warmup_logs: Vec<EpochLog>,
    pub logs: Vec<EpochLog>,
    /// Constraint levels for the constrained methods.
    pub constraints: Option<ConstraintSpec>,
}

/// Cross-entropy warm-up followed by the configured method.
pub fn train_method(config: &ExperimentConfig, splits: &Splits) -> Result<TrainOutcome, CliError> {
    let id = &splits.id_train;
    let model = init_model(config, id.dim(), id.num_classes())?;
    let main_cfg = config.train_config();
    let warm_cfg = TrainConfig {
        epochs: config.method.warmup_epochs,
        seed: main_cfg.seed.wrapping_add(1),
        ..main_cfg.clone()
    };
    let (warm, warmup_logs) = ce_only_train(&model, id, &warm_cfg)?;
    let wild = splits.wild.samples();
    let m = &config.method;
    let (model, logs, constraints) = match m.name {
        Method::Woods | Method::WoodsNn => {
            let kind = if m.name == Method::Woods {
                OodLossKind::EnergySigmoid
            } else {
                OodLossKind::HingeHead
            };
            let tau = match m.tau {
                TauSetting::Fixed(t) => t,
                TauSetting::Mode(_) => 2.0 * constraint_values(kind, &warm, id)?.1,
            };
            let spec = ConstraintSpec {
                alpha: m.alpha,
                tau,
                tol: m.tol,
            };
            let (model, logs) = match kind {
                OodLossKind::EnergySigmoid => woods_train(&warm, id, wild, &spec, &main_cfg)?,
                OodLossKind::HingeHead => woods_nn_head_train(&warm, id, wild, &spec, &main_cfg)?,
            };
            (model, logs, Some(spec))
        }
        _ => {
            let bc = baseline_config(config).expect("baseline method");
            let (model, logs) = baseline_train(&bc, &warm, id, wild, &main_cfg)?;
            (model, logs, None)
        }
    };
    Ok(TrainOutcome {
        model,
        warmup_logs,
        logs,
        constraints,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSummary {
    pub scorer: Scorer,
    pub threshold: f64,
    pub wild_in_rate: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub method: Method,
    pub config_hash: String,
    pub wall_clock_seconds: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub tol: Option<f64>,
    pub final_epoch: Option<EpochLog>,
    /// Final ID OOD-loss ≤ α + tol (constrained methods only).
    pub ood_constraint_satisfied: Option<bool>,
    pub threshold: Option<ThresholdSummary>,
    pub config: ExperimentConfig,
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Train on the data directory and write the model, logs and summary.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainSummary, CliError> {
    let start = Instant::now();
    let splits = load_splits(&config.data_dir())?;
    let outcome = train_method(config, &splits)?;
    create_dir(&config.output_dir)?;
    outcome.model.save(config.output_dir.join(MODEL_FILE))?;
    write_text(&config.output_dir.join(EPOCH_LOG_FILE), &epoch_log_csv(&outcome.logs))?;
    if !outcome.warmup_logs.is_empty() {
        write_text(&config.output_dir.join(WARMUP_LOG_FILE), &epoch_log_csv(&outcome.warmup_logs))?;
    }

    let final_epoch = outcome.logs.last().copied();
    let spec = outcome.constraints;
    let scorer = default_scorer(config.method.name);
    let holdout = splits.id_val.as_ref().unwrap_or(&splits.id_train);
    let id_scores = score_all(&outcome.model, scorer, holdout.features())?;
    let wild_scores = score_all(&outcome.model, scorer, splits.wild.samples())?;
    let (threshold, wild_in_rate) =
        validate_threshold(&id_scores, &wild_scores, config.method.alpha, config.method.tol)?;

    let summary = TrainSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        method: config.method.name,
        config_hash: config.hash(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        warmup_epochs: config.method.warmup_epochs,
        epochs: config.method.epochs,
        alpha: spec.map(|s| s.alpha),
        tau: spec.map(|s| s.tau),
        tol: spec.map(|s| s.tol),
        final_epoch,
        ood_constraint_satisfied: spec
            .zip(final_epoch)
            .map(|(s, l)| l.ood_constraint <= s.alpha + s.tol),
        threshold: Some(ThresholdSummary {
            scorer,
            threshold,
            wild_in_rate,
            epsilon: config.method.tol,
        }),
        config: config.clone(),
    };
    let mut json = serde_json::to_string_pretty(&summary).map_err(woods_core::Error::from)?;
    json.push('\n');
    write_text(&config.output_dir.join(SUMMARY_FILE), &json)?;
    Ok(summary)
}

/// Inputs of the `evaluate` subcommand.
#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    pub id_test: PathBuf,
    pub ood_test: PathBuf,
    pub scorer: Scorer,
    /// File whose labels fix the class indices; defaults to `id_test`.
    pub labels_from: Option<PathBuf>,
    pub label_column: String,
    pub scores_csv: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<DetectionReport, CliError> {
    let model = MlpModel::load(&args.model)?;
    let schema = CsvSchema::labeled(args.label_column.clone());
    let id_test = match &args.labels_from {
        Some(path) => {
            let reference = load_csv(path, &schema)?.into_labeled()?;
            let dict = reference
                .dictionary()
                .cloned()
                .ok_or_else(|| CliError::Config("reference labels have no dictionary".into()))?;
            load_csv_with_labels(&args.id_test, &schema, &dict)?
        }
        None => load_csv(&args.id_test, &schema)?.into_labeled()?,
    };
    if id_test.num_classes() > model.num_classes() {
        return Err(woods_core::Error::Shape(format!(
            "test labels name {} classes, model has {}",
            id_test.num_classes(),
            model.num_classes()
        ))
        .into());
    }
    let id_test = LabeledDataset::new(id_test.features().to_vec(), id_test.labels().to_vec(), model.num_classes())?;
    let ood_test = load_csv(&args.ood_test, &CsvSchema::unlabeled())?.into_vectors();
    let report = evaluate(&model, &id_test, &ood_test, args.scorer)?;
    if let Some(path) = &args.scores_csv {
        let scores = woods_core::eval::score_set(&model, args.scorer, &id_test, &ood_test)?;
        write_scores_csv(path, &scores)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub pi: f64,
    pub method: String,
    pub scorer: String,
    pub fpr95: Option<f64>,
    pub auroc: Option<f64>,
    pub accuracy: Option<f64>,
    pub status: String,
    pub message: String,
}

pub const SWEEP_HEADER: [&str; 8] = ["pi", "method", "scorer", "fpr95", "auroc", "accuracy", "status", "message"];

/// Cell config: π and method replaced, seeds derived from the π index,
/// output under `<output_dir>/sweep/pi_<π>/<method>`.
pub fn sweep_cell_config(base: &ExperimentConfig, index: usize, pi: f64, method: Method) -> ExperimentConfig {
    let mut c = base.clone();
    let cell_root = base.output_dir.join("sweep").join(format!("pi_{pi}"));
    c.mixture.pi = pi;
    c.seeds.data = base.seeds.data.wrapping_add(index as u64);
    c.data_dir = Some(cell_root.join("data"));
    c.output_dir = cell_root.join(method.name());
    c.method.name = method;
    match method {
        Method::Oe => {
            c.method.lambda_reg = Some(base.method.lambda_reg.unwrap_or(0.5));
            c.method.margins = None;
        }
        Method::EnergyReg => {
            c.method.lambda_reg = Some(base.method.lambda_reg.unwrap_or(0.1));
            c.method.margins = Some(base.method.margins.unwrap_or((DEFAULT_MARGIN_IN, DEFAULT_MARGIN_OUT)));
        }
        _ => {
            c.method.lambda_reg = None;
            c.method.margins = None;
        }
    }
    if method == Method::WoodsNn {
        c.model.head = true;
    }
    c
}

fn run_cell(config: &ExperimentConfig, splits: &Splits) -> Result<DetectionReport, CliError> {
    config.validate()?;
    let outcome = train_method(config, splits)?;
    create_dir(&config.output_dir)?;
    outcome.model.save(config.output_dir.join(MODEL_FILE))?;
    write_text(&config.output_dir.join(EPOCH_LOG_FILE), &epoch_log_csv(&outcome.logs))?;
    Ok(evaluate(
        &outcome.model,
        &splits.id_test,
        &splits.ood_test,
        default_scorer(config.method.name),
    )?)
}

/// One row per (π, method); failures are recorded in the row.
pub fn cmd_sweep(config: &ExperimentConfig, pis: &[f64], methods: &[Method], table: &Path) -> Result<Vec<SweepRow>, CliError> {
    if pis.is_empty() || methods.is_empty() {
        return Err(CliError::Config("sweep needs at least one pi and one method".into()));
    }
    if let Some(pi) = pis.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(CliError::Config(format!("sweep pi must lie in (0, 1], got {pi}")));
    }
    let mut rows = Vec::new();
    for (i, &pi) in pis.iter().enumerate() {
        let data_cfg = sweep_cell_config(config, i, pi, methods[0]);
        let splits = build_splits(&data_cfg).and_then(|s| write_splits(&data_cfg.data_dir(), &s).map(|_| s));
        for &method in methods {
            let cell = sweep_cell_config(config, i, pi, method);
            let scorer = default_scorer(method);
            let result = match &splits {
                Ok(s) => run_cell(&cell, s),
                Err(e) => Err(CliError::Config(format!("data generation failed: {e}"))),
            };
            rows.push(match result {
                Ok(r) => SweepRow {
                    pi,
                    method: method.name().into(),
                    scorer: scorer.name().into(),
                    fpr95: Some(r.fpr_at_95tpr),
                    auroc: Some(r.auroc),
                    accuracy: Some(r.accuracy),
                    status: "ok".into(),
                    message: String::new(),
                },
                Err(e) => SweepRow {
                    pi,
                    method: method.name().into(),
                    scorer: scorer.name().into(),
                    fpr95: None,
                    auroc: None,
                    accuracy: None,
                    status: "error".into(),
                    message: e.to_string(),
                },
            });
        }
    }
    write_sweep_csv(table, &rows)?;
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut text = SWEEP_HEADER.join(",");
    text.push('\n');
    for r in rows {
        let message = r.message.replace(['\n', ','], " ");
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.pi,
            r.method,
            r.scorer,
            opt(r.fpr95),
            opt(r.auroc),
            opt(r.accuracy),
            r.status,
            message
        ));
    }
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
output_dir = "{}"
[task]
generator = "gaussian"
n_train = 101
n_val = 20
n_test = 33
n_ood_test = 17
[mixture]
pi = 0.5
m = 64
[method]
name = "woods"
epochs = 2
warmup_epochs = 1
batch_size = 16
"#,
            dir.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn split_sizes_match_config() {
        let dir = tempfile::tempdir().unwrap();
        let s = build_splits(&config(dir.path())).unwrap();
        assert_eq!(s.id_train.len(), 101);
        assert_eq!(s.id_val.as_ref().unwrap().len(), 20);
        assert_eq!(s.id_test.len(), 33);
        assert_eq!(s.wild.len(), 64);
        assert_eq!(s.ood_test.len(), 17);
    }

    #[test]
    fn generated_files_load_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let s = build_splits(&c).unwrap();
        cmd_generate(&c).unwrap();
        let back = load_splits(&c.data_dir()).unwrap();
        assert_eq!(back.id_train.features(), s.id_train.features());
        assert_eq!(back.id_train.labels(), s.id_train.labels());
        assert_eq!(back.wild.samples(), s.wild.samples());
        assert_eq!(back.wild.provenance(), s.wild.provenance());
        assert_eq!(back.ood_test, s.ood_test);
    }

    #[test]
    fn sweep_cells_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let a = sweep_cell_config(&c, 0, 0.1, Method::Woods);
        let b = sweep_cell_config(&c, 1, 0.5, Method::Oe);
        assert_ne!(a.output_dir, b.output_dir);
        assert_eq!(b.method.lambda_reg, Some(0.5));
        assert!(b.validate().is_ok());
        assert!(sweep_cell_config(&c, 0, 0.1, Method::EnergyReg).validate().is_ok());
        assert!(sweep_cell_config(&c, 0, 0.1, Method::WoodsNn).validate().is_ok());
    }
}
