use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn woods(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_woods"))
        .args(args)
        .env_remove("WOODS_OUTPUT_DIR")
        .output()
        .expect("spawn woods")
}

fn small_config(dir: &Path, method: &str, extra_model: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"output_dir = "{out}"

[task]
generator = "gaussian"
n_train = 200
n_val = 60
n_test = 100
n_ood_test = 100

[mixture]
pi = 0.3
m = 200

[method]
name = "{method}"
epochs = 3
warmup_epochs = 2
batch_size = 32

[model]
hidden = [8]
{extra_model}
"#,
        out = out.display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "woods", "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&woods(&["generate", "--config", cfg])), 0);
    let data = dir.path().join("out/data");
    let first: Vec<(String, Vec<u8>)> = read_dir_sorted(&data);
    assert_eq!(first.len(), 6);
    assert_eq!(code(&woods(&["generate", "--config", cfg])), 0);
    assert_eq!(first, read_dir_sorted(&data));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn train_then_evaluate_reports_unit_interval_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "woods", "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&woods(&["generate", "--config", cfg])), 0);
    let train = woods(&["train", "--config", cfg]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));

    let out = dir.path().join("out");
    for f in ["model.json", "epoch_log.csv", "warmup_log.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let log = fs::read_to_string(out.join("epoch_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);

    let data = out.join("data");
    let args = |report: &Path| {
        vec![
            "evaluate".to_string(),
            "--model".into(),
            out.join("model.json").display().to_string(),
            "--id-test".into(),
            data.join("id_test.csv").display().to_string(),
            "--ood-test".into(),
            data.join("ood_test.csv").display().to_string(),
            "--labels-from".into(),
            data.join("id_train.csv").display().to_string(),
            "--out".into(),
            report.display().to_string(),
        ]
    };
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    for r in [&r1, &r2] {
        let a = args(r);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        let o = woods(&a);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&r1).unwrap();
    assert_eq!(text, fs::read_to_string(&r2).unwrap());
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["fpr_at_95tpr", "auroc", "accuracy"] {
        let v = json[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(json["n_id"], 100);
    assert_eq!(json["n_ood"], 100);
}

#[test]
fn missing_config_file_is_a_data_error() {
    let o = woods(&["train", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "output_dir = \"x\"\nbogus = 1\n[task]\n[mixture]\npi = 0.1\nm = 10\n[method]\nname = \"woods\"\n").unwrap();
    let o = woods(&["generate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn woods_nn_without_head_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "woods_nn", "head = false");
    let o = woods(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("head"));
}

#[test]
fn corrupt_csv_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "woods", "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&woods(&["generate", "--config", cfg])), 0);
    fs::write(dir.path().join("out/data/wild.csv"), "x0,x1\n0.5,not_a_number\n").unwrap();
    let o = woods(&["train", "--config", cfg]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wild.csv"));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "woods", "");
    let table = dir.path().join("sweep.csv");
    let o = woods(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--pi",
        "0.2,1.0",
        "--methods",
        "woods,ce_only",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn missing_generator_names_the_field() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, "output_dir = \"x\"\n[task]\nn_train = 10\n[mixture]\npi = 0.1\nm = 10\n[method]\nname = \"woods\"\n").unwrap();
    let o = woods(&["generate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("generator"));
}

#[test]
fn evaluate_scorers_against_a_headless_model() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "ce_only", "");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&woods(&["generate", "--config", cfg])), 0);
    assert_eq!(code(&woods(&["train", "--config", cfg])), 0);
    let out = dir.path().join("out");
    let data = out.join("data");
    let model = out.join("model.json");
    let id_test = data.join("id_test.csv");
    let ood_test = data.join("ood_test.csv");
    let run = |scorer: &str| {
        woods(&[
            "evaluate",
            "--model",
            model.to_str().unwrap(),
            "--id-test",
            id_test.to_str().unwrap(),
            "--ood-test",
            ood_test.to_str().unwrap(),
            "--scorer",
            scorer,
        ])
    };
    assert_eq!(code(&run("energy")), 0);
    assert_eq!(code(&run("msp")), 0);
    assert_eq!(code(&run("nn_head")), 2);
}

#[test]
fn bundled_example_meets_its_constraint() {
    let dir = TempDir::new().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml");
    for cmd in ["generate", "train"] {
        let o = Command::new(env!("CARGO_BIN_EXE_woods"))
            .args([cmd, "--config", config])
            .env("WOODS_OUTPUT_DIR", dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ood_constraint_satisfied"], true);
    let c = summary["final_epoch"]["ood_constraint"].as_f64().unwrap();
    assert!(c <= 0.05 + 0.05, "{c}");
}
