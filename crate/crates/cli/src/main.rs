use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use woods_cli::{cmd_evaluate, cmd_generate, cmd_sweep, cmd_train, CliError, EvaluateArgs, ExperimentConfig, Method};
use woods_core::eval::Scorer;

#[derive(Parser)]
#[command(name = "woods", version, about = "Train and evaluate OOD detectors on labeled ID data plus unlabeled wild data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic ID, wild and OOD-test CSVs.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the configured method; writes model.json, epoch_log.csv and summary.json.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score ID and OOD test files with a trained model and print a JSON report.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        id_test: PathBuf,
        #[arg(long)]
        ood_test: PathBuf,
        /// energy_sigmoid, energy, nn_head or msp
        #[arg(long, default_value = "energy_sigmoid")]
        scorer: Scorer,
        /// Labeled file defining the class indices (usually the training file).
        #[arg(long)]
        labels_from: Option<PathBuf>,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump per-sample scores as CSV.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Generate, train and evaluate for every (pi, method) pair.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,1.0")]
        pi: Vec<f64>,
        /// Defaults to the method in the config.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Defaults to <output_dir>/sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config } => {
            let config = ExperimentConfig::load(&config)?;
            for path in cmd_generate(&config)? {
                println!("{}", path.display());
            }
        }
        Command::Train { config } => {
            let config = ExperimentConfig::load(&config)?;
            let summary = cmd_train(&config)?;
            if let Some(last) = summary.final_epoch {
                println!(
                    "{}: ood constraint {:.4}, classification {:.4} after {} epochs ({:.1}s)",
                    summary.method.name(),
                    last.ood_constraint,
                    last.cls_constraint,
                    summary.epochs,
                    summary.wall_clock_seconds
                );
            }
            println!("{}", config.output_dir.display());
        }
        Command::Evaluate {
            model,
            id_test,
            ood_test,
            scorer,
            labels_from,
            label_column,
            out,
            scores,
        } => {
            let report = cmd_evaluate(&EvaluateArgs {
                model,
                id_test,
                ood_test,
                scorer,
                labels_from,
                label_column,
                scores_csv: scores,
            })?;
            let mut json = report.to_json()?;
            json.push('\n');
            match out {
                Some(path) => std::fs::write(&path, json).map_err(|e| CliError::Io(path, e))?,
                None => print!("{json}"),
            }
        }
        Command::Sweep { config, pi, methods, out } => {
            let config = ExperimentConfig::load(&config)?;
            let methods = if methods.is_empty() { vec![config.method.name] } else { methods };
            let table = out.unwrap_or_else(|| config.output_dir.join("sweep.csv"));
            let rows = cmd_sweep(&config, &pi, &methods, &table)?;
            for r in &rows {
                match r.fpr95 {
                    Some(fpr) => println!("pi={} {:<10} fpr95={fpr:.4} auroc={:.4}", r.pi, r.method, r.auroc.unwrap_or(f64::NAN)),
                    None => println!("pi={} {:<10} {}", r.pi, r.method, r.message),
                }
            }
            println!("{}", table.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
