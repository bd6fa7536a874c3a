use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfib_cli::bundle::write_atomic;
use rfib_cli::commands::{self, alpha_grid};
use rfib_cli::config::{ExperimentConfig, SEED_ENV};
use rfib_cli::CliError;
use rfib_core::DiagGaussian;

/// Train and audit Rényi fair information bottleneck models.
///
/// Exit codes: 0 success, 2 config error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "rfib", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model, evaluate it and write a result bundle.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every point of the config's sweep grid.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output directory for per-point bundles and summary.csv.
        #[arg(long)]
        out: PathBuf,
        /// Grid points trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fairness metrics of a predictions CSV, with CAI against a baseline.
    Audit {
        /// CSV with columns yhat,phat,y,s.
        #[arg(long)]
        predictions: PathBuf,
        /// Baseline predictions for CAI.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// CAI order in [0, 1]; repeatable. Defaults to 0.5 and 0.75.
        #[arg(long = "lambda")]
        lambdas: Vec<f64>,
        /// Also write audit.json and audit.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the configured loss gradient.
    Gradcheck {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Tabulate D_alpha(p ‖ q) for diagonal Gaussians over an alpha grid.
    Divtable {
        /// Comma-separated means of p.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        mean_p: Vec<f64>,
        /// Comma-separated variances of p.
        #[arg(long, value_delimiter = ',')]
        var_p: Vec<f64>,
        /// Means of q; defaults to zeros.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        mean_q: Vec<f64>,
        /// Variances of q; defaults to ones.
        #[arg(long, value_delimiter = ',')]
        var_q: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha_step: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Training seed; overrides RFIB_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let env = std::env::var(SEED_ENV).ok();
        cfg.apply_seed_overrides(self.seed, env.as_deref())?;
        Ok(cfg)
    }
}

fn gaussian(which: &str, mean: Vec<f64>, var: Vec<f64>, dim: usize) -> Result<DiagGaussian, CliError> {
    let mean = if mean.is_empty() { vec![0.0; dim] } else { mean };
    let var = if var.is_empty() { vec![1.0; dim] } else { var };
    DiagGaussian::new(mean, var).map_err(|e| CliError::Config(format!("{which}: {e}")))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { exp, out } => {
            let cfg = exp.load()?;
            let b = commands::run(&cfg, &out)?;
            let m = &b.metrics;
            println!(
                "{} seed {}: acc {:.2} acc_gap {:.2} acc_min {:.2} dp_gap {:.2} eqodds_gap {:.2} -> {}",
                b.method,
                b.seed,
                m.acc,
                m.acc_gap,
                m.acc_min,
                m.dp_gap,
                m.eqodds_gap,
                out.display()
            );
        }
        Command::Sweep { exp, out, jobs } => {
            let cfg = exp.load()?;
            let points = commands::sweep(&cfg, &out, jobs)?;
            let failed = points.iter().filter(|p| p.result.is_err()).count();
            println!(
                "{} points, {} failed -> {}",
                points.len(),
                failed,
                out.join(commands::SUMMARY_FILE).display()
            );
        }
        Command::Audit {
            predictions,
            baseline,
            lambdas,
            out,
        } => {
            let report = commands::audit(&predictions, baseline.as_deref(), &lambdas)?;
            print!("{report}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
                let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
                write_atomic(&dir.join("audit.json"), json.as_bytes())?;
                write_atomic(&dir.join("audit.txt"), report.to_string().as_bytes())?;
            }
        }
        Command::Gradcheck { exp, samples, step, tol } => {
            let cfg = exp.load()?;
            let err = commands::gradcheck(&cfg, samples, step)?;
            println!("max relative gradient error {err:.3e} (tolerance {tol:.0e})");
            if err.is_nan() || err > tol {
                return Err(CliError::Numeric(format!("gradient error {err:e} exceeds {tol:e}")));
            }
        }
        Command::Divtable {
            mean_p,
            var_p,
            mean_q,
            var_q,
            alpha_max,
            alpha_step,
            out,
        } => {
            let dim = [&mean_p, &var_p, &mean_q, &var_q].iter().map(|v| v.len()).max().unwrap_or(0).max(1);
            let p = gaussian("p", mean_p, var_p, dim)?;
            let q = gaussian("q", mean_q, var_q, dim)?;
            let table = commands::divtable(&p, &q, &alpha_grid(alpha_max, alpha_step)?)?;
            write_or_print(out.as_deref(), &table)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfib: {e}");
            e.exit_code()
        }
    }
}
