use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subset_mle::model::{ModelKind, Which};
use subset_mle_cli::commands::{self, FitArgs, SimulateArgs, VerifyArgs};
use subset_mle_cli::config::{CheckName, ExperimentConfig};
use subset_mle_cli::run::execute;
use subset_mle_cli::{with_workers, CliError};

#[derive(Parser)]
#[command(name = "subset-mle", version, about = "Crossed random-effects MLE experiments and consistency checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of an experiment config; writes report.json and report.csv.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short)]
        verbose: bool,
    },
    /// Simulate a dataset (CSV plus JSON sidecar).
    Simulate {
        #[arg(long)]
        model: ModelKind,
        #[arg(long = "N")]
        levels: usize,
        #[arg(long = "T")]
        times: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated parameter; defaults to the reference value.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum likelihood fit of a dataset file.
    Fit {
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Importance-sampling draws (mglmm).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a single check.
    Verify {
        #[arg(long)]
        check: CheckName,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        which: Option<Which>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta0: Option<Vec<f64>>,
        #[arg(long = "T")]
        times: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Collate report.json files into one CSV table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_config(path: PathBuf, output_dir: Option<PathBuf>, workers: Option<usize>, verbose: bool) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = commands::load_unvalidated(&path)?;
    if let Some(d) = output_dir {
        cfg.output_dir = d;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.apply_env()?;
    cfg.validate()?;
    let report = execute(&cfg, verbose)?;
    println!("wrote {}", cfg.output_dir.join("report.json").display());
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed(report.failed()))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            workers,
            verbose,
        } => run_config(config, output_dir, workers, verbose),
        Command::Simulate {
            model,
            levels,
            times,
            p,
            seed,
            theta,
            out,
        } => {
            let data = commands::simulate(&SimulateArgs {
                model,
                levels,
                times,
                p,
                seed,
                theta,
                out: out.clone(),
            })?;
            println!("wrote {} responses to {}", data.n(), out.display());
            Ok(())
        }
        Command::Fit {
            model,
            data,
            starts,
            seed,
            samples,
            out,
            workers,
        } => {
            let args = FitArgs {
                model,
                data,
                starts,
                seed,
                samples,
                out,
            };
            let (_, json) = with_workers(workers, || commands::fit(&args))??;
            if args.out.is_none() {
                print!("{json}");
            }
            Ok(())
        }
        Command::Verify {
            check,
            model,
            which,
            config,
            sizes,
            reps,
            epsilon,
            seed,
            theta0,
            times,
            out,
            workers,
        } => {
            let args = VerifyArgs {
                check,
                model,
                which,
                config,
                sizes,
                reps,
                epsilon,
                seed,
                theta0,
                times,
                out,
            };
            let report = with_workers(workers, || commands::verify(&args))??;
            if args.out.is_none() {
                print!("{}", report.to_json().map_err(|e| CliError::Runtime(e.to_string()))?);
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Failed(report.failed()))
            }
        }
        Command::Report { paths, out } => {
            let passed = match &out {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display())))?;
                    commands::report(&paths, f)?
                }
                None => commands::report(&paths, std::io::stdout().lock())?,
            };
            if !passed {
                eprintln!("note: some collated reports contain failed checks");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
