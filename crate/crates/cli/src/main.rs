//! `srlfi` command line: run scoring-rule and GAN posterior experiments
//! from a TOML config, with persistable intermediate artifacts.

use clap::{Args, Parser, Subcommand};
use srlfi_cli::config::ExperimentConfig;
use srlfi_cli::runner::{
    c2st_only, evaluate_only, run_experiment, sbc_only, simulate_only, train_only, CliError,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "srlfi", version, about = "Likelihood-free posterior experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent seeds.
    #[arg(long, value_name = "INT", default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate datasets and persist them.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train generators and write checkpoints plus loss histories.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate trained checkpoints on held-out pairs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Load this checkpoint instead of the per-seed default.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Simulation-based calibration rank check.
    Sbc {
        #[command(flatten)]
        common: Common,
        /// Prior draws (rank statistics) to collect.
        #[arg(long, value_name = "INT", default_value_t = 200)]
        n_priors: usize,
        /// Posterior draws per rank statistic.
        #[arg(long, value_name = "INT", default_value_t = 100)]
        n_draws: usize,
        /// Load this checkpoint instead of the per-seed default.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Classifier two-sample test against the reference posterior.
    C2st {
        #[command(flatten)]
        common: Common,
        /// Load this checkpoint instead of the per-seed default.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Aggregate metric CSVs into report.csv and summary.csv.
    Report {
        /// Experiment configuration file (TOML); its out_dir is scanned.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Directory to scan instead of the config's out_dir.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Simulate, train, evaluate, and report in one invocation.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            simulate_only(&cfg, common.threads)?;
            println!("simulated {} dataset(s) into {}", cfg.seeds.len(), cfg.out_dir.display());
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            train_only(&cfg, common.threads)?;
            println!("trained {} seed(s) into {}", cfg.seeds.len(), cfg.out_dir.display());
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load_config(&common)?;
            evaluate_only(&cfg, common.threads, checkpoint.as_deref())?;
            println!("evaluated {} seed(s) into {}", cfg.seeds.len(), cfg.out_dir.display());
        }
        Command::Sbc { common, n_priors, n_draws, checkpoint } => {
            let cfg = load_config(&common)?;
            let summaries = sbc_only(&cfg, n_priors, n_draws, checkpoint.as_deref())?;
            for s in summaries {
                for (j, ks) in s.per_component.iter().enumerate() {
                    println!(
                        "seed {} component {}: KS statistic {:.4}, p-value {:.4}",
                        s.seed,
                        j + 1,
                        ks.statistic,
                        ks.p_value
                    );
                }
            }
        }
        Command::C2st { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let summaries = c2st_only(&cfg, checkpoint.as_deref())?;
            for s in summaries {
                println!("seed {}: c2st accuracy {:.4}", s.seed, s.accuracy);
            }
        }
        Command::Report { config, out } => {
            let dir = match (out, config) {
                (Some(dir), _) => dir,
                (None, Some(path)) => ExperimentConfig::load(&path)?.out_dir,
                (None, None) => {
                    return Err(CliError::Other("report needs --config or --out".into()));
                }
            };
            let report = srlfi_cli::report::emit_report(&dir)?;
            print!("{}", report.summary_csv);
        }
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let report = run_experiment(&cfg, common.threads)?;
            print!("{}", report.summary_csv);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
