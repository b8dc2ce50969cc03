use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jcm::checks::{self, Check};
use jcm::error::Error;
use jcm::experiment::{exit_code, run_experiment, ExperimentConfig};

const SEED_VAR: &str = "JCM_SEED";

#[derive(Parser)]
#[command(name = "jcm", version, about = "Joint coding-modulation experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (method, SNR, seed) cell of a config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the full differentiable chain.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Bound, posterior and gradient-estimator checks on enumerable systems.
    Oraclecheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20_000)]
        draws: usize,
    },
    /// Train JCM per SNR and report constellation shaping.
    Shaping {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gumbel-Max sampling versus random PMFs.
    SampleDist {
        #[arg(long, default_value_t = 16)]
        order: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 20)]
        pmfs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn env_seed() -> Result<Option<String>, Error> {
    match std::env::var(SEED_VAR) {
        Ok(v) => Ok(Some(v)),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config { field: SEED_VAR.into(), reason: e.to_string() }),
    }
}

fn suite_seed(flag: Option<u64>) -> Result<u64, Error> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env_seed()? {
        Some(v) => v.trim().parse().map_err(|_| Error::Config { field: SEED_VAR.into(), reason: format!("`{v}` is not an integer") }),
        None => Ok(1),
    }
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    cfg.override_seed(env_seed()?.as_deref())?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn report(checks: &[Check]) -> ExitCode {
    for c in checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            println!("rate r = n/k = {}", cfg.rate());
            let summary = run_experiment(&cfg, Some(&cfg.output_dir))?;
            for r in &summary.results {
                println!(
                    "{} snr={} seed={} acc={:.4} psnr={:.2} dB loss={:.4}",
                    r.method.name(),
                    r.snr_db,
                    r.seed,
                    r.accuracy,
                    r.psnr_db,
                    r.final_loss
                );
            }
            println!("wrote {}", cfg.output_dir.join("results.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed } => Ok(report(&checks::gradcheck_suite(suite_seed(seed)?)?)),
        Command::Oraclecheck { seed, draws } => Ok(report(&checks::oracle_suite(suite_seed(seed)?, draws)?)),
        Command::Shaping { config, out } => {
            let cfg = load(&config, out)?;
            let (reports, checks) = checks::shaping_suite(&cfg, Some(&cfg.output_dir))?;
            for r in &reports {
                println!("{}", r.to_json());
            }
            Ok(report(&checks))
        }
        Command::SampleDist { order, draws, pmfs, seed } => {
            if order < 2 {
                return Err(Error::Config { field: "order".into(), reason: "need at least two categories".into() });
            }
            Ok(report(&checks::sample_dist_suite(order, draws, pmfs, suite_seed(seed)?)))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
