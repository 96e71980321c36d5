//! Command-line driver: `run`, `sweep` and `verify`.
//!
//! Exit codes: 0 success, 1 internal error or failed verification,
//! 2 configuration or usage error, 3 budget abort (partial outputs written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mltc_core::config::ExperimentConfig;
use mltc_core::experiment::{run_experiment, ExperimentOutcome};
use mltc_core::report::{render_report, write_outputs};
use mltc_core::verify::{run_verify, VerifyOptions};
use mltc_core::Error;

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mltc", version, about = "Multilevel low-rank tensor collocation for random elliptic PDEs")]
struct Cli {
    /// Seed of the cross approximation; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; with one thread level times are CPU times.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configuration (default `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Builds the surrogate for one configuration and measures its errors.
    Run {
        /// Path to a TOML configuration, or the name of a bundled one.
        config: String,
    },
    /// Repeats the run for several maximal levels.
    Sweep {
        config: String,
        /// Strictly increasing maximal levels, e.g. `--levels 1,2,3`.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        levels: Vec<usize>,
    },
    /// Runs the built-in verification suites.
    Verify {
        /// Multiplies every tolerance (for exercising the failure path).
        #[arg(long, default_value_t = 1.0, hide = true)]
        tolerance_scale: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Budget(_) => EXIT_BUDGET,
        _ => EXIT_INTERNAL,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn load_config(cli: &Cli, arg: &str) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::resolve(arg)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> ExitCode {
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = write_outputs(&dir, outcome) {
        return fail(&e);
    }
    print!("{}", render_report(&outcome.report));
    println!("outputs written to {}", dir.display());
    match &outcome.report.aborted {
        Some(msg) => {
            eprintln!("budget abort: {msg}");
            ExitCode::from(EXIT_BUDGET)
        }
        None => ExitCode::SUCCESS,
    }
}

fn experiment(cli: &Cli, config: &str, levels: Option<&[usize]>) -> ExitCode {
    let mut cfg = match load_config(cli, config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let levels = match levels {
        Some(l) => {
            if let Some(&top) = l.last() {
                cfg.run.max_level = top;
            }
            l.to_vec()
        }
        None => vec![cfg.run.max_level],
    };
    match run_experiment(&cfg, &levels) {
        Ok(outcome) => finish(&cfg, &outcome),
        Err(e) => fail(&e),
    }
}

fn verify(tolerance_scale: f64) -> ExitCode {
    match run_verify(&VerifyOptions { tolerance_scale }) {
        Ok(summary) => {
            print!("{}", summary.render());
            for c in summary.failures() {
                eprintln!(
                    "failed: {} / {}: error {:e} exceeds {:e}",
                    c.suite,
                    c.name,
                    c.error,
                    c.tolerance * tolerance_scale
                );
            }
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match &cli.command {
        Command::Run { config } => experiment(&cli, config, None),
        Command::Sweep { config, levels } => experiment(&cli, config, Some(levels)),
        Command::Verify { tolerance_scale } => verify(*tolerance_scale),
    }
}
