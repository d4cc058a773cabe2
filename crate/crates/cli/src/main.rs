use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsmpc_cli::commands::{self, TuneTarget};
use fsmpc_cli::{CliError, CliResult, Context, RunConfig};
use fsmpc_core::control::ControllerParams;
use fsmpc_core::tuner::OperatingPoint;

/// Five-phase induction motor drive: FSMPC simulation, tuning and ANN
/// parameter scheduling.
#[derive(Debug, Parser)]
#[command(name = "fsmpc", version)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel runs.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured step-test scenarios and compute their indicators.
    Simulate,
    /// Tune controller parameters at one operating point.
    Tune {
        /// Start speed (rad/s); defaults to the first scenario's.
        #[arg(long)]
        omega0: Option<f64>,
        /// Target speed (rad/s); defaults to the first scenario's.
        #[arg(long)]
        omega_ref: Option<f64>,
        /// Minimise distance to `kp,ki,lambda_xy,lambda_sc` instead of simulating.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["omega0", "omega_ref"])]
        surrogate: Option<Vec<f64>>,
    },
    /// Tune every grid point and write the dataset.
    Dataset,
    /// Train the network on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Compare fixed parameters with the online network in closed loop.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Tuned dataset to compare against.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context::new(config, cli.out, cli.seed, cli.workers);
    match cli.command {
        Command::Simulate => {
            let out = commands::cmd_simulate(&ctx)?;
            for (i, pi) in out.indicators.iter().enumerate() {
                println!("scenario {i}: {pi:?}");
            }
        }
        Command::Tune { omega0, omega_ref, surrogate } => {
            let target = match surrogate {
                Some(v) => {
                    let a: [f64; 4] = v
                        .try_into()
                        .map_err(|_| CliError::Config("--surrogate takes kp,ki,lambda_xy,lambda_sc".into()))?;
                    TuneTarget::Surrogate(ControllerParams::from_array(a))
                }
                None => {
                    let first = ctx.config.scenarios.first();
                    let pick = |flag: Option<f64>, dflt: Option<f64>, name: &str| {
                        flag.or(dflt).ok_or_else(|| CliError::Config(format!("--{name} required without scenarios")))
                    };
                    TuneTarget::Simulation(OperatingPoint {
                        omega0: pick(omega0, first.map(|s| s.omega0), "omega0")?,
                        omega_ref: pick(omega_ref, first.map(|s| s.omega_ref), "omega-ref")?,
                    })
                }
            };
            let f = commands::cmd_tune(&ctx, target)?;
            let r = &f.result;
            println!(
                "theta* = {:?}\nxi = {} (penalized {}), feasible = {}, {} iterations, {} evaluations, stop: {:?}",
                r.theta_star, r.xi_star, r.xi_penalized, r.feasible, r.iterations, r.evaluations, r.stop_reason
            );
        }
        Command::Dataset => {
            let o = commands::cmd_dataset(&ctx)?;
            println!(
                "{} records, {} failures, {} step tests",
                o.records.len(),
                o.failures.len(),
                o.evaluations
            );
        }
        Command::Train { dataset } => {
            let (_, rep) = commands::cmd_train(&ctx, &dataset)?;
            println!(
                "hidden = {}, validation RMSE = {:?}, test RMSE = {:?}",
                rep.selected_hidden, rep.validation_rmse, rep.test_rmse
            );
        }
        Command::Evaluate { model, dataset } => {
            let rep = commands::cmd_evaluate(&ctx, &model, dataset.as_deref())?;
            println!(
                "constraint satisfaction: fixed {:.3}, ann {:.3}; within 20% of tuned: {}/{}",
                rep.fixed_constraint_satisfaction,
                rep.ann_constraint_satisfaction,
                rep.within_20pct_of_tuned,
                rep.compared_with_tuned
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fsmpc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
