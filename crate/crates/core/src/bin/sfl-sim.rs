use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sfl_sim::harness::report::{oracle_csv, resources_csv, ste_curve_csv, write_output};
use sfl_sim::harness::sweep::first_round_problem;
use sfl_sim::harness::{
    emit_reports, oracle_check, run_simulation, sweep_resources, sweep_ste_curve, OutputFormat,
    ScenarioConfig,
};
use sfl_sim::optimizer::Mode;
use sfl_sim::HarnessError;

#[derive(Parser)]
#[command(name = "sfl-sim", about = "Token, bandwidth and power allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-round simulation.
    Run(Common),
    /// STE against a common token budget at equal split and peak power.
    SweepSte(Common),
    /// Mean token budget over the bandwidth and energy grids.
    SweepResources(Common),
    /// Compare the solver with the exhaustive oracle on small instances.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                ScenarioConfig::from_toml(&text)?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.config()?;
            let reports = run_simulation(&cfg)?;
            emit_reports(&reports, c.format, &c.out)?;
        }
        Command::SweepSte(c) => {
            let cfg = c.config()?;
            let problem = first_round_problem(&cfg)?;
            let p = &problem.params;
            let curve = sweep_ste_curve(&problem, p.min_tokens..=p.num_patches)?;
            write_output(&c.out, "ste_curve.csv", &ste_curve_csv(&curve))?;
        }
        Command::SweepResources(c) => {
            let cfg = c.config()?;
            let cells = sweep_resources(&cfg)?;
            write_output(&c.out, "resources.csv", &resources_csv(&cells))?;
        }
        Command::OracleCheck(c) => {
            let cfg = c.config()?;
            let rows = oracle_check(cfg.seed, cfg.oracle_instances, &cfg.tolerances);
            if rows.is_empty() {
                return Err(HarnessError::Infeasible(
                    "no instance had a feasible oracle point".into(),
                ));
            }
            write_output(&c.out, "oracle_check.csv", &oracle_csv(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
