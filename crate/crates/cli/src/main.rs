use std::path::PathBuf;
use std::process::ExitCode;

use cbilab_cli::config::{Experiment, Overrides};
use cbilab_cli::report;
use cbilab_cli::run::{self, Report};
use cbilab_cli::{catalog, resolve, CliError, Scenario};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cbilab", version, about = "Ergodicity experiments for branching processes with immigration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated paths or pairs.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Euler step size.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Directory for `<scenario>.csv` and `<scenario>.json`; without it the
    /// table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the table printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CBILAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the mechanism conditions of a scenario's model.
    Check {
        #[arg(default_value = "cir-check")]
        scenario: String,
    },
    /// Solve the flow equation for the scenario's CBI parameters.
    Flow {
        #[arg(default_value = "cir-flow")]
        scenario: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Comma-separated output times.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
        times: Vec<f64>,
    },
    /// Simulate an ensemble and report means on the record grid.
    Simulate {
        #[arg(default_value = "cir-w1")]
        scenario: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
    },
    /// Run a decay or convergence scenario.
    Ergodicity {
        #[arg(default_value = "cir-w1")]
        scenario: String,
    },
    /// Run a limiting-variance scenario.
    Fclt {
        #[arg(default_value = "fclt-cir")]
        scenario: String,
    },
    /// Run any scenario, given as a TOML file or a catalog name.
    Run { config: String },
    /// List the built-in scenarios.
    List,
}

fn load(source: &str, g: &Global) -> Result<Scenario, CliError> {
    let mut s = resolve(source)?;
    Overrides {
        seed: g.seed,
        paths: g.paths,
        dt: g.dt,
        horizon: g.horizon,
    }
    .apply(&mut s);
    Ok(s)
}

fn emit(report: &Report, g: &Global) -> Result<(), CliError> {
    match &g.out {
        Some(dir) => {
            let (csv, json) = report::write(report, dir)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
        }
        None => match g.format {
            Format::Csv => print!("{}", report::csv(&report.rows)),
            Format::Json => println!("{}", report::summary_json(report)?),
        },
    }
    for c in &report.checks {
        eprintln!("{:?}: {}: {}", c.status, c.name, c.detail);
    }
    eprintln!("{}: {:?}", report.scenario.name, report.status);
    Ok(())
}

fn expect_kind(s: &Scenario, allowed: &[&str], command: &str) -> Result<(), CliError> {
    let kind = s.experiment.kind();
    if allowed.contains(&kind) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "scenario `{}` is a {kind} experiment; `{command}` runs {}",
            s.name,
            allowed.join(", ")
        )))
    }
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    let report = match &cli.command {
        Command::List => {
            for s in catalog::catalog() {
                println!("{:<16} {:<22} {}", s.name, s.experiment.kind(), s.result);
            }
            return Ok(0);
        }
        Command::Check { scenario } => {
            let mut s = load(scenario, g)?;
            s.experiment = Experiment::MechanismReport;
            let r = run::run(&s)?;
            println!("{}", serde_json::to_string_pretty(&r.details["mechanisms"]).unwrap());
            return Ok(r.exit_code());
        }
        Command::Flow {
            scenario,
            lambda,
            times,
        } => {
            let mut s = load(scenario, g)?;
            s.experiment = Experiment::FlowEval {
                lambda: *lambda,
                times: times.clone(),
            };
            run::run(&s)?
        }
        Command::Simulate { scenario, x0 } => run::simulate_summary(&load(scenario, g)?, *x0)?,
        Command::Ergodicity { scenario } => {
            let s = load(scenario, g)?;
            expect_kind(
                &s,
                &["w1-decay", "wlog-decay", "tv-decay", "cbire-tv", "invariant-convergence", "slln"],
                "ergodicity",
            )?;
            run::run(&s)?
        }
        Command::Fclt { scenario } => {
            let s = load(scenario, g)?;
            expect_kind(&s, &["fclt"], "fclt")?;
            run::run(&s)?
        }
        Command::Run { config } => run::run(&load(config, g)?)?,
    };
    emit(&report, g)?;
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
