use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use platoon_cli::commands::{
    cmd_analyze, cmd_certify, cmd_reproduce_paper, cmd_simulate, cmd_sweep, parse_range, parse_values,
};
use platoon_cli::{CliError, ConfigDocument, Context, Outcome, Scale, SweepParam, EXIT_ERROR};

/// Worker threads for Monte Carlo ensembles.
const THREADS_VAR: &str = "PLATOON_THREADS";

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "String-stability analysis of vehicle platoons over noisy channels"
)]
struct Cli {
    /// Config file, or a bundled config name (paper_h3.2, paper_h2.4).
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "platoon-out")]
    out: PathBuf,
    /// Overrides monte_carlo.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides analysis.grid_size.
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// Do not print the result document.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-square and string-stability verdict (exit 2 when not string stable).
    Certify,
    /// Exact moment trajectories, variance ladder, spectra and bounds.
    Analyze,
    /// Monte Carlo ensemble validated against the exact moments.
    Simulate,
    /// One verdict row per parameter value.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, conflicts_with = "range", required_unless_present = "range")]
        values: Option<String>,
        /// Inclusive range start:stop:step.
        #[arg(long)]
        range: Option<String>,
    },
    /// Data behind the reference figures for h = 3.2 and h = 2.4.
    ReproducePaper {
        #[arg(long, value_enum, default_value = "desk")]
        scale: Scale,
        /// Required for --scale full.
        #[arg(long)]
        yes_expensive: bool,
    },
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_VAR} must be a positive integer (got \"{v}\")"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let ctx = Context {
        out: cli.out,
        seed: cli.seed,
        grid_size: cli.grid_size,
        threads: threads()?,
    };
    let config = || -> Result<ConfigDocument, CliError> {
        let source = cli
            .config
            .as_deref()
            .ok_or_else(|| CliError::Usage("--config is required for this command".into()))?;
        Ok(ConfigDocument::load(source)?)
    };
    match cli.command {
        Command::Certify => cmd_certify(&config()?, &ctx),
        Command::Analyze => cmd_analyze(&config()?, &ctx),
        Command::Simulate => cmd_simulate(&config()?, &ctx),
        Command::Sweep { param, values, range } => {
            let values = match (values, range) {
                (Some(v), _) => parse_values(&v)?,
                (None, Some(r)) => parse_range(&r)?,
                (None, None) => unreachable!("clap requires one of --values, --range"),
            };
            cmd_sweep(&config()?, param, &values, &ctx)
        }
        Command::ReproducePaper { scale, yes_expensive } => cmd_reproduce_paper(scale, yes_expensive, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let quiet = cli.quiet;
    match run(cli) {
        Ok(outcome) => {
            if !quiet {
                print!("{}", outcome.document.to_json());
            }
            for note in &outcome.document.notes {
                eprintln!("note: {note}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
