use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use subq_cli::commands::{self, Command};
use subq_cli::{CliError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "subq", version, about = "Run a scenario and check its invariants")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides SUBQ_OUT and the scenario's `[output]`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Crank–Nicolson evolution; writes every snapshot.
    Evolve(Common),
    /// Madelung fields of the initial state and residuals of the evolution.
    Analyze(Common),
    /// Bohmian ensemble through the evolved frames.
    Trajectories(Common),
    /// Frequency-ramp study of the adiabatic invariant and nonconservative work.
    Thermo(Common),
    /// Dragged-trap Langevin ensemble and fluctuation-theorem fits.
    Ft(Common),
    /// Vacuum fluctuation ratio over an ε sweep.
    Vft(Common),
    /// Ground state by constrained minimization.
    Variational(Common),
    /// Every applicable check on each scenario listed under `[validate]`.
    Validate(Common),
}

fn split(s: Sub) -> (Command, Common) {
    match s {
        Sub::Evolve(c) => (Command::Evolve, c),
        Sub::Analyze(c) => (Command::Analyze, c),
        Sub::Trajectories(c) => (Command::Trajectories, c),
        Sub::Thermo(c) => (Command::Thermo, c),
        Sub::Ft(c) => (Command::Ft, c),
        Sub::Vft(c) => (Command::Vft, c),
        Sub::Variational(c) => (Command::Variational, c),
        Sub::Validate(c) => (Command::Validate, c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, args) = split(cli.command);
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cmd, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Command, args: &Common) -> Result<(), CliError> {
    let cfg = ScenarioConfig::from_path(&args.config)?;
    let out = commands::output_dir(args.out.as_deref(), &cfg);
    let outcome = commands::run(cmd, &cfg, &out)?;
    let failed = outcome.failures();
    for i in &outcome.checklist.items {
        if i.passed {
            log::info!("PASS {}/{} = {:.3e}", i.scenario, i.name, i.value);
        } else {
            log::warn!("FAIL {}/{} = {:.3e} (threshold {:.1e})", i.scenario, i.name, i.value, i.threshold);
        }
    }
    log::info!("artifacts in {}", outcome.dir.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Contract(failed))
    }
}
