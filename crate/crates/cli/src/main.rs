use std::path::PathBuf;
use std::process::ExitCode;

use bellsim_cli::{run, Command, Exit, Overrides, ScenarioConfig};
use bellsim_core::Executor;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bellsim",
    version,
    about = "Local simulations of singlet correlations with post-selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one setting pair and report acceptance and the conditional law.
    Simulate(Common),
    /// Estimate the CHSH value over a settings quad.
    Chsh(Common),
    /// Check the independent-detection contract; exits 2 on any failed clause.
    Contract(Common),
    /// Trade accuracy against success over nested partitions.
    Sweep(Common),
    /// Verify that neither station reads the remote setting; exits 2 on a leak.
    AuditLocality(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario document (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials (per setting pair, where a command uses several).
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads. Never changes any output.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV path: per-trial rows for simulate, the curve for sweep.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record wall-clock time in the manifest.
    #[arg(long)]
    timing: bool,
}

fn fail(exit: Exit, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("bellsim: {message}");
    ExitCode::from(exit.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Exit::Config.code() as u8);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Chsh(a) => (Command::Chsh, a),
        Cmd::Contract(a) => (Command::Contract, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::AuditLocality(a) => (Command::AuditLocality, a),
    };
    let mut config = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(Exit::Config, e),
    };
    config.apply(&Overrides {
        seed: args.seed,
        trials: args.trials,
        out: args.out,
        csv: args.csv,
    });
    let exec = match Executor::new(args.workers) {
        Ok(x) => x,
        Err(e) => return fail(Exit::Config, e),
    };
    match run(command, &config, &exec, args.timing) {
        Ok(done) if done.exit == Exit::Ok => ExitCode::SUCCESS,
        Ok(done) => {
            eprintln!("bellsim: {:?} check failed", done.manifest.command);
            ExitCode::from(done.exit.code() as u8)
        }
        Err(f) => fail(f.exit, f.message),
    }
}
