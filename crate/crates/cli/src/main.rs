use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pear_cli::commands;
use pear_cli::{CliError, RunOptions};
use pear_core::Mode;

#[derive(Parser)]
#[command(name = "pear", version, about = "Discrete-event simulator for anonymous loop-free forwarding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tfr,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.txt, verdicts.txt, metrics.txt.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, env = "PEAR_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        until: Option<u64>,
        /// Print addresses as dotted quads.
        #[arg(long)]
        dotted: bool,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Follow HRT state back from an egress router.
    Traceback {
        /// Output directory of a previous run.
        out: PathBuf,
        egress: String,
        /// Origin ID as delivered by the egress (decimal or dotted).
        origin: String,
    },
    /// Print a router's LIST, FIB, HRT and DRT after a run.
    DumpTables { out: PathBuf, router: String },
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for invariant
    // violations here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { scenario, out, mode, seed, until, dotted } => {
            let mode = mode.map(|m| match m {
                ModeArg::Tfr => Mode::Tfr,
                ModeArg::Baseline => Mode::Baseline,
            });
            let report = commands::run(&scenario, &out, &RunOptions { mode, seed, until, dotted })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let m = report.world.metrics();
            println!(
                "{} traces, {} delivered, {} dropped, loop_hops={} -> {}",
                m["traces"],
                m["delivered"],
                m["dropped"],
                m["loop_hops"],
                out.display()
            );
        }
        Command::Validate { scenario } => {
            for w in commands::validate(&scenario)? {
                eprintln!("warning: {w}");
            }
            println!("{}: ok", scenario.display());
        }
        Command::Traceback { out, egress, origin } => println!("{}", commands::traceback(&out, &egress, &origin)?),
        Command::DumpTables { out, router } => print!("{}", commands::dump_tables(&out, &router)?),
    }
    Ok(())
}
