//! Batch CLI for the dual-porosity simulator.
//!
//! Exit codes: 0 on success, 2 on deck errors, 3 on convergence failure.

use clap::{Parser, Subcommand};
use fracflow::deck::ForcingSpec;
use fracflow::driver::SimError;
use fracflow::{parse_deck, run_deck, RunOptions, SimModel};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sim", about = "Two-phase dual-porosity reservoir simulator", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation deck to its stop time.
    Run {
        /// Input deck path.
        deck: PathBuf,
        /// Worker threads for assembly and linear algebra.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output directory for wells.csv, summary.txt, run.log and snapshots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot cadence, e.g. `every=5` for every fifth accepted step.
        #[arg(long)]
        snapshots: Option<String>,
        /// Forcing-term rule override: ew1 | ew2 | ew3 | const:VAL.
        #[arg(long)]
        forcing: Option<String>,
        /// Dump the first decoupled linear system of every step (debug).
        #[arg(long)]
        dump_linear_systems: bool,
        /// Write a checkpoint of the final state to this file.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Resume from a checkpoint written by an earlier run.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Parse and validate a deck without running it.
    Check {
        deck: PathBuf,
    },
    /// Print the version.
    Version,
}

fn parse_snapshots(arg: &str) -> Result<usize, String> {
    match arg.strip_prefix("every=") {
        Some(k) => k.parse::<usize>().map_err(|e| format!("bad snapshot cadence '{arg}': {e}")),
        None => Err(format!("bad snapshot cadence '{arg}', expected every=K")),
    }
}

fn parse_forcing(arg: &str) -> Result<ForcingSpec<f64>, String> {
    let lower = arg.to_ascii_lowercase();
    match lower.as_str() {
        "ew1" => Ok(ForcingSpec::Ew1),
        "ew2" => Ok(ForcingSpec::Ew2),
        "ew3" => Ok(ForcingSpec::Ew3 { gamma: 0.9, beta: 2.0 }),
        _ => match lower.strip_prefix("const:") {
            Some(v) => v
                .parse::<f64>()
                .map(ForcingSpec::Constant)
                .map_err(|e| format!("bad forcing constant '{arg}': {e}")),
            None => Err(format!("unknown forcing rule '{arg}'")),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimError::Deck(_)
                | SimError::Grid(_)
                | SimError::Prop(_)
                | SimError::Well(_)
                | SimError::Usage(_) => ExitCode::from(2),
                SimError::Convergence(_) | SimError::Linear(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Version => {
            println!("sim {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Check { deck } => {
            let parsed = parse_deck(&deck)?;
            let model = SimModel::from_deck(&parsed)?;
            println!("deck ok: {}", deck.display());
            println!("  title    : {}", model.title);
            println!(
                "  grid     : {} x {} x {} ({} cells, {} connections)",
                model.grid.nx,
                model.grid.ny,
                model.grid.nz,
                model.grid.n_cells(),
                model.grid.connections.len()
            );
            println!("  wells    : {}", model.wells.len());
            for w in &model.wells {
                println!(
                    "    {:10} {:?} perfs={} rate_max={} bhp_limit={}",
                    w.name,
                    w.kind,
                    w.perforations.len(),
                    w.max_rate,
                    w.bhp_limit
                );
            }
            println!("  schedule : {} days", model.schedule.t_stop);
            Ok(())
        }
        Command::Run {
            deck,
            threads,
            out,
            snapshots,
            forcing,
            dump_linear_systems,
            checkpoint,
            restart,
        } => {
            let parsed = parse_deck(&deck)?;
            let snapshots_every = match snapshots {
                Some(s) => Some(parse_snapshots(&s).map_err(SimError::Usage)?),
                None => None,
            };
            let forcing_override = match forcing {
                Some(f) => Some(parse_forcing(&f).map_err(SimError::Usage)?),
                None => None,
            };
            let opts = RunOptions {
                out_dir: out,
                threads,
                forcing_override,
                snapshots_every,
                dump_linear_systems,
                capture_steps: Vec::new(),
                checkpoint_out: checkpoint,
                restart_from: restart,
            };
            let result = run_deck(&parsed, &opts)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let s = &result.summary;
            println!("time steps          : {}", s.time_steps);
            println!("newton iterations   : {}", s.newton_total);
            println!("linear iterations   : {}", s.linear_total);
            println!("total running time  : {:.3} s", s.wall_seconds);
            Ok(())
        }
    }
}
