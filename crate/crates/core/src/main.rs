use std::path::PathBuf;
use std::process::ExitCode;

use anisoswarm::cli_io::{self, CliError};
use clap::{Args, Parser, Subcommand};

/// Anisotropic particle swarms: simulation and line stability.
#[derive(Parser)]
#[command(name = "anisoswarm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the particle system; writes snapshot_<t>.csv and summary.csv.
    Simulate(RunArgs),
    /// Line-mode spectrum; writes spectrum.csv.
    Spectrum(RunArgs),
    /// Coefficient table; writes forces.csv.
    ForceTable(RunArgs),
    /// Linear-family threshold scan; writes a0_scan.csv.
    A0Scan(RunArgs),
    /// High-wave limit over admissible line angles; writes rotated.csv.
    RotatedScan(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides of the form `--key=value`.
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cmd, args) = match cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::ForceTable(a) => ("force-table", a),
        Command::A0Scan(a) => ("a0-scan", a),
        Command::RotatedScan(a) => ("rotated-scan", a),
    };
    let cfg = cli_io::load_config(args.config.as_deref(), &args.overrides)?;
    log::info!("{cmd}: writing to {}", cfg.resolved_output_dir().display());
    match cmd {
        "simulate" => {
            let r = cli_io::cmd_simulate(&cfg)?;
            println!("{:?} after {} steps at t = {:e}", r.termination, r.steps, r.final_state.time);
        }
        "spectrum" => {
            let r = cli_io::cmd_spectrum(&cfg)?;
            println!("{:?} ({} modes)", r.verdict, r.modes.len());
        }
        "force-table" => {
            cli_io::cmd_force_table(&cfg)?;
        }
        "a0-scan" => {
            let (rows, _) = cli_io::cmd_a0_scan(&cfg)?;
            for s in rows {
                println!("R_c = {}: R_c·max h/g = {:.6} at m = {}", s.r_cutoff, s.rc_times_max, s.argmax_m);
            }
        }
        _ => {
            cli_io::cmd_rotated_scan(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
