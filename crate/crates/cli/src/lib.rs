//! Command-line front end for `spinmux`.
//!
//! Exit codes: 0 success, 1 usage, 2 validation or physics error, 3 optimizer
//! divergence.

pub mod commands;
pub mod config;
pub mod error;
pub mod pulse_file;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "spinmux",
    version,
    about = "Frequency-multiplexed control of NV spin registers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// ω₊ of every site at the configured DC current.
    AddressMap(commands::AddressMapArgs),
    /// Rabi, Ramsey, ODMR or pulse-file simulations.
    Simulate(commands::SimulateArgs),
    /// Synthesise a selective π-pulse.
    Optimize(commands::OptimizeArgs),
    /// Rectangular-pulse crosstalk over a grid, one file per DC current.
    CrosstalkMap(commands::CrosstalkMapArgs),
    /// Pulse robustness against detuning offsets and amplitude errors.
    Sweep(commands::SweepArgs),
    /// Fit the wire depth to a target Zeeman shift.
    Calibrate(commands::CalibrateArgs),
    /// Print the configuration with defaults applied.
    ShowConfig(commands::ShowConfigArgs),
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::AddressMap(a) => commands::address_map_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Optimize(a) => commands::optimize_cmd(a),
        Command::CrosstalkMap(a) => commands::crosstalk_map_cmd(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Calibrate(a) => commands::calibrate_cmd(a),
        Command::ShowConfig(a) => commands::show_config_cmd(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
