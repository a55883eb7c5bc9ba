use clap::{Parser, Subcommand};
use delaynet_cli::commands::{run, CliError, Command, RunOptions};
use delaynet_cli::config::{Config, ConfigError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "delaynet", version, about = "Delayed quantum pulses in cascaded networks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel scan workers (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write a gnuplot script next to the CSV.
    #[arg(long, global = true)]
    emit_plot_script: bool,
    /// Also write per-point time traces (scans) or the split output flux (delay demo).
    #[arg(long, global = true)]
    dump_trajectories: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Excited-state population at the readout time against detuning.
    RamseyScan,
    /// Constructive-port photon number at the readout time against detuning.
    IntensityScan,
    /// Single photon through one capture-and-release delay cavity.
    DelayDemo,
    /// Virtual-cavity master equation against the collision model.
    OracleCompare,
    /// Parse and check the configuration, then print it with defaults filled in.
    ValidateConfig,
}

fn load(path: Option<&PathBuf>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            Ok(Config::parse(&text)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load(cli.config.as_ref())?;
    let command = match cli.command {
        Sub::ValidateConfig => {
            print!("{}", cfg.to_toml());
            return Ok(0);
        }
        Sub::RamseyScan => Command::RamseyScan,
        Sub::IntensityScan => Command::IntensityScan,
        Sub::DelayDemo => Command::DelayDemo,
        Sub::OracleCompare => Command::OracleCompare,
    };
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(ConfigError("--workers must be at least 1".into()).into());
    }
    let opts = RunOptions { workers, dump_trajectories: cli.dump_trajectories };
    let report = run(command, &cfg, opts)?;
    for path in delaynet_cli::write_outputs(&report, &cfg, cli.out.as_deref(), cli.emit_plot_script)? {
        log::info!("wrote {}", path.display());
    }
    for line in &report.summary {
        eprintln!("{line}");
    }
    if let Some(reason) = match &report.status {
        delaynet_cli::commands::Status::Ok => None,
        delaynet_cli::commands::Status::PointsFailed(k) => Some(format!("{k} scan points failed")),
        delaynet_cli::commands::Status::Threshold(r) => Some(r.clone()),
    } {
        eprintln!("error: {reason}");
    }
    Ok(report.status.exit_code())
}
