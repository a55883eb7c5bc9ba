//! Front end for the delaynet scenarios: configuration, subcommands and CSV
//! output.

pub mod commands;
pub mod config;
pub mod output;

use commands::{CliError, Report};
use config::Config;
use std::path::{Path, PathBuf};

/// Full CSV text of a report, header comments included.
pub fn render(report: &Report, cfg: &Config) -> String {
    report.table.render(&output::header(report.command.name(), &cfg.to_toml()))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

/// Write the CSV (to `out`, or stdout), the trajectory dump and the plot
/// script. Returns the paths written besides the main CSV.
pub fn write_outputs(report: &Report, cfg: &Config, out: Option<&Path>, plot_script: bool) -> Result<Vec<PathBuf>, CliError> {
    let csv = render(report, cfg);
    let mut extra = Vec::new();
    let Some(out) = out else {
        if plot_script || report.trajectories.is_some() {
            return Err(CliError::Config(config::ConfigError("--emit-plot-script and --dump-trajectories need --out".into())));
        }
        print!("{csv}");
        return Ok(extra);
    };
    std::fs::write(out, csv)?;
    if let Some(traj) = &report.trajectories {
        let path = sibling(out, ".trajectories.csv");
        std::fs::write(&path, traj.render(&output::header(report.command.name(), &cfg.to_toml())))?;
        extra.push(path);
    }
    if plot_script {
        let path = sibling(out, ".gp");
        let name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (x, ys) = &report.plot;
        std::fs::write(&path, output::plot_script(&name, report.command.name(), &report.table.columns, *x, ys))?;
        extra.push(path);
    }
    Ok(extra)
}
