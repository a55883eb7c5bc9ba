//! The subcommands, each turning a configuration into a result table.

use crate::config::{Config, ConfigError};
use crate::output::{Cell, Table};
use delaynet::experiments::{
    classical_trajectory, delay_oracle_deviation, fringe_spacing, local_extrema, normalized_cross_correlation, output_system,
    output_trajectory, photon_balance, ramsey_trajectory, run_delay_demo, run_oracle_compare, symmetry_defect, OracleOutcome,
};
use delaynet::mesolve::{scan_with_workers, TrajectoryResult};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    RamseyScan,
    IntensityScan,
    DelayDemo,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RamseyScan => "ramsey-scan",
            Command::IntensityScan => "intensity-scan",
            Command::DelayDemo => "delay-demo",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub workers: usize,
    pub dump_trajectories: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(delaynet::Error),
    Io(std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<delaynet::Error> for CliError {
    fn from(e: delaynet::Error) -> Self {
        use delaynet::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::Causality { .. }
            | E::CaptureIncomplete { .. }
            | E::Unsupported(_)
            | E::Truncation { .. }
            | E::InvalidDimension { .. } => CliError::Config(ConfigError(e.to_string())),
            other => CliError::Numerical(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Ok,
    /// Some scan points failed; the table still lists every point.
    PointsFailed(usize),
    /// A comparison exceeded its acceptance threshold.
    Threshold(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::PointsFailed(_) => 3,
            Status::Threshold(_) => 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub command: Command,
    pub table: Table,
    pub trajectories: Option<Table>,
    pub summary: Vec<String>,
    /// Abscissa and ordinate columns for the plot script.
    pub plot: (usize, Vec<usize>),
    pub status: Status,
}

pub fn run(command: Command, cfg: &Config, opts: RunOptions) -> Result<Report, CliError> {
    cfg.validate()?;
    match command {
        Command::RamseyScan => ramsey_scan(cfg, opts),
        Command::IntensityScan => intensity_scan(cfg, opts),
        Command::DelayDemo => delay_demo(cfg, opts),
        Command::OracleCompare => oracle_compare(cfg),
    }
}

fn real_track(res: &TrajectoryResult, name: &str) -> delaynet::Result<Vec<f64>> {
    Ok(res.track(name)?.iter().map(|z| z.re).collect())
}

struct Dump {
    times: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn dump_table(columns: &[&str], deltas: &[f64], dumps: Vec<Option<Dump>>) -> Table {
    let mut t = Table::new(columns);
    for (d, dump) in deltas.iter().zip(dumps) {
        if let Some(dump) = dump {
            for k in 0..dump.times.len() {
                t.push(vec![(*d).into(), dump.times[k].into(), dump.a[k].into(), dump.b[k].into()]);
            }
        }
    }
    t
}

fn status_cell<T>(r: &delaynet::Result<T>) -> Cell {
    match r {
        Ok(_) => "ok".into(),
        Err(_) => "failed".into(),
    }
}

fn log_failures<T>(rows: &[delaynet::mesolve::ScanRow<f64, T>]) -> usize {
    let mut failed = 0;
    for row in rows {
        if let Err(e) = &row.outcome {
            log::error!("point {} (delta = {}) failed: {e}", row.index, row.param);
            failed += 1;
        }
    }
    failed
}

/// Fringe analysis of a population curve, as footer lines.
fn fringe_summary(cfg: &Config, deltas: &[f64], quantum: &[f64], classical: &[f64]) -> Vec<String> {
    let tol = 1e-9;
    let tau = cfg.physics.tau * cfg.rate_unit();
    let mut lines = vec![
        format!("local extrema (quantum): {}", local_extrema(quantum, tol).len()),
        format!("local extrema (classical): {}", local_extrema(classical, tol).len()),
    ];
    let target = 2.0 * std::f64::consts::PI / tau;
    match fringe_spacing(deltas, quantum, tol) {
        Some(s) => lines.push(format!("fringe spacing: {} (2pi/tau = {target})", crate::output::format_number(s))),
        None => lines.push(format!("fringe spacing: not resolved on this grid (2pi/tau = {target})")),
    }
    lines.push(format!(
        "cross-correlation quantum/classical: {}",
        crate::output::format_number(normalized_cross_correlation(quantum, classical))
    ));
    if let Ok(d) = symmetry_defect(deltas, quantum) {
        lines.push(format!("symmetry defect: {}", crate::output::format_number(d)));
    }
    lines
}

fn ramsey_scan(cfg: &Config, opts: RunOptions) -> Result<Report, CliError> {
    let setup = cfg.ramsey_setup()?;
    let deltas = cfg.deltas();
    let keep = opts.dump_trajectories;
    let rows = scan_with_workers(&deltas, opts.workers, |&d| {
        let q = ramsey_trajectory(&setup, d)?;
        let c = classical_trajectory(&setup, d)?;
        let point = [
            q.final_value("pe")?,
            c.final_value("pe")?,
            q.diagnostics.max_trace_drift.max(c.diagnostics.max_trace_drift),
            q.diagnostics.max_hermiticity_defect.max(c.diagnostics.max_hermiticity_defect),
            photon_balance(&q, "total")?,
        ];
        let dump = if keep { Some(Dump { times: q.times.clone(), a: real_track(&q, "pe")?, b: real_track(&c, "pe")? }) } else { None };
        Ok((point, dump))
    })?;
    let failed = log_failures(&rows);
    let mut table =
        Table::new(&["delta", "pe_quantum", "pe_classical", "max_trace_drift", "max_hermiticity_defect", "photon_balance", "status"]);
    let mut dumps = Vec::new();
    for row in &rows {
        let vals = row.outcome.as_ref().map(|(p, _)| *p).unwrap_or([f64::NAN; 5]);
        let mut cells: Vec<Cell> = vec![row.param.into()];
        cells.extend(vals.iter().map(|&v| Cell::Num(v)));
        cells.push(status_cell(&row.outcome));
        table.push(cells);
    }
    for row in rows {
        dumps.push(row.outcome.ok().and_then(|(_, d)| d));
    }
    let q: Vec<f64> = table.rows.iter().map(|r| num(&r[1])).collect();
    let c: Vec<f64> = table.rows.iter().map(|r| num(&r[2])).collect();
    let mut summary = vec![format!("pulse width: {}", crate::output::format_number(setup.pulse_width()))];
    if failed == 0 {
        summary.extend(fringe_summary(cfg, &deltas, &q, &c));
    }
    table.footer = summary.clone();
    Ok(Report {
        command: Command::RamseyScan,
        table,
        trajectories: keep.then(|| dump_table(&["delta", "t", "pe_quantum", "pe_classical"], &deltas, dumps)),
        summary,
        plot: (0, vec![1, 2]),
        status: if failed > 0 { Status::PointsFailed(failed) } else { Status::Ok },
    })
}

fn num(c: &Cell) -> f64 {
    match c {
        Cell::Num(x) => *x,
        Cell::Text(_) => f64::NAN,
    }
}

fn intensity_scan(cfg: &Config, opts: RunOptions) -> Result<Report, CliError> {
    let setup = cfg.ramsey_setup()?;
    let deltas = cfg.deltas();
    let keep = opts.dump_trajectories;
    let atom = cfg.scan.with_atom;
    let rows = scan_with_workers(&deltas, opts.workers, |&d| {
        let (sys, rho) = output_system(&setup, d, atom)?;
        let res = output_trajectory(&setup, &sys, &rho)?;
        let point = [
            res.final_value("intensity")?,
            res.final_value("pe")?,
            res.diagnostics.max_boundary_population.unwrap_or(f64::NAN),
            res.diagnostics.max_trace_drift,
            res.diagnostics.max_hermiticity_defect,
            photon_balance(&res, "total")?,
        ];
        let dump = if keep {
            Some(Dump { times: res.times.clone(), a: real_track(&res, "intensity")?, b: real_track(&res, "pe")? })
        } else {
            None
        };
        Ok((point, dump))
    })?;
    let failed = log_failures(&rows);
    let mut table = Table::new(&[
        "delta",
        "intensity",
        "pe",
        "boundary_population",
        "max_trace_drift",
        "max_hermiticity_defect",
        "photon_balance",
        "status",
    ]);
    for row in &rows {
        let vals = row.outcome.as_ref().map(|(p, _)| *p).unwrap_or([f64::NAN; 6]);
        let mut cells: Vec<Cell> = vec![row.param.into()];
        cells.extend(vals.iter().map(|&v| Cell::Num(v)));
        cells.push(status_cell(&row.outcome));
        table.push(cells);
    }
    let dumps: Vec<Option<Dump>> = rows.into_iter().map(|r| r.outcome.ok().and_then(|(_, d)| d)).collect();
    let mut summary = vec![
        format!("pulse width: {}", crate::output::format_number(setup.pulse_width())),
        format!("emitter: {}", if atom { "coupled" } else { "decoupled" }),
    ];
    if failed == 0 {
        let i: Vec<f64> = table.rows.iter().map(|r| num(&r[1])).collect();
        let p: Vec<f64> = table.rows.iter().map(|r| num(&r[2])).collect();
        if let Some(k) = (0..deltas.len()).min_by(|&a, &b| deltas[a].abs().total_cmp(&deltas[b].abs())) {
            summary.push(format!("intensity at delta = {}: {}", deltas[k], crate::output::format_number(i[k])));
        }
        if deltas.len() > 2 && atom {
            summary.push(format!("correlation intensity/pe: {}", crate::output::format_number(normalized_cross_correlation(&i, &p))));
        }
    }
    table.footer = summary.clone();
    Ok(Report {
        command: Command::IntensityScan,
        table,
        trajectories: keep.then(|| dump_table(&["delta", "t", "intensity", "pe"], &deltas, dumps)),
        summary,
        plot: (0, vec![1, 2]),
        status: if failed > 0 { Status::PointsFailed(failed) } else { Status::Ok },
    })
}

fn delay_demo(cfg: &Config, opts: RunOptions) -> Result<Report, CliError> {
    let demo = cfg.delay_demo();
    let out = run_delay_demo(&demo)?;
    let keep = opts.dump_trajectories;
    let mut columns = vec!["t", "input_flux", "output_flux", "target"];
    if keep {
        columns.extend(["reflected_flux", "transmitted_flux"]);
    }
    let mut table = Table::new(&columns);
    let output = out.output();
    for k in 0..out.times.len() {
        let mut row: Vec<Cell> = vec![out.times[k].into(), out.input[k].into(), output[k].into(), out.target[k].into()];
        if keep {
            row.extend([Cell::Num(out.reflected[k]), Cell::Num(out.transmitted[k])]);
        }
        table.push(row);
    }
    let mut summary = vec![
        format!("delay: {}", crate::output::format_number(demo.tau)),
        format!("fidelity: {}", crate::output::format_number(out.fidelity)),
        format!("max |output - target|: {}", crate::output::format_number(out.max_deviation)),
    ];
    if cfg.delay.oracle_bins > 0 {
        match delay_oracle_deviation(&demo, &out, cfg.delay.oracle_bins) {
            Ok(d) => summary.push(format!(
                "max |output - time-bin reference| ({} bins): {}",
                cfg.delay.oracle_bins,
                crate::output::format_number(d)
            )),
            Err(e) => summary.push(format!("time-bin reference skipped: {e}")),
        }
    }
    table.footer = summary.clone();
    Ok(Report { command: Command::DelayDemo, table, trajectories: None, summary, plot: (0, vec![1, 2, 3]), status: Status::Ok })
}

fn oracle_compare(cfg: &Config) -> Result<Report, CliError> {
    let o = &cfg.oracle;
    let base: OracleOutcome = run_oracle_compare(&cfg.oracle_compare(o.bins))?;
    let mut table = Table::new(&["t", "pe_virtual_cavity", "pe_time_bins", "abs_deviation"]);
    for k in 0..base.times.len() {
        let (a, b) = (base.virtual_cavity[k], base.time_bins[k]);
        table.push(vec![base.times[k].into(), a.into(), b.into(), (a - b).abs().into()]);
    }
    let mut summary = vec![format!("max deviation ({} bins): {}", o.bins, crate::output::format_number(base.max_deviation))];
    if o.refine {
        let fine = run_oracle_compare(&cfg.oracle_compare(2 * o.bins))?;
        summary.push(format!("max deviation ({} bins): {}", 2 * o.bins, crate::output::format_number(fine.max_deviation)));
        summary.push(format!("refinement tightens: {}", fine.max_deviation <= base.max_deviation));
    }
    let pass = base.max_deviation <= o.max_deviation;
    summary.push(format!("threshold {}: {}", crate::output::format_number(o.max_deviation), if pass { "PASS" } else { "FAIL" }));
    table.footer = summary.clone();
    let status =
        if pass { Status::Ok } else { Status::Threshold(format!("max deviation {} exceeds {}", base.max_deviation, o.max_deviation)) };
    Ok(Report { command: Command::OracleCompare, table, trajectories: None, summary, plot: (0, vec![1, 2]), status })
}
