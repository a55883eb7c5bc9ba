//! Ready-made runs: Fock transfer, the delay demonstration, the Ramsey and
//! output-intensity scans, the collision-model comparison, and the curve
//! analysis used to judge them.

use crate::cascade::{
    absorber_cavity, build_classical_ramsey, build_output_analysis, build_ramsey_atom, constructive_port_operator, delay_cavity,
    fock_input, series_product, source_cavity, two_level_atom, AtomParams, DelayGeometry, ATOM, MODE_U,
};
use crate::error::{Error, Result};
use crate::ipicture::{excitation_cap, transform_output_analysis, window_truncate};
use crate::mesolve::{integrate, scan_with_workers, Diagnostics, IntegratorConfig, ScanRow, TrajectoryResult};
use crate::oracle::{delay_bins, discretize, scatter_on_atom};
use crate::pulses::{g_simultaneous, ramsey_width, PulseShape, Regularization};
use crate::qcore::{DensityMatrix, TensorTerm};
use crate::system::{TimeDependentSystem, TimeOp};

/// Steps per pulse width of the default RK4 grid.
pub const STEPS_PER_WIDTH: f64 = 200.0;

fn number_op(label: &str, dim: usize) -> Result<TimeOp> {
    Ok(TimeOp::constant(TensorTerm::number(label, dim)?))
}

fn excited_op() -> Result<TimeOp> {
    number_op(ATOM, 2)
}

/// Largest `|N(t) + Σ∫flux − N(t₀)|` along a run whose tracks include the total
/// excitation number under `name`.
pub fn photon_balance(result: &TrajectoryResult, name: &str) -> Result<f64> {
    let n = result.track(name)?;
    let start = n.first().map_or(0.0, |z| z.re);
    Ok((0..result.times.len())
        .map(|k| n[k].re + result.fluxes.iter().map(|f| f.cumulative[k]).sum::<f64>() - start)
        .fold(0.0, |m, x| m.max(x.abs())))
}

/// Outcome of releasing `|n⟩` from a source cavity into a matched absorber.
#[derive(Clone, Debug)]
pub struct Transfer {
    pub n: usize,
    /// `⟨n|ρ_absorber|n⟩` at the end of the pulse.
    pub fidelity: f64,
    pub result: TrajectoryResult,
}

pub fn fock_transfer(n: usize, pulse: &PulseShape, reg: Regularization, config: &IntegratorConfig) -> Result<Transfer> {
    let dim = n + 1;
    let src = source_cavity(MODE_U, dim, pulse, reg, "out")?;
    let dst = absorber_cavity("target", dim, pulse, reg, "in")?;
    let sys = excitation_cap(&series_product(&src, "out", &dst, "in")?, n)?;
    let rho = fock_input(&sys, n)?;
    let (start, end) = pulse.support();
    let obs = [("n_source", number_op(MODE_U, dim)?), ("n_target", number_op("target", dim)?), ("total", sys.total_number()?)];
    let result = integrate(&sys, &rho, (start, end), &obs, config)?;
    let target = result.final_state.partial_trace(&["target"])?;
    let fidelity = target.matrix()[(n, n)].re;
    Ok(Transfer { n, fidelity, result })
}

/// Single-photon delay through one capture-and-release cavity that absorbs
/// `u` while emitting `u(t − τ)`.
#[derive(Clone, Debug)]
pub struct DelayDemo {
    pub width: f64,
    pub tau: f64,
    pub reg: Regularization,
    pub steps_per_width: f64,
}

impl DelayDemo {
    pub fn new(width: f64, tau: f64) -> Self {
        DelayDemo { width, tau, reg: Regularization::default(), steps_per_width: STEPS_PER_WIDTH }
    }

    pub fn pulse(&self) -> Result<PulseShape> {
        PulseShape::gaussian_from_start(0.0, self.width)
    }
}

#[derive(Clone, Debug)]
pub struct DelayOutcome {
    pub times: Vec<f64>,
    pub input: Vec<f64>,
    pub reflected: Vec<f64>,
    pub transmitted: Vec<f64>,
    /// `|u(t − τ)|²`.
    pub target: Vec<f64>,
    /// Largest `|reflected + transmitted − target|`.
    pub max_deviation: f64,
    /// `(∫√(f_out f_target) dt)²` of the normalized flux profiles.
    pub fidelity: f64,
    /// Photon input-output balance, see [`photon_balance`].
    pub balance: f64,
    pub diagnostics: Diagnostics,
}

impl DelayOutcome {
    pub fn output(&self) -> Vec<f64> {
        self.reflected.iter().zip(&self.transmitted).map(|(r, t)| r + t).collect()
    }
}

fn rate_op(sys: &TimeDependentSystem, channel: &str) -> Result<TimeOp> {
    let l = &sys.channel(channel)?.op;
    l.adjoint().mul(l)
}

pub fn run_delay_demo(demo: &DelayDemo) -> Result<DelayOutcome> {
    if !(demo.width > 0.0) {
        return Err(Error::param("t_w", "pulse width must be positive"));
    }
    let u = demo.pulse()?;
    let v = u.delayed(demo.tau);
    let (g_out, g_in) = g_simultaneous(&u, &v, demo.reg)?;
    let src = source_cavity(MODE_U, 2, &u, demo.reg, "out")?;
    let cav = delay_cavity("delay", 2, &g_in, &g_out, ("reflected", "transmitted"))?;
    let sys = series_product(&src, "out", &cav, "reflected")?;
    let rho = fock_input(&sys, 1)?;
    let src_l = &src.channel("out")?.op;
    let obs = [
        ("input", src_l.adjoint().mul(src_l)?),
        ("reflected", rate_op(&sys, "reflected")?),
        ("transmitted", rate_op(&sys, "transmitted")?),
        ("total", sys.total_number()?),
    ];
    let end = v.support().1 + demo.width;
    let config = IntegratorConfig::rk4(demo.width / demo.steps_per_width);
    let res = integrate(&sys, &rho, (u.support().0, end), &obs, &config)?;
    let re = |name: &str| -> Result<Vec<f64>> { Ok(res.track(name)?.iter().map(|z| z.re).collect()) };
    let (input, reflected, transmitted) = (re("input")?, re("reflected")?, re("transmitted")?);
    let target: Vec<f64> = res.times.iter().map(|&t| v.u(t).norm_sqr()).collect();
    let output: Vec<f64> = reflected.iter().zip(&transmitted).map(|(r, t)| r + t).collect();
    let max_deviation = output.iter().zip(&target).map(|(o, t)| (o - t).abs()).fold(0.0, f64::max);
    let fidelity = profile_overlap(&res.times, &output, &target);
    let balance = photon_balance(&res, "total")?;
    Ok(DelayOutcome {
        times: res.times,
        input,
        reflected,
        transmitted,
        target,
        max_deviation,
        fidelity,
        balance,
        diagnostics: res.diagnostics,
    })
}

/// `(∫√(f g) dt)² / (∫f dt ∫g dt)` by the trapezoid rule.
pub fn profile_overlap(times: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let trap = |h: &dyn Fn(usize) -> f64| (1..times.len()).map(|k| 0.5 * (h(k) + h(k - 1)) * (times[k] - times[k - 1])).sum::<f64>();
    let cross = trap(&|k| (f[k].max(0.0) * g[k].max(0.0)).sqrt());
    let (nf, ng) = (trap(&|k| f[k]), trap(&|k| g[k]));
    if nf <= 0.0 || ng <= 0.0 {
        return 0.0;
    }
    cross * cross / (nf * ng)
}

/// Largest deviation between the virtual-cavity output flux and the delayed
/// time-bin field, both on the virtual-cavity time grid inside the bin window.
pub fn delay_oracle_deviation(demo: &DelayDemo, outcome: &DelayOutcome, bins: usize) -> Result<f64> {
    let u = demo.pulse()?;
    let field = discretize(&u, bins)?;
    let shift = (demo.tau / field.dt()).round() as usize;
    if (shift as f64 * field.dt() - demo.tau).abs() > 1e-9 * demo.tau.max(1.0) {
        return Err(Error::param("bins", format!("the delay {} is not a whole number of bins of width {}", demo.tau, field.dt())));
    }
    let padded = field.padded(shift + 1);
    let delayed = delay_bins(&padded, shift);
    let output = outcome.output();
    Ok(outcome
        .times
        .iter()
        .zip(&output)
        .filter(|(t, _)| **t >= delayed.start() && **t <= delayed.end())
        .map(|(&t, o)| (o - delayed.envelope(t).norm_sqr()).abs())
        .fold(0.0, f64::max))
}

/// A single photon in a Gaussian pulse hitting an atom, solved with the
/// virtual-cavity master equation and with the collision model.
#[derive(Clone, Debug)]
pub struct OracleCompare {
    pub width: f64,
    pub gamma: f64,
    pub delta: f64,
    pub bins: usize,
    pub reg: Regularization,
    pub steps_per_width: f64,
    /// Time after the pulse during which the decay is followed, in `1/γ`.
    pub tail: f64,
}

impl Default for OracleCompare {
    fn default() -> Self {
        OracleCompare {
            width: 1.0,
            gamma: 1.0,
            delta: 0.0,
            bins: 200,
            reg: Regularization::default(),
            steps_per_width: STEPS_PER_WIDTH,
            tail: 3.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub times: Vec<f64>,
    pub virtual_cavity: Vec<f64>,
    pub time_bins: Vec<f64>,
    pub max_deviation: f64,
    /// Photon balance of the virtual-cavity run.
    pub balance: f64,
    pub diagnostics: Diagnostics,
}

pub fn run_oracle_compare(cfg: &OracleCompare) -> Result<OracleOutcome> {
    let u = PulseShape::gaussian_from_start(0.0, cfg.width)?;
    let (start, end) = u.support();
    let stop = end + cfg.tail / cfg.gamma.max(1.0);
    let params = if cfg.gamma > 0.0 { AtomParams::new(cfg.gamma, cfg.delta)? } else { AtomParams::decoupled(cfg.delta) };
    let src = source_cavity(MODE_U, 2, &u, cfg.reg, "out")?;
    let atom = two_level_atom(params, &[("in", 1.0)])?;
    let sys = series_product(&src, "out", &atom, "in")?;
    let rho = fock_input(&sys, 1)?;
    let obs = [("pe", excited_op()?), ("total", sys.total_number()?)];
    let res = integrate(&sys, &rho, (start, stop), &obs, &IntegratorConfig::rk4(cfg.width / cfg.steps_per_width))?;
    let vc: Vec<f64> = res.track("pe")?.iter().map(|z| z.re).collect();

    let field = discretize(&u, cfg.bins)?;
    let pad = ((stop - field.end()) / field.dt()).ceil().max(0.0) as usize + 1;
    let scattering = scatter_on_atom(&[(field.padded(pad), params.gamma)], params)?;
    let tb: Vec<f64> = res.times.iter().map(|&t| scattering.excited_at(t)).collect();
    let max_deviation = vc.iter().zip(&tb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let balance = photon_balance(&res, "total")?;
    Ok(OracleOutcome { times: res.times, virtual_cavity: vc, time_bins: tb, max_deviation, balance, diagnostics: res.diagnostics })
}

/// Basis used for the atom-plus-pulse systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    /// Every state with at most `n` excitations; exact.
    Cap,
    /// Photon-number window around `n` in the interaction picture.
    Window(usize),
}

/// Parameters shared by the Ramsey and output-intensity scans.
#[derive(Clone, Debug)]
pub struct RamseySetup {
    pub n: usize,
    pub gamma: f64,
    pub tau: f64,
    /// `None` selects the quarter-rotation width for `n` photons.
    pub width: Option<f64>,
    /// Release delay after the end of the input pulse, in pulse widths.
    pub margin: f64,
    pub reg: Regularization,
    pub steps_per_width: f64,
    pub truncation: Truncation,
}

impl RamseySetup {
    pub fn new(n: usize) -> Self {
        RamseySetup {
            n,
            gamma: 1.0,
            tau: 0.5,
            width: None,
            margin: 0.5,
            reg: Regularization::default(),
            steps_per_width: STEPS_PER_WIDTH,
            truncation: Truncation::Cap,
        }
    }

    /// Explicit width, or the quarter-rotation rule with `n` clamped to at
    /// least one photon.
    pub fn pulse_width(&self) -> f64 {
        self.width.unwrap_or_else(|| ramsey_width(self.gamma, self.n.max(1) as f64))
    }

    pub fn geometry(&self) -> Result<DelayGeometry> {
        let w = self.pulse_width();
        let u = PulseShape::gaussian_from_start(0.0, w)?;
        let (start, end) = u.support();
        DelayGeometry::new(u, self.tau, end - start + self.margin * w, self.reg)
    }

    pub fn params(&self, delta: f64) -> Result<AtomParams> {
        AtomParams::new(self.gamma, delta)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig::rk4(self.pulse_width() / self.steps_per_width)
    }

    pub fn span(&self) -> Result<(f64, f64)> {
        let g = self.geometry()?;
        Ok((g.release_start(), g.readout_time()))
    }

    fn mode_dim(&self) -> usize {
        (self.n + 1).max(2)
    }
}

#[derive(Clone, Debug)]
pub struct PopulationPoint {
    pub delta: f64,
    /// `P_e(t₁)` driven by the split Fock state.
    pub quantum: f64,
    /// `P_e(t₁)` driven by two classical pulses with `n` photons in total.
    pub classical: f64,
    pub max_trace_drift: f64,
}

/// Reduced Ramsey system on the chosen basis, with `|n⟩` in the source mode.
pub fn ramsey_system(setup: &RamseySetup, delta: f64) -> Result<(TimeDependentSystem, DensityMatrix)> {
    let sys = build_ramsey_atom(&setup.geometry()?, setup.params(delta)?, setup.n, setup.mode_dim())?;
    let sys = excitation_cap(&sys, setup.n)?;
    let rho = fock_input(&sys, setup.n)?;
    Ok((sys, rho))
}

pub fn ramsey_trajectory(setup: &RamseySetup, delta: f64) -> Result<TrajectoryResult> {
    let (sys, rho) = ramsey_system(setup, delta)?;
    let obs = [("pe", excited_op()?), ("total", sys.total_number()?)];
    integrate(&sys, &rho, setup.span()?, &obs, &setup.integrator())
}

pub fn classical_trajectory(setup: &RamseySetup, delta: f64) -> Result<TrajectoryResult> {
    let g = setup.geometry()?;
    let sys = build_classical_ramsey(setup.params(delta)?, setup.n as f64, &g.v1(), &g.v2())?;
    let rho = DensityMatrix::product_state(sys.basis(), &[])?;
    integrate(&sys, &rho, setup.span()?, &[("pe", excited_op()?)], &setup.integrator())
}

pub fn ramsey_point(setup: &RamseySetup, delta: f64) -> Result<PopulationPoint> {
    let q = ramsey_trajectory(setup, delta)?;
    let c = classical_trajectory(setup, delta)?;
    Ok(PopulationPoint {
        delta,
        quantum: q.final_value("pe")?,
        classical: c.final_value("pe")?,
        max_trace_drift: q.diagnostics.max_trace_drift.max(c.diagnostics.max_trace_drift),
    })
}

pub fn ramsey_scan(setup: &RamseySetup, deltas: &[f64], workers: usize) -> Result<Vec<ScanRow<f64, PopulationPoint>>> {
    scan_with_workers(deltas, workers, |&d| ramsey_point(setup, d))
}

#[derive(Clone, Debug)]
pub struct IntensityPoint {
    pub delta: f64,
    /// Photons in the original pulse mode at the constructive port, at `t₁`.
    pub intensity: f64,
    pub excited: f64,
    /// Largest population on the window boundary, when a window is used.
    pub boundary: Option<f64>,
    pub max_trace_drift: f64,
}

/// Interaction-picture output-analysis system on the chosen basis. With
/// `atom = false` the emitter is decoupled and the network is linear.
pub fn output_system(setup: &RamseySetup, delta: f64, atom: bool) -> Result<(TimeDependentSystem, DensityMatrix)> {
    let params = if atom { setup.params(delta)? } else { AtomParams::decoupled(delta) };
    let sys = transform_output_analysis(&build_output_analysis(&setup.geometry()?, params, setup.n, setup.mode_dim())?)?;
    let sys = match setup.truncation {
        Truncation::Cap => excitation_cap(&sys, setup.n)?,
        Truncation::Window(w) => window_truncate(&sys, setup.n, w)?,
    };
    let rho = fock_input(&sys, setup.n)?;
    Ok((sys, rho))
}

/// Schrödinger-picture output-analysis system with the exact excitation cap.
pub fn output_system_schrodinger(setup: &RamseySetup, delta: f64, atom: bool) -> Result<(TimeDependentSystem, DensityMatrix)> {
    let params = if atom { setup.params(delta)? } else { AtomParams::decoupled(delta) };
    let sys = excitation_cap(&build_output_analysis(&setup.geometry()?, params, setup.n, setup.mode_dim())?, setup.n)?;
    let rho = fock_input(&sys, setup.n)?;
    Ok((sys, rho))
}

/// Integrate an output-analysis system with the constructive-port intensity,
/// `P_e` and the total excitation number as observables.
pub fn output_trajectory(setup: &RamseySetup, sys: &TimeDependentSystem, rho: &DensityMatrix) -> Result<TrajectoryResult> {
    let obs = [("intensity", constructive_port_operator(sys)?), ("pe", excited_op()?), ("total", sys.total_number()?)];
    integrate(sys, rho, setup.span()?, &obs, &setup.integrator())
}

pub fn intensity_point(setup: &RamseySetup, delta: f64, atom: bool) -> Result<IntensityPoint> {
    let (sys, rho) = output_system(setup, delta, atom)?;
    let res = output_trajectory(setup, &sys, &rho)?;
    Ok(IntensityPoint {
        delta,
        intensity: res.final_value("intensity")?,
        excited: res.final_value("pe")?,
        boundary: res.diagnostics.max_boundary_population,
        max_trace_drift: res.diagnostics.max_trace_drift,
    })
}

pub fn intensity_scan(setup: &RamseySetup, deltas: &[f64], atom: bool, workers: usize) -> Result<Vec<ScanRow<f64, IntensityPoint>>> {
    scan_with_workers(deltas, workers, |&d| intensity_point(setup, d, atom))
}

/// `count` evenly spaced values from `lo` to `hi`, mirrored exactly about the
/// midpoint.
pub fn symmetric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![0.5 * (lo + hi); count];
    }
    let step = (hi - lo) / (count - 1) as f64;
    let mid = 0.5 * (lo + hi);
    (0..count)
        .map(|k| {
            let from_mid = k as f64 - 0.5 * (count - 1) as f64;
            if from_mid == 0.0 {
                mid
            } else {
                mid + from_mid * step
            }
        })
        .collect()
}

/// Indices of interior points that are strictly above or strictly below both
/// neighbours. Values closer than `tol` count as equal.
pub fn local_extrema(values: &[f64], tol: f64) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| {
            let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
            (b > a + tol && b > c + tol) || (b < a - tol && b < c - tol)
        })
        .collect()
}

/// Mean distance between neighbouring maxima, or twice the mean distance
/// between neighbouring extrema when fewer than two maxima exist.
pub fn fringe_spacing(xs: &[f64], ys: &[f64], tol: f64) -> Option<f64> {
    let ext = local_extrema(ys, tol);
    let maxima: Vec<usize> = ext.iter().copied().filter(|&k| ys[k] > ys[k - 1]).collect();
    let mean_gap = |idx: &[usize]| Some((xs[*idx.last()?] - xs[idx[0]]) / (idx.len() - 1) as f64);
    if maxima.len() >= 2 {
        return mean_gap(&maxima);
    }
    if ext.len() >= 2 {
        return mean_gap(&ext).map(|g| 2.0 * g);
    }
    None
}

/// Pearson correlation of two equally long series.
pub fn normalized_cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Largest `|y(x) − y(−x)|` over a grid that is symmetric about zero.
pub fn symmetry_defect(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    if (0..n).any(|k| (xs[k] + xs[n - 1 - k]).abs() > 1e-12) {
        return Err(Error::param("grid", "the detuning grid is not symmetric about zero"));
    }
    Ok((0..n).map(|k| (ys[k] - ys[n - 1 - k]).abs()).fold(0.0, f64::max))
}

/// `⟨a†a⟩` of the decoupled network at its readout time, for quick checks of
/// the linear part.
pub fn zero_coupling_intensity(setup: &RamseySetup) -> Result<f64> {
    Ok(intensity_point(setup, 0.0, false)?.intensity)
}
