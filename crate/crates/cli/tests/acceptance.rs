//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p delaynet-cli --test acceptance -- 1 4`.
//! Set `DELAYNET_EXTENDED=1` to add the n = 30 windowed run.

use delaynet::cascade::{build_ramsey_schrodinger, fock_input, ATOM};
use delaynet::experiments::*;
use delaynet::ipicture::excitation_cap;
use delaynet::mesolve::{integrate, IntegratorConfig, TrajectoryResult};
use delaynet::pulses::{g_absorber, g_simultaneous, g_source, PulseShape, Regularization};
use delaynet::qcore::TensorTerm;
use delaynet::system::TimeOp;
use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn pe(res: &TrajectoryResult) -> Vec<f64> {
    res.track("pe").unwrap().iter().map(|z| z.re).collect()
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// n = 9 output analysis on the full capped basis, at zero detuning. Shared by
/// the conservation, photon-subtraction and window criteria.
fn full_output_nine() -> &'static (TrajectoryResult, Duration) {
    static RUN: OnceLock<(TrajectoryResult, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let t0 = Instant::now();
        let setup = RamseySetup::new(9);
        let (sys, rho) = output_system(&setup, 0.0, true).unwrap();
        let res = output_trajectory(&setup, &sys, &rho).unwrap();
        (res, t0.elapsed())
    })
}

fn windowed_output_nine() -> &'static TrajectoryResult {
    static RUN: OnceLock<TrajectoryResult> = OnceLock::new();
    RUN.get_or_init(|| {
        let setup = RamseySetup { truncation: Truncation::Window(4), ..RamseySetup::new(9) };
        let (sys, rho) = output_system(&setup, 0.0, true).unwrap();
        output_trajectory(&setup, &sys, &rho).unwrap()
    })
}

fn fock_transfer_criterion() -> Verdict {
    let u = PulseShape::gaussian(0.0, 1.0).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for n in 1..=3 {
        let t0 = Instant::now();
        let t = fock_transfer(n, &u, Regularization::default(), &IntegratorConfig::for_pulse_width(1.0)).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        pass &= t.fidelity >= 0.999 && secs < 60.0;
        parts.push(format!("|{n}> fidelity {:.9} in {secs:.2} s", t.fidelity));
    }
    verdict(pass, parts.join("; "))
}

fn short_delay_criterion() -> Verdict {
    let t0 = Instant::now();
    let reg = Regularization::default();
    let u = PulseShape::gaussian_from_start(0.0, 1.0).unwrap();
    let (start, end) = u.support();
    let support = end - start;
    let v = u.delayed(3.0 * support);
    let (g_out, g_in) = g_simultaneous(&u, &v, reg).unwrap();
    let (src, abs) = (g_source(&v, reg), g_absorber(&u, reg));
    let stop = v.support().1;
    let mut worst = 0.0f64;
    for k in 0..=20_000 {
        let t = start + (stop - start) * k as f64 / 20_000.0;
        let (a, b) = (abs.eval(t), src.eval(t));
        worst = worst.max((g_in.eval(t) - a).norm() / a.norm().max(1.0));
        worst = worst.max((g_out.eval(t) - b).norm() / b.norm().max(1.0));
    }
    let schedules_ok = worst <= reg.epsilon;
    let demo = DelayDemo::new(1.0, 0.3 * support);
    let out = run_delay_demo(&demo).unwrap();
    let oracle = delay_oracle_deviation(&demo, &out, 200).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        schedules_ok && oracle <= 0.01 && secs < 120.0,
        format!(
            "separated schedules differ by {worst:.2e} (bound {:.0e}); tau = 0.3 support: |flux - time bins| = {oracle:.2e}; {secs:.1} s",
            reg.epsilon
        ),
    )
}

struct Conservation {
    name: String,
    n: f64,
    drift: f64,
    herm: f64,
    balance: f64,
}

impl Conservation {
    fn from(name: &str, n: usize, res: &TrajectoryResult) -> Self {
        Conservation {
            name: name.into(),
            n: n as f64,
            drift: res.diagnostics.max_trace_drift,
            herm: res.diagnostics.max_hermiticity_defect,
            balance: photon_balance(res, "total").unwrap(),
        }
    }

    fn ok(&self) -> bool {
        self.drift <= 1e-6 && self.herm <= 1e-9 && self.balance <= 1e-3 * self.n
    }
}

fn conservation_criterion() -> Verdict {
    let mut runs = Vec::new();
    let u = PulseShape::gaussian(0.0, 1.0).unwrap();
    for n in 1..=3 {
        let t = fock_transfer(n, &u, Regularization::default(), &IntegratorConfig::for_pulse_width(1.0)).unwrap();
        runs.push(Conservation::from(&format!("transfer n={n}"), n, &t.result));
    }
    for tau in [30.0, 3.0] {
        let o = run_delay_demo(&DelayDemo::new(1.0, tau)).unwrap();
        runs.push(Conservation {
            name: format!("delay tau={tau}"),
            n: 1.0,
            drift: o.diagnostics.max_trace_drift,
            herm: o.diagnostics.max_hermiticity_defect,
            balance: o.balance,
        });
    }
    let o = run_oracle_compare(&OracleCompare::default()).unwrap();
    runs.push(Conservation {
        name: "atom scattering".into(),
        n: 1.0,
        drift: o.diagnostics.max_trace_drift,
        herm: o.diagnostics.max_hermiticity_defect,
        balance: o.balance,
    });
    for delta in [0.0, 1.5] {
        runs.push(Conservation::from(&format!("ramsey n=9 delta={delta}"), 9, &ramsey_trajectory(&RamseySetup::new(9), delta).unwrap()));
    }
    runs.push(Conservation::from("output analysis n=9", 9, &full_output_nine().0));
    runs.push(Conservation::from("output analysis n=9 window=4", 9, windowed_output_nine()));
    let failing: Vec<&str> = runs.iter().filter(|r| !r.ok()).map(|r| r.name.as_str()).collect();
    let drift = runs.iter().map(|r| r.drift).fold(0.0, f64::max);
    let herm = runs.iter().map(|r| r.herm).fold(0.0, f64::max);
    let bal = runs.iter().map(|r| r.balance / r.n).fold(0.0, f64::max);
    verdict(
        failing.is_empty(),
        format!(
            "{} scenarios: max trace drift {drift:.1e}, max Hermiticity defect {herm:.1e}, max balance/n {bal:.1e}{}",
            runs.len(),
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    )
}

/// Reduced Ramsey system against the full Schrödinger interferometer, with
/// the capture stage run separately so both share the release grid.
fn ramsey_picture_gap(n: usize, delta: f64) -> f64 {
    let setup = RamseySetup::new(n);
    let reduced = ramsey_trajectory(&setup, delta).unwrap();
    let geom = setup.geometry().unwrap();
    let sys = build_ramsey_schrodinger(&geom, setup.params(delta).unwrap(), n, n + 1).unwrap();
    let sys = excitation_cap(&sys, n).unwrap();
    let rho = fock_input(&sys, n).unwrap();
    let obs = [("pe", TimeOp::constant(TensorTerm::number(ATOM, 2).unwrap()))];
    let (release, readout) = setup.span().unwrap();
    let capture = integrate(&sys, &rho, (geom.pulse.support().0, release), &obs, &setup.integrator()).unwrap();
    let early = pe(&capture).iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let full = integrate(&sys, &capture.final_state, (release, readout), &obs, &setup.integrator()).unwrap();
    early.max(max_abs_gap(&pe(&reduced), &pe(&full)))
}

fn output_picture_gap(n: usize, delta: f64) -> f64 {
    let setup = RamseySetup::new(n);
    let (s_sys, s_rho) = output_system_schrodinger(&setup, delta, true).unwrap();
    let (i_sys, i_rho) = output_system(&setup, delta, true).unwrap();
    let s = output_trajectory(&setup, &s_sys, &s_rho).unwrap();
    let i = output_trajectory(&setup, &i_sys, &i_rho).unwrap();
    max_abs_gap(&pe(&s), &pe(&i))
}

fn picture_criterion() -> Verdict {
    let t0 = Instant::now();
    let deltas = [0.0, 1.0, -2.5];
    let gap = |n: usize| deltas.iter().map(|&d| ramsey_picture_gap(n, d).max(output_picture_gap(n, d))).fold(0.0, f64::max);
    let (g1, g2) = (gap(1), gap(2));
    let secs = t0.elapsed().as_secs_f64();
    verdict(g1 <= 1e-6 && g2 <= 1e-4 && secs < 300.0, format!("max P_e gap n=1: {g1:.2e} (<= 1e-6), n=2: {g2:.2e} (<= 1e-4); {secs:.1} s"))
}

struct Curves {
    deltas: Vec<f64>,
    quantum: Vec<f64>,
    classical: Vec<f64>,
}

fn ramsey_curves(n: usize, lo: f64, hi: f64, points: usize) -> Curves {
    let deltas = symmetric_grid(lo, hi, points);
    let rows = ramsey_scan(&RamseySetup::new(n), &deltas, 1).unwrap();
    let pts: Vec<PopulationPoint> = rows.into_iter().map(|r| r.outcome.unwrap()).collect();
    Curves { deltas, quantum: pts.iter().map(|p| p.quantum).collect(), classical: pts.iter().map(|p| p.classical).collect() }
}

fn within(x: Option<f64>, target: f64, rel: f64) -> bool {
    x.is_some_and(|x| (x - target).abs() <= rel * target)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("unresolved".into(), |x| format!("{x:.3}"))
}

fn ramsey_criterion() -> Verdict {
    let t0 = Instant::now();
    let c = ramsey_curves(9, -4.0, 4.0, 81);
    let secs = t0.elapsed().as_secs_f64();
    let target = 2.0 * PI / 0.5;
    let extrema = local_extrema(&c.quantum, 1e-9).len();
    let spacing = fringe_spacing(&c.deltas, &c.quantum, 1e-9);
    let reference = fringe_spacing(&c.deltas, &c.classical, 1e-9);
    let xcorr = normalized_cross_correlation(&c.quantum, &c.classical);
    let sym = symmetry_defect(&c.deltas, &c.quantum).unwrap();
    let checks = [extrema >= 3, within(spacing, target, 0.15), xcorr >= 0.9, sym <= 1e-6, secs < 900.0];
    verdict(
        checks.iter().all(|&b| b),
        format!(
            "on [-4, 4]: {extrema} extrema (>= 3: {}); spacing {} vs 2pi/tau = {target:.3}, classical {} ({}); cross-correlation {xcorr:.6} ({}); symmetry {sym:.1e} ({}); {secs:.1} s",
            ok(checks[0]),
            fmt_opt(spacing),
            fmt_opt(reference),
            ok(checks[1]),
            ok(checks[2]),
            ok(checks[3]),
        ),
    )
}

/// Same structural checks on a grid wide enough to contain several fringes.
/// Reported for information; it is not one of the criteria.
fn ramsey_wide_grid() -> String {
    let t0 = Instant::now();
    let c = ramsey_curves(9, -40.0, 40.0, 81);
    let target = 2.0 * PI / 0.5;
    let spacing = fringe_spacing(&c.deltas, &c.quantum, 1e-9);
    let reference = fringe_spacing(&c.deltas, &c.classical, 1e-9);
    format!(
        "on [-40, 40]: {} extrema, spacing {} (classical {}) vs {target:.3}, within 15%: {}; cross-correlation {:.6}; symmetry {:.1e}; {:.1} s",
        local_extrema(&c.quantum, 1e-9).len(),
        fmt_opt(spacing),
        fmt_opt(reference),
        within(spacing, target, 0.15),
        normalized_cross_correlation(&c.quantum, &c.classical),
        symmetry_defect(&c.deltas, &c.quantum).unwrap(),
        t0.elapsed().as_secs_f64()
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "not met"
    }
}

fn subtraction_criterion() -> Verdict {
    let (res, elapsed) = full_output_nine();
    let intensity = res.final_value("intensity").unwrap();
    let t0 = Instant::now();
    let setup = RamseySetup::new(9);
    let (sys, rho) = output_system_schrodinger(&setup, 0.0, false).unwrap();
    let control = output_trajectory(&setup, &sys, &rho).unwrap().final_value("intensity").unwrap();
    let secs = elapsed.as_secs_f64() + t0.elapsed().as_secs_f64();
    verdict(
        (7.5..=8.5).contains(&intensity) && (control - 9.0).abs() <= 0.01 && secs < 600.0,
        format!("n=9, delta=0: constructive-port intensity {intensity:.6} (in [7.5, 8.5]); emitter removed: {control:.6} (9 +- 0.01); {secs:.1} s"),
    )
}

fn window_criterion() -> Verdict {
    let full = full_output_nine().0.final_value("pe").unwrap();
    let win = windowed_output_nine();
    let shift = (win.final_value("pe").unwrap() - full).abs();
    let leak = win.diagnostics.max_boundary_population.unwrap_or(f64::INFINITY);
    verdict(shift < 1e-3 && leak < 1e-6, format!("n=9 window=4: |P_e shift| {shift:.2e} (< 1e-3), boundary population {leak:.2e} (< 1e-6)"))
}

fn extended_thirty() -> String {
    let t0 = Instant::now();
    let target = 2.0 * PI / 0.5;
    let c = ramsey_curves(30, -4.0, 4.0, 81);
    let setup = RamseySetup { truncation: Truncation::Window(4), ..RamseySetup::new(30) };
    let rows = intensity_scan(&setup, &symmetric_grid(-4.0, 4.0, 9), true, 1).unwrap();
    let pts: Vec<IntensityPoint> = rows.into_iter().map(|r| r.outcome.unwrap()).collect();
    let leak = pts.iter().filter_map(|p| p.boundary).fold(0.0, f64::max);
    format!(
        "n=30: {} extrema, spacing {} vs {target:.3}, cross-correlation {:.6}, symmetry {:.1e}; windowed intensity at 0: {:.4}, boundary {leak:.1e}; {:.0} s",
        local_extrema(&c.quantum, 1e-9).len(),
        fmt_opt(fringe_spacing(&c.deltas, &c.quantum, 1e-9)),
        normalized_cross_correlation(&c.quantum, &c.classical),
        symmetry_defect(&c.deltas, &c.quantum).unwrap(),
        pts[4].intensity,
        t0.elapsed().as_secs_f64()
    )
}

fn determinism_criterion() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[physics]\nn = 2\n[scan]\ndelta_min = -2.0\ndelta_max = 2.0\npoints = 5\n[delay]\ntau = 3.0\n[oracle]\nrefine = false\n",
    )
    .unwrap();
    let exe = env!("CARGO_BIN_EXE_delaynet");
    let mut same = Vec::new();
    for cmd in ["ramsey-scan", "intensity-scan", "delay-demo", "oracle-compare", "validate-config"] {
        let runs: Vec<Vec<u8>> = [("a.csv", "1"), ("b.csv", "2")]
            .iter()
            .map(|(name, workers)| {
                let out = dir.path().join(format!("{cmd}-{name}"));
                let status = Command::new(exe)
                    .args([cmd, "--config", cfg.to_str().unwrap(), "--workers", workers])
                    .args(if cmd == "validate-config" { vec![] } else { vec!["--out".to_string(), out.to_string_lossy().into_owned()] })
                    .output()
                    .unwrap();
                assert!(status.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&status.stderr));
                if cmd == "validate-config" {
                    status.stdout
                } else {
                    std::fs::read(out).unwrap()
                }
            })
            .collect();
        same.push((cmd, !runs[0].is_empty() && runs[0] == runs[1]));
    }
    let differing: Vec<&str> = same.iter().filter(|(_, s)| !s).map(|(c, _)| *c).collect();
    verdict(
        differing.is_empty(),
        format!(
            "{} subcommands run twice (1 and 2 workers): {}",
            same.len(),
            if differing.is_empty() { "byte-identical".to_string() } else { format!("differ: {}", differing.join(", ")) }
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "Fock-state transfer", fock_transfer_criterion),
        (2, "short-delay method", short_delay_criterion),
        (3, "conservation suite", conservation_criterion),
        (4, "picture equivalence", picture_criterion),
        (5, "Ramsey fringes, n = 9", ramsey_criterion),
        (6, "zero-detuning photon subtraction, n = 9", subtraction_criterion),
        (7, "window truncation, n = 9", window_criterion),
        (8, "determinism", determinism_criterion),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let v = run();
        say(&format!("criterion {id} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail));
        if id == 5 {
            say(&format!("  supplementary, not a criterion: {}", ramsey_wide_grid()));
        }
        if id == 7 && std::env::var("DELAYNET_EXTENDED").is_ok_and(|v| v == "1") {
            say(&format!("  extended run, not gating: {}", extended_thirty()));
        }
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        say("acceptance: all criteria passed");
    } else {
        say(&format!("acceptance: failed criteria {failed:?}"));
        std::process::exit(1);
    }
}
