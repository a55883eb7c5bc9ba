//! Network assembly: components, the series product, and the scenario builders
//! for the delayed interferometer, the Ramsey experiment and its output
//! analysis.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ipicture;
use crate::pulses::{g_absorber, g_source, theta_schedule, CouplingSchedule, PulseShape, Regularization};
use crate::qcore::{prepare_fock, sigma_minus, DensityMatrix, TensorTerm};
use crate::system::{Channel, Coefficient, Metadata, Origin, TimeDependentSystem, TimeOp};

pub const ATOM: &str = "atom";
pub const MODE_U: &str = "mode_u";
pub const MODE_V1: &str = "mode_v1";
pub const MODE_V2: &str = "mode_v2";
pub const MODE_B1: &str = "mode_b1";
pub const MODE_B2: &str = "mode_b2";
pub const PICKUP_1: &str = "pickup_1";
pub const PICKUP_2: &str = "pickup_2";

const IDENTITY_LABEL: &str = "identity";

fn i_half() -> C64 {
    C64::new(0.0, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomParams {
    pub gamma: f64,
    pub delta: f64,
}

impl AtomParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("decay rate must be positive, got {gamma}")));
        }
        if !delta.is_finite() {
            return Err(Error::param("delta", "detuning must be finite"));
        }
        Ok(AtomParams { gamma, delta })
    }

    /// An atom that does not couple to the light; the linear-network control.
    pub fn decoupled(delta: f64) -> Self {
        AtomParams { gamma: 0.0, delta }
    }
}

/// Capture-and-release timing of the two interferometer arms. The input pulse
/// is fully captured by time `capture`; the short arm releases `v₂(t) = u(t−T)`
/// and the long arm `v₁(t) = u(t−τ−T)`.
#[derive(Clone, Debug)]
pub struct DelayGeometry {
    pub pulse: PulseShape,
    pub tau: f64,
    pub capture: f64,
    pub reg: Regularization,
}

impl DelayGeometry {
    pub fn new(pulse: PulseShape, tau: f64, capture: f64, reg: Regularization) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("relative delay must be non-negative, got {tau}")));
        }
        let (start, end) = pulse.support();
        if start + capture < end {
            return Err(Error::CaptureIncomplete { release: start + capture, pulse_end: end });
        }
        Ok(DelayGeometry { pulse, tau, capture, reg })
    }

    /// Release starts half a pulse width after the input pulse has ended.
    pub fn with_default_margin(pulse: PulseShape, tau: f64, reg: Regularization) -> Result<Self> {
        let (start, end) = pulse.support();
        let margin = 0.5 * pulse.width().unwrap_or((end - start) / 10.0);
        DelayGeometry::new(pulse, tau, end + margin, reg)
    }

    pub fn v1(&self) -> PulseShape {
        self.pulse.delayed(self.tau + self.capture)
    }

    pub fn v2(&self) -> PulseShape {
        self.pulse.delayed(self.capture)
    }

    pub fn release_start(&self) -> f64 {
        self.pulse.support().0 + self.capture
    }

    pub fn end_time(&self) -> f64 {
        self.v1().support().1
    }

    /// Two pulse widths after the peak of the later-released pulse.
    pub fn readout_time(&self) -> f64 {
        let v1 = self.v1();
        match (v1.peak_time(), v1.width()) {
            (Some(peak), Some(w)) => peak + 2.0 * w,
            _ => v1.support().1,
        }
    }

    fn metadata(&self, scenario: &str) -> Metadata {
        let mut m = Metadata::new(scenario)
            .with("tau", self.tau)
            .with("capture_time", self.capture)
            .with("release_start", self.release_start())
            .with("readout_time", self.readout_time())
            .with("epsilon", self.reg.epsilon);
        if let Some(w) = self.pulse.width() {
            m = m.with("t_w", w);
        }
        if let Some(p) = self.pulse.peak_time() {
            m = m.with("t_p_source", p);
            m = m.note(format!("readout clock: source peak {p} maps to short-arm peak {}", p + self.capture));
        }
        m
    }
}

fn conj_of(g: &CouplingSchedule) -> Coefficient {
    let g = g.clone();
    Coefficient::from_fn(move |t| g.eval(t).conj())
}

fn lowering(label: &str) -> TensorTerm {
    TensorTerm::local(label, sigma_minus().to_dense())
}

fn excited(label: &str) -> TensorTerm {
    let s = sigma_minus().to_dense();
    TensorTerm::local(label, s.adjoint() * s)
}

/// Single-sided cavity `label` coupled to `channel` by `g(t)`: `L = g*(t)·a`.
pub fn coupled_cavity(label: &str, dim: usize, g: &CouplingSchedule, channel: &str) -> Result<TimeDependentSystem> {
    let op = TimeOp::term(conj_of(g), TensorTerm::destroy(label, dim)?);
    TimeDependentSystem::new(&[(label, dim)], TimeOp::zero(), vec![Channel::new(channel, op)], Metadata::new("cavity"))
}

/// Emitting cavity with the source coupling of `u`.
pub fn source_cavity(label: &str, dim: usize, u: &PulseShape, reg: Regularization, channel: &str) -> Result<TimeDependentSystem> {
    coupled_cavity(label, dim, &g_source(u, reg), channel)
}

/// Absorbing cavity matched to `u`.
pub fn absorber_cavity(label: &str, dim: usize, u: &PulseShape, reg: Regularization, channel: &str) -> Result<TimeDependentSystem> {
    coupled_cavity(label, dim, &g_absorber(u, reg), channel)
}

/// Two-sided cavity: input mirror `g_in` on `in_channel`, output mirror `g_out`
/// on `out_channel`.
pub fn delay_cavity(
    label: &str,
    dim: usize,
    g_in: &CouplingSchedule,
    g_out: &CouplingSchedule,
    channels: (&str, &str),
) -> Result<TimeDependentSystem> {
    let a = TensorTerm::destroy(label, dim)?;
    let ch =
        vec![Channel::new(channels.0, TimeOp::term(conj_of(g_in), a.clone())), Channel::new(channels.1, TimeOp::term(conj_of(g_out), a))];
    TimeDependentSystem::new(&[(label, dim)], TimeOp::zero(), ch, Metadata::new("delay-cavity"))
}

/// Two-level emitter with `H = Δσ₊σ₋` decaying into the listed channels with
/// rates `γ·wᵢ`.
pub fn two_level_atom(params: AtomParams, channels: &[(&str, f64)]) -> Result<TimeDependentSystem> {
    let h = TimeOp::term(Coefficient::real(params.delta), excited(ATOM));
    let ch = channels
        .iter()
        .map(|&(name, w)| Channel::new(name, TimeOp::term(Coefficient::real((params.gamma * w).sqrt()), lowering(ATOM))))
        .collect();
    let meta = Metadata::new("atom").with("gamma", params.gamma).with("delta", params.delta);
    TimeDependentSystem::new(&[(ATOM, 2)], h, ch, meta)
}

/// A classical field `α(t)` entering on `channel`.
pub fn coherent_drive(channel: &str, alpha: Coefficient) -> TimeDependentSystem {
    let mut s = TimeDependentSystem::identity(channel);
    s.channels[0].op = TimeOp::term(alpha, TensorTerm::identity());
    s.metadata = Metadata::new("coherent-drive");
    s
}

/// Side-by-side composition without any connection.
pub fn concatenate(a: &TimeDependentSystem, b: &TimeDependentSystem) -> Result<TimeDependentSystem> {
    let mut parts: Vec<(String, usize)> = Vec::new();
    for (label, dim) in a.subsystems().into_iter().chain(b.subsystems()) {
        if label == IDENTITY_LABEL && dim == 1 {
            continue;
        }
        if parts.iter().any(|(l, _)| *l == label) {
            return Err(Error::DuplicateLabel(label));
        }
        parts.push((label, dim));
    }
    if parts.is_empty() {
        parts.push((IDENTITY_LABEL.to_string(), 1));
    }
    let parts_ref: Vec<(&str, usize)> = parts.iter().map(|(l, d)| (l.as_str(), *d)).collect();
    let channels = a.channels.iter().chain(&b.channels).cloned().collect();
    let meta = Metadata::new(format!("{} + {}", a.metadata.scenario, b.metadata.scenario));
    TimeDependentSystem::new(&parts_ref, a.hamiltonian.add(&b.hamiltonian), channels, meta)
}

/// Feed output channel `from` into the input of channel `to` within one system.
/// The merged channel is `L_from + L_to` under the name `to`, and the
/// feed-forward Hamiltonian `(i/2)(L_from†L_to − L_to†L_from)` is added.
pub fn connect(system: &TimeDependentSystem, from: &str, to: &str) -> Result<TimeDependentSystem> {
    if from == to {
        return Err(Error::param("channels", format!("cannot feed `{from}` into itself")));
    }
    let mut out = system.clone();
    let up = out.channels.remove(out.channel_index(from)?).op;
    let k = out.channel_index(to)?;
    let down = out.channels[k].op.clone();
    let feed = up.adjoint().mul(&down)?.sub(&down.adjoint().mul(&up)?).scale(i_half());
    out.hamiltonian = out.hamiltonian.add(&feed);
    out.channels[k].op = up.add(&down);
    Ok(out)
}

/// Cascade `upstream`'s channel `from` into `downstream`'s channel `to`.
pub fn series_product(
    upstream: &TimeDependentSystem,
    from: &str,
    downstream: &TimeDependentSystem,
    to: &str,
) -> Result<TimeDependentSystem> {
    upstream.channel(from)?;
    downstream.channel(to)?;
    connect(&concatenate(upstream, downstream)?, from, to)
}

/// Balanced beam splitter on an output channel: `L → (L/√2, L/√2)`. The vacuum
/// entering the unused port carries no operator.
pub fn split(system: &TimeDependentSystem, channel: &str, names: (&str, &str)) -> Result<TimeDependentSystem> {
    let mut out = system.clone();
    let k = out.channel_index(channel)?;
    let half = out.channels[k].op.scale(C64::new(FRAC_1_SQRT_2, 0.0));
    out.channels[k] = Channel::new(names.0, half.clone());
    out.channels.insert(k + 1, Channel::new(names.1, half));
    Ok(out)
}

/// Replace channels `(a, b)` by `m·(L_a, L_b)ᵀ` under the new names. A unitary
/// `m` leaves the master equation unchanged.
pub fn mix_channels(
    system: &TimeDependentSystem,
    inputs: (&str, &str),
    names: (&str, &str),
    m: [[C64; 2]; 2],
) -> Result<TimeDependentSystem> {
    let mut out = system.clone();
    let la = out.channel(inputs.0)?.op.clone();
    let lb = out.channel(inputs.1)?.op.clone();
    let ka = out.channel_index(inputs.0)?;
    let kb = out.channel_index(inputs.1)?;
    out.channels[ka] = Channel::new(names.0, la.scale(m[0][0]).add(&lb.scale(m[0][1])));
    out.channels[kb] = Channel::new(names.1, la.scale(m[1][0]).add(&lb.scale(m[1][1])));
    Ok(out)
}

fn check_mode_dim(n: usize, mode_dim: usize) -> Result<()> {
    if mode_dim < 2 {
        return Err(Error::InvalidDimension { dim: mode_dim, reason: "cavity modes need at least two levels" });
    }
    if n >= mode_dim {
        return Err(Error::Truncation { label: MODE_U.to_string(), n, dim: mode_dim });
    }
    Ok(())
}

/// Source cavity, balanced splitter and one capture-and-release cavity per arm,
/// in the Schrödinger picture on `[mode_u, mode_v1, mode_v2]`. Channels `r1`,
/// `r2` carry light reflected by the delay cavities, `t1`, `t2` the released
/// pulses.
pub fn build_mz_delay(geometry: &DelayGeometry, mode_dim: usize) -> Result<TimeDependentSystem> {
    check_mode_dim(0, mode_dim)?;
    let (u, reg) = (&geometry.pulse, geometry.reg);
    let src = split(&source_cavity(MODE_U, mode_dim, u, reg, "out")?, "out", ("arm1", "arm2"))?;
    let absorb = g_absorber(u, reg);
    let d1 = delay_cavity(MODE_V1, mode_dim, &absorb, &g_source(&geometry.v1(), reg), ("r1", "t1"))?;
    let d2 = delay_cavity(MODE_V2, mode_dim, &absorb, &g_source(&geometry.v2(), reg), ("r2", "t2"))?;
    let sys = series_product(&src, "arm1", &d1, "r1")?;
    let mut sys = series_product(&sys, "arm2", &d2, "r2")?;
    sys.metadata = geometry.metadata("mz-delay");
    sys.origin = Origin::MzDelay(geometry.clone());
    Ok(sys)
}

/// The delayed interferometer driving the atom, fully in the Schrödinger
/// picture on `[atom, mode_u, mode_v1, mode_v2]`. Cross-check for the reduced
/// build.
pub fn build_ramsey_schrodinger(geometry: &DelayGeometry, params: AtomParams, n: usize, mode_dim: usize) -> Result<TimeDependentSystem> {
    check_mode_dim(n, mode_dim)?;
    let mz = build_mz_delay(geometry, mode_dim)?;
    let atom = two_level_atom(params, &[("path1", 0.5), ("path2", 0.5)])?;
    let sys = series_product(&mz, "t1", &atom, "path1")?;
    let mut sys = connect(&sys, "t2", "path2")?.reordered(&[ATOM, MODE_U, MODE_V1, MODE_V2])?;
    sys.metadata = atom_metadata(geometry, "ramsey-schrodinger", params, n);
    sys.origin = Origin::Generic;
    Ok(sys)
}

fn atom_metadata(geometry: &DelayGeometry, scenario: &str, params: AtomParams, n: usize) -> Metadata {
    geometry.metadata(scenario).with("gamma", params.gamma).with("delta", params.delta).with("n", n as f64)
}

/// The atom driven by the two released pulses after the interferometer has
/// been reduced to `ĉ± = (â_u ± b̂₂)/√2`. Layout `[atom, mode_u, mode_b2]`;
/// channels `path1 = g_v1*ĉ₊ + √(γ/2)σ₋`, `path2 = g_v2*ĉ₋ + √(γ/2)σ₋`.
pub fn build_ramsey_atom(geometry: &DelayGeometry, params: AtomParams, n: usize, mode_dim: usize) -> Result<TimeDependentSystem> {
    check_mode_dim(n, mode_dim)?;
    let reduced = ipicture::reduce_mz(&build_mz_delay(geometry, mode_dim)?)?;
    let atom = two_level_atom(params, &[("path1", 0.5), ("path2", 0.5)])?;
    let sys = series_product(&reduced, "t1", &atom, "path1")?;
    let mut sys = connect(&sys, "t2", "path2")?.reordered(&[ATOM, MODE_U, MODE_B2])?;
    sys.metadata = atom_metadata(geometry, "ramsey", params, n);
    sys.origin = Origin::RamseyAtom { geometry: geometry.clone(), params };
    Ok(sys)
}

/// Atom driven by two classical pulses carrying `n/2` photons each:
/// `H = Δσ₊σ₋ + i√(γ/2)(α σ₊ − α* σ₋)` with `α = √(n/2)(v₁ + v₂)` and a single
/// decay channel `√γ σ₋`.
pub fn build_classical_ramsey(params: AtomParams, n: f64, v1: &PulseShape, v2: &PulseShape) -> Result<TimeDependentSystem> {
    if !(n >= 0.0) {
        return Err(Error::param("n", "mean photon number must be non-negative"));
    }
    let (v1, v2) = (v1.clone(), v2.clone());
    let amp = (n / 2.0).sqrt() * (params.gamma / 2.0).sqrt();
    let drive = Coefficient::from_fn(move |t| (v1.u(t) + v2.u(t)) * amp);
    let sp = lowering(ATOM).adjoint();
    let h = TimeOp::term(Coefficient::real(params.delta), excited(ATOM))
        .add(&TimeOp::term(drive.scale(C64::new(0.0, 1.0)), sp.clone()))
        .add(&TimeOp::term(drive.conj().scale(C64::new(0.0, -1.0)), lowering(ATOM)));
    let decay = Channel::new("decay", TimeOp::term(Coefficient::real(params.gamma.sqrt()), lowering(ATOM)));
    let meta = Metadata::new("classical-ramsey").with("gamma", params.gamma).with("delta", params.delta).with("n", n);
    TimeDependentSystem::new(&[(ATOM, 2)], h, vec![decay], meta)
}

/// The Ramsey system with a pickup cavity behind each atomic output path,
/// matched to the released shapes, and the two output paths recombined on a
/// balanced splitter: `L₁ = (L_path1 + L_path2)/√2`, `L₂ = (L_path2 − L_path1)/√2`.
/// Schrödinger picture on `[atom, mode_u, mode_b2, pickup_1, pickup_2]`.
pub fn build_output_analysis(geometry: &DelayGeometry, params: AtomParams, n: usize, mode_dim: usize) -> Result<TimeDependentSystem> {
    build_output_analysis_with_pickups(geometry, params, n, mode_dim, (&geometry.v1(), &geometry.v2()))
}

pub fn build_output_analysis_with_pickups(
    geometry: &DelayGeometry,
    params: AtomParams,
    n: usize,
    mode_dim: usize,
    pickups: (&PulseShape, &PulseShape),
) -> Result<TimeDependentSystem> {
    let ramsey = build_ramsey_atom(geometry, params, n, mode_dim)?;
    let p1 = absorber_cavity(PICKUP_1, mode_dim, pickups.0, geometry.reg, "in1")?;
    let p2 = absorber_cavity(PICKUP_2, mode_dim, pickups.1, geometry.reg, "in2")?;
    let sys = series_product(&ramsey, "path1", &p1, "in1")?;
    let sys = series_product(&sys, "path2", &p2, "in2")?;
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let sys = mix_channels(&sys, ("in1", "in2"), ("L1", "L2"), [[s, s], [-s, s]])?;
    let mut sys = sys.reordered(&[ATOM, MODE_U, MODE_B2, PICKUP_1, PICKUP_2])?;
    sys.metadata = atom_metadata(geometry, "output-analysis", params, n);
    sys.origin = Origin::OutputAnalysis { geometry: geometry.clone(), params, pickups: (pickups.0.clone(), pickups.1.clone()) };
    Ok(sys)
}

/// `ĉ₁ = (â_u + b̂₂)/√2` or `ĉ₂ = (â_u − b̂₂)/√2`.
pub fn c_mode(mode_dim: usize, sign: f64) -> Result<TimeOp> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Ok(TimeOp::constant(TensorTerm::destroy(MODE_U, mode_dim)?)
        .scale(s)
        .add(&TimeOp::constant(TensorTerm::destroy(MODE_B2, mode_dim)?).scale(s * sign)))
}

/// Photon number in the original pulse mode at the port where the two arms
/// interfere constructively when recombined without delay.
///
/// In the Schrödinger picture this is `A†A` with
/// `A = Σᵢ (cosθᵢ ĉᵢ + sinθᵢ d̂ᵢ)/√2`, which reduces to `(d̂₁ + d̂₂)/√2` once
/// both pickups are complete; in the interaction picture it is `â_u†â_u`.
pub fn constructive_port_operator(system: &TimeDependentSystem) -> Result<TimeOp> {
    let dim = system.layout().dim_of(MODE_U)?;
    match &system.origin {
        Origin::OutputAnalysisInteraction { .. } => Ok(TimeOp::constant(TensorTerm::number(MODE_U, dim)?)),
        Origin::OutputAnalysis { pickups, .. } => {
            let s = C64::new(FRAC_1_SQRT_2, 0.0);
            let mut a = TimeOp::zero();
            for (k, (pulse, label)) in [(&pickups.0, PICKUP_1), (&pickups.1, PICKUP_2)].into_iter().enumerate() {
                let th = theta_schedule(pulse);
                let th2 = th.clone();
                let cos = Coefficient::from_fn(move |t| C64::new(th.sin_cos(t).1, 0.0));
                let sin = Coefficient::from_fn(move |t| C64::new(th2.sin_cos(t).0, 0.0));
                let c = c_mode(dim, if k == 0 { 1.0 } else { -1.0 })?;
                let d = TimeOp::constant(TensorTerm::destroy(label, system.layout().dim_of(label)?)?);
                a = a.add(&c.scale_by(&cos).add(&d.scale_by(&sin)).scale(s));
            }
            a.adjoint().mul(&a)
        }
        _ => Err(Error::Unsupported("constructive-port intensity needs an output-analysis system".into())),
    }
}

pub fn constructive_port_intensity(rho: &DensityMatrix, system: &TimeDependentSystem, t: f64) -> Result<f64> {
    let op = constructive_port_operator(system)?.eval(t, rho.basis())?;
    Ok(rho.expectation(&op)?.re)
}

/// Fock `|n⟩` in the source mode with every other subsystem empty.
pub fn fock_input(system: &TimeDependentSystem, n: usize) -> Result<DensityMatrix> {
    prepare_fock(system.basis(), MODE_U, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::Basis;
    use std::sync::Arc;

    fn geometry() -> DelayGeometry {
        let u = PulseShape::gaussian_from_start(0.0, 0.2).unwrap();
        DelayGeometry::with_default_margin(u, 0.5, Regularization::default()).unwrap()
    }

    fn sample_times(geom: &DelayGeometry, count: usize) -> Vec<f64> {
        let end = geom.end_time();
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        (1..=count).map(|k| end * ((k as f64 * phi) % 1.0)).collect()
    }

    fn close(a: &TimeOp, b: &TimeOp, t: f64, basis: &Arc<Basis>) -> f64 {
        a.eval(t, basis).unwrap().max_abs_diff(&b.eval(t, basis).unwrap()).unwrap()
    }

    fn coef(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Coefficient {
        Coefficient::from_fn(f)
    }

    #[test]
    fn geometry_clock() {
        let g = geometry();
        let t_w = 0.2;
        assert!((g.capture - 10.5 * t_w).abs() < 1e-12);
        assert!((g.readout_time() - (g.capture + 5.0 * t_w + 0.5 + 2.0 * t_w)).abs() < 1e-12);
        let short = DelayGeometry::new(g.pulse.clone(), 0.5, 1.0, Regularization::default());
        assert!(matches!(short, Err(Error::CaptureIncomplete { .. })));
    }

    #[test]
    fn mz_delay_matches_explicit_operators() {
        let geom = geometry();
        let d = 3;
        let sys = build_mz_delay(&geom, d).unwrap();
        let basis = sys.basis().clone();
        assert_eq!(sys.layout().labels().collect::<Vec<_>>(), vec![MODE_U, MODE_V1, MODE_V2]);
        let reg = geom.reg;
        let (gu, gi) = (g_source(&geom.pulse, reg), g_absorber(&geom.pulse, reg));
        let (g1, g2) = (g_source(&geom.v1(), reg), g_source(&geom.v2(), reg));
        let au = TensorTerm::destroy(MODE_U, d).unwrap();
        let a1 = TensorTerm::destroy(MODE_V1, d).unwrap();
        let a2 = TensorTerm::destroy(MODE_V2, d).unwrap();
        let k = 1.0 / (2.0 * 2f64.sqrt());
        let mut h = TimeOp::zero();
        for av in [&a1, &a2] {
            let (gu, gi) = (gu.clone(), gi.clone());
            let x = TimeOp::term(coef(move |t| C64::new(0.0, k) * gu.eval(t) * gi.eval(t).conj()), au.adjoint().mul(av).unwrap());
            // i(y − y†) = x + x† with x = iy
            h = h.add(&x).add(&x.adjoint());
        }
        let src = TimeOp::term(conj_of(&gu), au.clone()).scale(C64::new(FRAC_1_SQRT_2, 0.0));
        let r1 = src.add(&TimeOp::term(conj_of(&gi), a1.clone()));
        let r2 = src.add(&TimeOp::term(conj_of(&gi), a2.clone()));
        let t1 = TimeOp::term(conj_of(&g1), a1);
        let t2 = TimeOp::term(conj_of(&g2), a2);
        for t in sample_times(&geom, 50) {
            assert!(close(&sys.hamiltonian, &h, t, &basis) < 1e-12, "H at t = {t}");
            for (name, op) in [("r1", &r1), ("r2", &r2), ("t1", &t1), ("t2", &t2)] {
                assert!(close(&sys.channel(name).unwrap().op, op, t, &basis) < 1e-12, "{name} at t = {t}");
            }
        }
    }

    #[test]
    fn series_into_atom_gives_joint_channel() {
        let u = PulseShape::gaussian_from_start(0.0, 0.3).unwrap();
        let reg = Regularization::default();
        let src = source_cavity("m", 3, &u, reg, "out").unwrap();
        let params = AtomParams::new(1.0, 0.0).unwrap();
        let atom = two_level_atom(params, &[("decay", 1.0)]).unwrap();
        let sys = series_product(&src, "out", &atom, "decay").unwrap();
        assert_eq!(sys.channels.len(), 1);
        let g = g_source(&u, reg);
        let expect =
            TimeOp::term(conj_of(&g), TensorTerm::destroy("m", 3).unwrap()).add(&TimeOp::term(Coefficient::real(1.0), lowering(ATOM)));
        for k in 0..40 {
            let t = 3.0 * k as f64 / 40.0;
            assert!(close(&sys.channels[0].op, &expect, t, sys.basis()) < 1e-14);
            assert!(sys.hermiticity_defect(t).unwrap() < 1e-14);
        }
    }

    #[test]
    fn identity_is_neutral() {
        let u = PulseShape::gaussian_from_start(0.0, 0.3).unwrap();
        let src = source_cavity("m", 3, &u, Regularization::default(), "out").unwrap();
        let sys = series_product(&src, "out", &TimeDependentSystem::identity("in"), "in").unwrap();
        assert_eq!(sys.layout().labels().collect::<Vec<_>>(), vec!["m"]);
        for k in 0..20 {
            let t = 3.0 * k as f64 / 20.0;
            assert!(close(&sys.channels[0].op, &src.channels[0].op, t, sys.basis()) < 1e-15);
            assert_eq!(sys.hamiltonian_at(t).unwrap().nnz(), 0);
        }
        assert!(matches!(series_product(&src, "nope", &src, "out"), Err(Error::UnknownChannel(_))));
    }

    #[test]
    fn ramsey_atom_matches_explicit_operators() {
        let geom = geometry();
        let params = AtomParams::new(1.0, 0.7).unwrap();
        let d = 3;
        let sys = build_ramsey_atom(&geom, params, 2, d).unwrap();
        assert_eq!(sys.layout().labels().collect::<Vec<_>>(), vec![ATOM, MODE_U, MODE_B2]);
        let reg = geom.reg;
        let (g1, g2) = (g_source(&geom.v1(), reg), g_source(&geom.v2(), reg));
        let cp = c_mode(d, 1.0).unwrap();
        let cm = c_mode(d, -1.0).unwrap();
        let sm = TimeOp::constant(lowering(ATOM));
        let k = (0.5f64).sqrt();
        let x = TimeOp::term(conj_of(&g1).conj(), TensorTerm::identity())
            .mul(&cp.adjoint())
            .unwrap()
            .mul(&sm)
            .unwrap()
            .add(&TimeOp::term(conj_of(&g2).conj(), TensorTerm::identity()).mul(&cm.adjoint()).unwrap().mul(&sm).unwrap());
        let h = TimeOp::term(Coefficient::real(0.7), excited(ATOM)).add(&x.sub(&x.adjoint()).scale(C64::new(0.0, 0.5 * k)));
        let l1 = TimeOp::term(conj_of(&g1), TensorTerm::identity()).mul(&cp).unwrap().add(&sm.scale(C64::new(k, 0.0)));
        let l2 = TimeOp::term(conj_of(&g2), TensorTerm::identity()).mul(&cm).unwrap().add(&sm.scale(C64::new(k, 0.0)));
        for t in sample_times(&geom, 50) {
            assert!(close(&sys.hamiltonian, &h, t, sys.basis()) < 1e-12);
            assert!(close(&sys.channel("path1").unwrap().op, &l1, t, sys.basis()) < 1e-12);
            assert!(close(&sys.channel("path2").unwrap().op, &l2, t, sys.basis()) < 1e-12);
        }
        assert!(matches!(build_ramsey_atom(&geom, params, 3, 3), Err(Error::Truncation { .. })));
    }

    #[test]
    fn output_analysis_matches_explicit_operators() {
        let geom = geometry();
        let params = AtomParams::new(1.0, -0.4).unwrap();
        let d = 2;
        let sys = build_output_analysis(&geom, params, 1, d).unwrap();
        let reg = geom.reg;
        let (v1, v2) = (geom.v1(), geom.v2());
        let (go1, go2) = (g_source(&v1, reg), g_source(&v2, reg));
        let (gi1, gi2) = (g_absorber(&v1, reg), g_absorber(&v2, reg));
        let c1 = c_mode(d, 1.0).unwrap();
        let c2 = c_mode(d, -1.0).unwrap();
        let d1 = TimeOp::constant(TensorTerm::destroy(PICKUP_1, d).unwrap());
        let d2 = TimeOp::constant(TensorTerm::destroy(PICKUP_2, d).unwrap());
        let sm = TimeOp::constant(lowering(ATOM));
        let cf = |g: &CouplingSchedule| TimeOp::term(conj_of(g).conj(), TensorTerm::identity());
        let cc = |g: &CouplingSchedule| TimeOp::term(conj_of(g), TensorTerm::identity());
        let k = (0.5f64).sqrt();
        // H₁ with the pickup additions
        let x1 = cf(&go1).mul(&c1.adjoint()).unwrap().mul(&sm).unwrap().add(&cf(&go2).mul(&c2.adjoint()).unwrap().mul(&sm).unwrap());
        let x2 = cc(&gi1)
            .mul(&sm.adjoint())
            .unwrap()
            .mul(&d1)
            .unwrap()
            .add(&cc(&gi2).mul(&sm.adjoint()).unwrap().mul(&d2).unwrap())
            .scale(C64::new(k, 0.0))
            .add(&cf(&go1).mul(&cc(&gi1)).unwrap().mul(&c1.adjoint()).unwrap().mul(&d1).unwrap())
            .add(&cf(&go2).mul(&cc(&gi2)).unwrap().mul(&c2.adjoint()).unwrap().mul(&d2).unwrap());
        let h = TimeOp::term(Coefficient::real(-0.4), excited(ATOM))
            .add(&x1.sub(&x1.adjoint()).scale(C64::new(0.0, 0.5 * k)))
            .add(&x2.sub(&x2.adjoint()).scale(C64::new(0.0, 0.5)));
        let s = C64::new(k, 0.0);
        let l1 = cc(&gi1)
            .mul(&d1)
            .unwrap()
            .add(&cc(&gi2).mul(&d2).unwrap())
            .scale(s)
            .add(&cc(&go1).mul(&c1).unwrap().add(&cc(&go2).mul(&c2).unwrap()).scale(s))
            .add(&sm);
        let l2 = cc(&gi2)
            .mul(&d2)
            .unwrap()
            .sub(&cc(&gi1).mul(&d1).unwrap())
            .scale(s)
            .add(&cc(&go2).mul(&c2).unwrap().sub(&cc(&go1).mul(&c1).unwrap()).scale(s));
        for t in sample_times(&geom, 60) {
            assert!(close(&sys.hamiltonian, &h, t, sys.basis()) < 1e-11, "H at {t}");
            assert!(close(&sys.channel("L1").unwrap().op, &l1, t, sys.basis()) < 1e-11, "L1 at {t}");
            assert!(close(&sys.channel("L2").unwrap().op, &l2, t, sys.basis()) < 1e-11, "L2 at {t}");
        }
    }

    #[test]
    fn hamiltonians_are_hermitian_at_many_times() {
        let geom = geometry();
        let params = AtomParams::new(1.0, 1.3).unwrap();
        let v = (geom.v1(), geom.v2());
        let systems = vec![
            build_mz_delay(&geom, 3).unwrap(),
            build_ramsey_schrodinger(&geom, params, 1, 2).unwrap(),
            build_ramsey_atom(&geom, params, 2, 3).unwrap(),
            build_classical_ramsey(params, 9.0, &v.0, &v.1).unwrap(),
            build_output_analysis(&geom, params, 1, 2).unwrap(),
            ipicture::transform_output_analysis(&build_output_analysis(&geom, params, 1, 2).unwrap()).unwrap(),
        ];
        let times = sample_times(&geom, 1000);
        for sys in &systems {
            for &t in &times {
                let defect = sys.hermiticity_defect(t).unwrap();
                assert!(defect <= 1e-12, "{}: defect {defect} at t = {t}", sys.metadata.scenario);
            }
        }
    }
}
