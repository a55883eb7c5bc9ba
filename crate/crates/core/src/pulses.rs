//! Pulse envelopes, cumulative energies and virtual-cavity coupling schedules.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Intervals used to tabulate the cumulative energy over a pulse support.
const TABLE_INTERVALS: usize = 4000;

/// Half-width of the Gaussian support in units of `t_w`.
pub const GAUSSIAN_HALF_SPAN: f64 = 5.0;

/// Width that gives a π/2 rotation of a two-level system driven by a classical
/// field with mean photon number `n`.
pub fn ramsey_width(gamma: f64, n: f64) -> f64 {
    PI.powf(1.5) / (8.0 * gamma * n)
}

#[derive(Clone)]
enum Envelope {
    Gaussian { t_p: f64, t_w: f64 },
    RisingExponential { t_end: f64, rate: f64 },
    Custom(Arc<dyn Fn(f64) -> C64 + Send + Sync>),
}

impl Envelope {
    fn raw(&self, t: f64) -> C64 {
        match self {
            Envelope::Gaussian { t_p, t_w } => {
                let x = (t - t_p) / t_w;
                C64::new((-0.5 * x * x).exp() / (t_w * PI.sqrt()).sqrt(), 0.0)
            }
            Envelope::RisingExponential { t_end, rate } => C64::new(rate.sqrt() * (0.5 * rate * (t - t_end)).exp(), 0.0),
            Envelope::Custom(f) => f(t),
        }
    }
}

/// Cumulative energy of the raw envelope on a uniform grid, with the tail
/// accumulated backward so `1 − E` keeps full relative precision.
#[derive(Debug)]
struct EnergyTable {
    start: f64,
    step: f64,
    power: Vec<f64>,
    head: Vec<f64>,
    tail: Vec<f64>,
    total: f64,
    max_power: f64,
}

impl EnergyTable {
    fn build(env: &Envelope, start: f64, end: f64, intervals: usize) -> Self {
        let step = (end - start) / intervals as f64;
        let power: Vec<f64> = (0..=intervals).map(|k| env.raw(start + k as f64 * step).norm_sqr()).collect();
        let pieces: Vec<f64> = (0..intervals)
            .map(|k| {
                let mid = env.raw(start + (k as f64 + 0.5) * step).norm_sqr();
                step / 6.0 * (power[k] + 4.0 * mid + power[k + 1])
            })
            .collect();
        let mut head = vec![0.0; intervals + 1];
        for k in 0..intervals {
            head[k + 1] = head[k] + pieces[k];
        }
        let mut tail = vec![0.0; intervals + 1];
        for k in (0..intervals).rev() {
            tail[k] = tail[k + 1] + pieces[k];
        }
        let total = head[intervals];
        let max_power = power.iter().copied().fold(0.0, f64::max);
        EnergyTable { start, step, power, head, tail, total, max_power }
    }

    /// Cubic Hermite interpolation of a cumulative table whose derivative is
    /// `sign·power`.
    fn interpolate(&self, values: &[f64], sign: f64, t: f64) -> f64 {
        let n = values.len() - 1;
        let x = (t - self.start) / self.step;
        if x <= 0.0 {
            return values[0];
        }
        if x >= n as f64 {
            return values[n];
        }
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        let (h00, h10, h01, h11) =
            ((1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s), s * (1.0 - s) * (1.0 - s), s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        let d0 = sign * self.power[k] * self.step;
        let d1 = sign * self.power[k + 1] * self.step;
        h00 * values[k] + h10 * d0 + h01 * values[k + 1] + h11 * d1
    }
}

/// A pulse envelope `u(t)` with its cumulative energy. Cheap to clone and to
/// delay: delayed copies share the energy table.
#[derive(Clone)]
pub struct PulseShape {
    envelope: Envelope,
    table: Arc<EnergyTable>,
    scale: f64,
    offset: f64,
    support: (f64, f64),
}

impl fmt::Debug for PulseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PulseShape").field("support", &self.support).field("peak", &self.peak_time()).field("width", &self.width()).finish()
    }
}

impl PulseShape {
    fn from_envelope(envelope: Envelope, start: f64, end: f64, normalize: bool) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::param("support", format!("empty or non-finite window [{start}, {end}]")));
        }
        let table = EnergyTable::build(&envelope, start, end, TABLE_INTERVALS);
        let scale = if normalize && table.total > 0.0 { 1.0 / table.total.sqrt() } else { 1.0 };
        Ok(PulseShape { envelope, table: Arc::new(table), scale, offset: 0.0, support: (start, end) })
    }

    /// Gaussian `(t_w√π)^(−1/2) exp(−(t−t_p)²/2t_w²)` truncated to `t_p ± 5t_w`
    /// and renormalized.
    pub fn gaussian(t_p: f64, t_w: f64) -> Result<Self> {
        if !(t_w > 0.0 && t_w.is_finite() && t_p.is_finite()) {
            return Err(Error::param("t_w", format!("pulse width must be positive and finite, got {t_w}")));
        }
        let half = GAUSSIAN_HALF_SPAN * t_w;
        PulseShape::from_envelope(Envelope::Gaussian { t_p, t_w }, t_p - half, t_p + half, true)
    }

    /// Gaussian whose support starts at `t_start`.
    pub fn gaussian_from_start(t_start: f64, t_w: f64) -> Result<Self> {
        PulseShape::gaussian(t_start + GAUSSIAN_HALF_SPAN * t_w, t_w)
    }

    /// `√rate · exp(rate(t − t_end)/2)` on `[t_end − duration, t_end]`, renormalized.
    pub fn rising_exponential(t_end: f64, rate: f64, duration: f64) -> Result<Self> {
        if !(rate > 0.0 && duration > 0.0) {
            return Err(Error::param("rate", "rate and duration must be positive"));
        }
        PulseShape::from_envelope(Envelope::RisingExponential { t_end, rate }, t_end - duration, t_end, true)
    }

    /// Arbitrary envelope on `[start, end]`. With `normalize` the envelope is
    /// rescaled to unit energy unless it vanishes identically.
    pub fn from_fn(f: impl Fn(f64) -> C64 + Send + Sync + 'static, start: f64, end: f64, normalize: bool) -> Result<Self> {
        PulseShape::from_envelope(Envelope::Custom(Arc::new(f)), start, end, normalize)
    }

    /// Copy of the pulse shifted later by `delay`.
    pub fn delayed(&self, delay: f64) -> PulseShape {
        let mut out = self.clone();
        out.offset += delay;
        out.support = (self.support.0 + delay, self.support.1 + delay);
        out
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn peak_time(&self) -> Option<f64> {
        match self.envelope {
            Envelope::Gaussian { t_p, .. } => Some(t_p + self.offset),
            Envelope::RisingExponential { t_end, .. } => Some(t_end + self.offset),
            Envelope::Custom(_) => None,
        }
    }

    pub fn width(&self) -> Option<f64> {
        match self.envelope {
            Envelope::Gaussian { t_w, .. } => Some(t_w),
            _ => None,
        }
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.support.0 && t <= self.support.1
    }

    pub fn u(&self, t: f64) -> C64 {
        if !self.contains(t) {
            return C64::new(0.0, 0.0);
        }
        self.envelope.raw(t - self.offset) * self.scale
    }

    /// `max_t |u(t)|` over the tabulation grid.
    pub fn max_abs(&self) -> f64 {
        self.table.max_power.sqrt() * self.scale
    }

    /// Total energy `∫|u|²`; 1 for normalized pulses.
    pub fn total_energy(&self) -> f64 {
        self.table.total * self.scale * self.scale
    }

    /// `E(t) = ∫_{−∞}^t |u|²`.
    pub fn energy(&self, t: f64) -> f64 {
        let s2 = self.scale * self.scale;
        self.table.interpolate(&self.table.head, 1.0, t - self.offset) * s2
    }

    /// `∫_t^∞ |u|²`, equal to `1 − E(t)` for normalized pulses.
    pub fn tail(&self, t: f64) -> f64 {
        let s2 = self.scale * self.scale;
        self.table.interpolate(&self.table.tail, -1.0, t - self.offset) * s2
    }

    /// True when both shapes are the same envelope at the same time.
    pub fn same_as(&self, other: &PulseShape) -> bool {
        Arc::ptr_eq(&self.table, &other.table) && self.offset == other.offset && self.scale == other.scale
    }

    fn below_threshold(&self, value: C64, reg: &Regularization) -> bool {
        value.norm() < reg.threshold * self.max_abs()
    }
}

/// Floor for denominators and the relative amplitude below which couplings
/// are forced to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    pub epsilon: f64,
    pub threshold: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { epsilon: 1e-6, threshold: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingKind {
    Source,
    Absorber,
    SimultaneousOut,
    SimultaneousIn,
    Transparent,
}

#[derive(Clone, Debug)]
enum Rule {
    Source(PulseShape),
    Absorber(PulseShape),
    SimOut { v: PulseShape, u: PulseShape },
    SimIn { v: PulseShape, u: PulseShape },
    Zero,
}

/// A time-dependent cavity coupling `g(t)`.
#[derive(Clone, Debug)]
pub struct CouplingSchedule {
    rule: Rule,
    reg: Regularization,
}

/// Denominator `E_v − E_u` taken from whichever cumulative is more precise.
fn stored_fraction(v: &PulseShape, u: &PulseShape, t: f64) -> f64 {
    let ev = v.energy(t);
    if ev > 0.5 {
        u.tail(t) - v.tail(t)
    } else {
        ev - u.energy(t)
    }
}

impl CouplingSchedule {
    pub fn kind(&self) -> CouplingKind {
        match self.rule {
            Rule::Source(_) => CouplingKind::Source,
            Rule::Absorber(_) => CouplingKind::Absorber,
            Rule::SimOut { .. } => CouplingKind::SimultaneousOut,
            Rule::SimIn { .. } => CouplingKind::SimultaneousIn,
            Rule::Zero => CouplingKind::Transparent,
        }
    }

    pub fn regularization(&self) -> Regularization {
        self.reg
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.rule, Rule::Zero)
    }

    pub fn eval(&self, t: f64) -> C64 {
        let eps = self.reg.epsilon;
        match &self.rule {
            Rule::Source(u) => {
                let a = u.u(t);
                if u.below_threshold(a, &self.reg) {
                    return C64::new(0.0, 0.0);
                }
                a.conj() / u.tail(t).max(0.0).sqrt().max(eps)
            }
            Rule::Absorber(u) => {
                let a = u.u(t);
                if u.below_threshold(a, &self.reg) {
                    return C64::new(0.0, 0.0);
                }
                -a.conj() / u.energy(t).max(0.0).sqrt().max(eps)
            }
            Rule::SimOut { v, u } => {
                let a = u.u(t);
                if u.below_threshold(a, &self.reg) {
                    return C64::new(0.0, 0.0);
                }
                a.conj() / stored_fraction(v, u, t).max(0.0).sqrt().max(eps)
            }
            Rule::SimIn { v, u } => {
                let b = v.u(t);
                if v.below_threshold(b, &self.reg) {
                    return C64::new(0.0, 0.0);
                }
                -b.conj() / stored_fraction(v, u, t).max(0.0).sqrt().max(eps)
            }
            Rule::Zero => C64::new(0.0, 0.0),
        }
    }
}

/// Emitting-cavity coupling `u*(t)/√(1 − E(t))`.
pub fn g_source(u: &PulseShape, reg: Regularization) -> CouplingSchedule {
    CouplingSchedule { rule: Rule::Source(u.clone()), reg }
}

/// Absorbing-cavity coupling `−u*(t)/√E(t)`.
pub fn g_absorber(u: &PulseShape, reg: Regularization) -> CouplingSchedule {
    CouplingSchedule { rule: Rule::Absorber(u.clone()), reg }
}

/// Couplings of a cavity that absorbs `v` while emitting `u`:
/// `(u*/√(E_v − E_u), −v*/√(E_v − E_u))`. Identical shapes give a transparent
/// pair of zero schedules.
pub fn g_simultaneous(v: &PulseShape, u: &PulseShape, reg: Regularization) -> Result<(CouplingSchedule, CouplingSchedule)> {
    if v.same_as(u) {
        let zero = CouplingSchedule { rule: Rule::Zero, reg };
        return Ok((zero.clone(), zero));
    }
    let start = v.support().0.min(u.support().0);
    let end = v.support().1.max(u.support().1);
    let points = 20 * TABLE_INTERVALS;
    let tol = 1e-12;
    for k in 0..=points {
        let t = start + (end - start) * k as f64 / points as f64;
        if u.energy(t) > v.energy(t) + tol {
            return Err(Error::Causality { time: t });
        }
    }
    Ok((
        CouplingSchedule { rule: Rule::SimOut { v: v.clone(), u: u.clone() }, reg },
        CouplingSchedule { rule: Rule::SimIn { v: v.clone(), u: u.clone() }, reg },
    ))
}

/// Rotation angle `θ(t) = arcsin √E(t)` of the linear capture dynamics.
#[derive(Clone, Debug)]
pub struct ThetaSchedule {
    pulse: PulseShape,
}

pub fn theta_schedule(u: &PulseShape) -> ThetaSchedule {
    ThetaSchedule { pulse: u.clone() }
}

impl ThetaSchedule {
    pub fn pulse(&self) -> &PulseShape {
        &self.pulse
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.pulse.energy(t).max(0.0).sqrt().atan2(self.pulse.tail(t).max(0.0).sqrt())
    }

    /// `(sin θ, cos θ)`.
    pub fn sin_cos(&self, t: f64) -> (f64, f64) {
        let e = self.pulse.energy(t).max(0.0);
        let r = self.pulse.tail(t).max(0.0);
        let norm = (e + r).sqrt();
        if norm == 0.0 {
            return (0.0, 1.0);
        }
        (e.sqrt() / norm, r.sqrt() / norm)
    }

    /// `(sin 2θ, cos 2θ)` built from `E` and `1 − E` directly.
    pub fn double_angle(&self, t: f64) -> (f64, f64) {
        let e = self.pulse.energy(t).max(0.0);
        let r = self.pulse.tail(t).max(0.0);
        let total = e + r;
        if total == 0.0 {
            return (0.0, 1.0);
        }
        (2.0 * (e * r).sqrt() / total, (r - e) / total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrigKind {
    /// `u·csc 2θ`
    Csc,
    /// `u·cot 2θ`
    Cot,
}

/// `u(t)·csc 2θ(t)` or `u(t)·cot 2θ(t)` with `sin 2θ` clamped at `ε`.
#[derive(Clone, Debug)]
pub struct TrigFactor {
    theta: ThetaSchedule,
    kind: TrigKind,
    reg: Regularization,
}

pub fn regularized_trig_factor(u: &PulseShape, kind: TrigKind, reg: Regularization) -> TrigFactor {
    TrigFactor { theta: theta_schedule(u), kind, reg }
}

impl TrigFactor {
    pub fn eval(&self, t: f64) -> C64 {
        let pulse = self.theta.pulse();
        let a = pulse.u(t);
        if pulse.below_threshold(a, &self.reg) {
            return C64::new(0.0, 0.0);
        }
        let (s2, c2) = self.theta.double_angle(t);
        let s2 = s2.max(self.reg.epsilon);
        match self.kind {
            TrigKind::Csc => a / s2,
            TrigKind::Cot => a * (c2 / s2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reg() -> Regularization {
        Regularization::default()
    }

    #[test]
    fn gaussian_is_normalized_and_confined() {
        let p = PulseShape::gaussian(3.0, 0.4).unwrap();
        assert_relative_eq!(p.total_energy(), 1.0, epsilon = 1e-14);
        assert_eq!(p.u(3.0 - 2.0001).norm(), 0.0);
        assert_eq!(p.u(5.0001).norm(), 0.0);
        assert_relative_eq!(p.energy(3.0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.energy(10.0), 1.0, epsilon = 1e-14);
        assert_eq!(p.energy(0.0), 0.0);
        let mut last = 0.0;
        for k in 0..=2000 {
            let e = p.energy(0.9 + 2.2 * k as f64 / 2000.0);
            assert!(e >= last - 1e-15);
            assert_relative_eq!(e + p.tail(0.9 + 2.2 * k as f64 / 2000.0), 1.0, epsilon = 1e-12);
            last = e;
        }
    }

    #[test]
    fn energy_matches_error_function_reference() {
        // error-function reference, rescaled by the mass kept after truncation
        let t_w = 0.7;
        let p = PulseShape::gaussian(0.0, t_w).unwrap();
        let erf = |x: f64| -> f64 {
            let n = 20000;
            let h = x / n as f64;
            let f = |s: f64| (-s * s).exp();
            let mut acc = f(0.0) + f(x);
            for k in 1..n {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            acc * h / 3.0 * 2.0 / PI.sqrt()
        };
        let mass = erf(GAUSSIAN_HALF_SPAN);
        for &t in &[-2.0, -0.5, 0.1, 1.3] {
            let expect = (erf(t / t_w) + mass) / (2.0 * mass);
            assert!((p.energy(t) - expect).abs() < 1e-11, "t = {t}: {} vs {expect}", p.energy(t));
        }
    }

    #[test]
    fn ramsey_width_gives_quarter_rotation_area() {
        // pulse area of √(n/2)·v through a √(γ/2) channel, times 2 for the Rabi convention
        let n = 9.0;
        let t_w = ramsey_width(1.0, n);
        let p = PulseShape::gaussian(0.0, t_w).unwrap();
        let steps = 20000;
        let (a, b) = p.support();
        let h = (b - a) / steps as f64;
        let integral: f64 = (0..steps).map(|k| p.u(a + (k as f64 + 0.5) * h).re * h).sum();
        let area = 2.0 * (0.5f64).sqrt() * (n / 2.0).sqrt() * integral;
        assert_relative_eq!(area, PI / 2.0, epsilon = 1e-5);
    }

    #[test]
    fn source_and_absorber_at_peak() {
        let t_w = 0.3;
        let p = PulseShape::gaussian(2.0, t_w).unwrap();
        let peak = 1.0 / (t_w * PI.sqrt()).sqrt();
        // the truncated pulse is renormalized by a factor within 1e-11 of one
        assert_relative_eq!(g_source(&p, reg()).eval(2.0).re, 2f64.sqrt() * peak, max_relative = 1e-10);
        assert_relative_eq!(g_absorber(&p, reg()).eval(2.0).re, -(2f64.sqrt()) * peak, max_relative = 1e-10);
        assert_eq!(g_source(&p, reg()).eval(0.0).norm(), 0.0);
        assert!(g_absorber(&p, reg()).eval(3.6).norm() < 1e-4);
    }

    #[test]
    fn source_identity_holds_on_regular_points() {
        let p = PulseShape::gaussian(1.0, 0.2).unwrap();
        let g = g_source(&p, reg());
        for k in 0..200 {
            let t = 0.05 + 1.8 * k as f64 / 200.0;
            let lhs = g.eval(t).norm_sqr() * p.tail(t);
            assert_relative_eq!(lhs, p.u(t).norm_sqr(), max_relative = 1e-10, epsilon = 1e-300);
        }
    }

    #[test]
    fn simultaneous_reduces_to_two_stage_for_long_delay() {
        let v = PulseShape::gaussian_from_start(0.0, 0.25).unwrap();
        let span = v.support().1 - v.support().0;
        let u = v.delayed(3.0 * span);
        let (out, inn) = g_simultaneous(&v, &u, reg()).unwrap();
        let src = g_source(&u, reg());
        let abs = g_absorber(&v, reg());
        let end = u.support().1 + 0.5;
        for k in 0..=5000 {
            let t = end * k as f64 / 5000.0;
            assert!((out.eval(t) - src.eval(t)).norm() <= 1e-9 * (1.0 + src.eval(t).norm()), "t = {t}");
            assert!((inn.eval(t) - abs.eval(t)).norm() <= 1e-9 * (1.0 + abs.eval(t).norm()), "t = {t}");
        }
    }

    #[test]
    fn simultaneous_rejects_acausal_order_and_passes_zero_delay() {
        let v = PulseShape::gaussian_from_start(1.0, 0.2).unwrap();
        let early = v.delayed(-0.3);
        match g_simultaneous(&v, &early, reg()) {
            Err(Error::Causality { time }) => assert!(time >= early.support().0 && time < v.support().1),
            other => panic!("expected causality error, got {other:?}"),
        }
        let (out, inn) = g_simultaneous(&v, &v, reg()).unwrap();
        assert_eq!(out.kind(), CouplingKind::Transparent);
        assert!(out.is_zero() && inn.is_zero());
    }

    #[test]
    fn theta_landmarks() {
        let p = PulseShape::gaussian(0.0, 1.0).unwrap();
        let th = theta_schedule(&p);
        assert_eq!(th.theta(-6.0), 0.0);
        assert_relative_eq!(th.theta(0.0), PI / 4.0, epsilon = 1e-12);
        assert_relative_eq!(th.theta(6.0), PI / 2.0, epsilon = 1e-15);
        let mut last = 0.0;
        for k in 0..=1000 {
            let t = -5.0 + 10.0 * k as f64 / 1000.0;
            let theta = th.theta(t);
            assert!(theta >= last && theta <= PI / 2.0);
            assert_relative_eq!(theta.sin().powi(2), p.energy(t), epsilon = 1e-12);
            last = theta;
        }
    }

    #[test]
    fn trig_factors() {
        let t_w = 0.5;
        let p = PulseShape::gaussian(0.0, t_w).unwrap();
        let csc = regularized_trig_factor(&p, TrigKind::Csc, reg());
        let cot = regularized_trig_factor(&p, TrigKind::Cot, reg());
        assert_relative_eq!(csc.eval(0.0).re, p.u(0.0).re, max_relative = 1e-10);
        assert!(cot.eval(0.0).norm() < 1e-10);
        assert_eq!(csc.eval(-3.0).norm(), 0.0);
        // sweep on the default integrator grid t_w/200 across the full support
        let (a, b) = p.support();
        let steps = ((b - a) / (t_w / 200.0)).round() as usize;
        let worst = (0..=steps).map(|k| csc.eval(a + (b - a) * k as f64 / steps as f64).norm()).fold(0.0, f64::max);
        assert!(worst < 10.0 * p.max_abs(), "max |u csc 2θ| = {worst}");
    }

    #[test]
    fn theta_converges_under_grid_refinement() {
        // the same pulse tabulated on a coarser grid through a custom envelope
        let t_w = 0.4;
        let fine = PulseShape::gaussian(0.0, t_w).unwrap();
        let coarse_env = move |t: f64| C64::new((-(t * t) / (2.0 * t_w * t_w)).exp(), 0.0);
        let coarse =
            PulseShape::from_envelope(Envelope::Custom(Arc::new(coarse_env)), -GAUSSIAN_HALF_SPAN * t_w, GAUSSIAN_HALF_SPAN * t_w, true)
                .unwrap();
        let half = EnergyTable::build(&coarse.envelope, coarse.support.0, coarse.support.1, TABLE_INTERVALS / 2);
        let ft = theta_schedule(&fine);
        for k in 0..100 {
            let t = -1.9 + 3.8 * k as f64 / 100.0;
            let e_half = half.interpolate(&half.head, 1.0, t) / half.total;
            assert!((ft.theta(t) - e_half.sqrt().asin()).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn energy_plus_tail_is_one(t_p in -3.0..3.0f64, t_w in 0.05..2.0f64, s in 0.0..1.0f64) {
            let p = PulseShape::gaussian(t_p, t_w).unwrap();
            let (a, b) = p.support();
            let t = a + s * (b - a);
            prop_assert!((p.energy(t) + p.tail(t) - 1.0).abs() < 1e-12);
            prop_assert!(p.energy(t) >= 0.0 && p.tail(t) >= 0.0);
        }

        #[test]
        fn delayed_pulse_is_exact_shift(tau in 0.0..5.0f64, s in 0.0..1.0f64) {
            let p = PulseShape::gaussian_from_start(0.0, 0.3).unwrap();
            let q = p.delayed(tau);
            let t = 3.0 * s;
            prop_assert!((q.u(t + tau) - p.u(t)).norm() < 1e-12);
            prop_assert!((q.energy(t + tau) - p.energy(t)).abs() < 1e-12);
        }
    }
}
