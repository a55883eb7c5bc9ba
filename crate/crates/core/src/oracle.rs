//! Time-bin collision model in the single-excitation sector.
//!
//! The field is cut into bins of width δt; the atom meets one bin per channel
//! at a time through an exact two-level rotation. A delay is a shift of the bin
//! vector, which makes this an independent check on the virtual-cavity method.

use log::warn;
use num_complex::Complex64 as C64;

use crate::cascade::AtomParams;
use crate::error::{Error, Result};
use crate::pulses::PulseShape;

/// Smallest number of bins accepted by [`discretize`].
pub const MIN_BINS: usize = 50;

/// Largest `γ·δt` of a single collision; coarser bins are subdivided.
pub const MAX_COLLISION_STRENGTH: f64 = 5e-3;

/// Single-photon amplitudes on a uniform grid of bins. Bin `k` covers
/// `[start + kδt, start + (k+1)δt)` and holds `ψ_k`, with `Σ|ψ_k|²` the photon
/// probability.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeBinField {
    start: f64,
    dt: f64,
    amplitudes: Vec<C64>,
}

impl TimeBinField {
    pub fn new(start: f64, dt: f64, amplitudes: Vec<C64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && start.is_finite()) {
            return Err(Error::param("dt", format!("bin width must be positive, got {dt}")));
        }
        Ok(TimeBinField { start, dt, amplitudes })
    }

    pub fn vacuum(start: f64, dt: f64, bins: usize) -> Result<Self> {
        TimeBinField::new(start, dt, vec![C64::new(0.0, 0.0); bins])
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + self.len() as f64 * self.dt
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.start + (k as f64 + 0.5) * self.dt
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Photon flux `|ψ_k|²/δt` at the bin midpoints.
    pub fn flux(&self) -> Vec<(f64, f64)> {
        self.amplitudes.iter().enumerate().map(|(k, a)| (self.midpoint(k), a.norm_sqr() / self.dt)).collect()
    }

    /// Envelope `ψ/√δt` interpolated linearly between bin midpoints; zero
    /// outside the grid.
    pub fn envelope(&self, t: f64) -> C64 {
        let x = (t - self.start) / self.dt - 0.5;
        if self.is_empty() || t < self.start || t > self.end() {
            return C64::new(0.0, 0.0);
        }
        let last = self.len() - 1;
        let (k, frac) = if x <= 0.0 {
            (0, 0.0)
        } else if x >= last as f64 {
            (last, 0.0)
        } else {
            (x.floor() as usize, x - x.floor())
        };
        let a = self.amplitudes[k];
        let b = self.amplitudes[(k + 1).min(last)];
        (a * (1.0 - frac) + b * frac) / self.dt.sqrt()
    }

    /// Append `bins` vacuum bins so that later dynamics fit on the grid.
    pub fn padded(&self, bins: usize) -> TimeBinField {
        let mut out = self.clone();
        out.amplitudes.extend(std::iter::repeat_n(C64::new(0.0, 0.0), bins));
        out
    }

    fn same_grid(&self, other: &TimeBinField) -> bool {
        self.start == other.start && self.dt == other.dt && self.len() == other.len()
    }
}

/// Sample `u` at the midpoints of `n` bins spanning its support, scaled by
/// `√δt` and renormalized to unit norm. A vanishing pulse gives the zero vector.
pub fn discretize(u: &PulseShape, n: usize) -> Result<TimeBinField> {
    let (start, end) = u.support();
    if n < MIN_BINS {
        return Err(Error::param("bins", format!("at least {MIN_BINS} bins are needed to resolve the support, got {n}")));
    }
    discretize_on(u, start, (end - start) / n as f64, n)
}

/// Sample `u` on an explicit grid of `n` bins of width `dt` from `start`,
/// normalized to the probability the grid captures.
pub fn discretize_on(u: &PulseShape, start: f64, dt: f64, n: usize) -> Result<TimeBinField> {
    let mut field = TimeBinField::vacuum(start, dt, n)?;
    for k in 0..n {
        field.amplitudes[k] = u.u(field.midpoint(k)) * dt.sqrt();
    }
    let norm = field.norm_sqr().sqrt();
    if norm > 0.0 {
        let (s, e) = u.support();
        let captured = u.energy(field.end().min(e)) - u.energy(field.start.max(s));
        let target = if field.start <= s && field.end() >= e { u.total_energy() } else { captured.max(0.0) };
        let scale = target.sqrt() / norm;
        field.amplitudes.iter_mut().for_each(|a| *a *= scale);
    }
    Ok(field)
}

/// Delay by `shift` bins on the same grid. Vacuum enters at the front and
/// amplitudes pushed past the last bin are lost.
pub fn delay_bins(field: &TimeBinField, shift: usize) -> TimeBinField {
    let n = field.len();
    let mut out = TimeBinField { amplitudes: vec![C64::new(0.0, 0.0); n], ..field.clone() };
    if shift >= n {
        if field.norm_sqr() > 0.0 {
            warn!("delay of {shift} bins exceeds the {n}-bin horizon; the field leaves the grid");
        }
        return out;
    }
    out.amplitudes[shift..].copy_from_slice(&field.amplitudes[..n - shift]);
    out
}

/// Outcome of a collision-model run.
#[derive(Clone, Debug)]
pub struct Scattering {
    /// Bin edges `start + kδt`, `k = 0..=N`.
    pub times: Vec<f64>,
    /// Excited-state probability at `times`.
    pub excited: Vec<f64>,
    /// Outgoing field of every input channel, on the collision grid (each
    /// input bin split into equal sub-bins when it is too coarse).
    pub outputs: Vec<TimeBinField>,
    /// Probability emitted into decay channels not listed as inputs.
    pub loss: f64,
    /// Final excited-state amplitude.
    pub atom: C64,
}

impl Scattering {
    /// Excited-state probability interpolated linearly between bin edges.
    pub fn excited_at(&self, t: f64) -> f64 {
        let (first, last) = (self.times[0], *self.times.last().unwrap_or(&self.times[0]));
        if t <= first {
            return self.excited[0];
        }
        if t >= last {
            return *self.excited.last().unwrap_or(&0.0);
        }
        let dt = (last - first) / (self.times.len() - 1) as f64;
        let x = (t - first) / dt;
        let k = (x.floor() as usize).min(self.times.len() - 2);
        let f = x - k as f64;
        self.excited[k] * (1.0 - f) + self.excited[k + 1] * f
    }

    /// `Σ|ψ|²` over outputs, atom and loss register.
    pub fn total_probability(&self) -> f64 {
        self.outputs.iter().map(TimeBinField::norm_sqr).sum::<f64>() + self.atom.norm_sqr() + self.loss
    }
}

/// Scatter a single excitation spread over several input channels off a
/// two-level atom in its ground state. Each input `(field, γ_c)` couples with
/// rate `γ_c`; whatever part of `params.gamma` is not claimed by the inputs
/// decays into a loss register.
pub fn scatter_on_atom(inputs: &[(TimeBinField, f64)], params: AtomParams) -> Result<Scattering> {
    let Some((first, _)) = inputs.first() else {
        return Err(Error::param("inputs", "at least one input channel is required"));
    };
    if inputs.iter().any(|(f, _)| !f.same_grid(first)) {
        return Err(Error::param("inputs", "input fields must share one bin grid"));
    }
    let claimed: f64 = inputs.iter().map(|(_, g)| *g).sum();
    if inputs.iter().any(|(_, g)| !(*g >= 0.0)) || claimed > params.gamma * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::param("gamma", format!("channel rates {claimed} exceed the atomic decay rate {}", params.gamma)));
    }
    let norm: f64 = inputs.iter().map(|(f, _)| f.norm_sqr()).sum();
    if norm > 1.0 + 1e-9 {
        return Err(Error::ExcitationSector(format!("inputs carry {norm} excitations; the collision model holds at most one")));
    }
    let loss_rate = (params.gamma - claimed).max(0.0);
    let dt = first.dt;
    let sub = ((params.gamma * dt) / MAX_COLLISION_STRENGTH).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let weights: Vec<f64> = inputs.iter().map(|(_, g)| if claimed > 0.0 { (g / claimed).sqrt() } else { 0.0 }).collect();
    // Angle chosen so that one collision reproduces the exact decay factor
    // `exp(−γh/2)` of the amplitude; the naive angle `√(γh)` is biased at first order.
    let c = (-0.5 * claimed * h).exp();
    let s = (1.0 - c * c).sqrt();
    let phase = C64::from_polar(1.0, -params.delta * h);
    let damp = (-0.5 * loss_rate * h).exp();
    let split = (sub as f64).sqrt().recip();

    let n = first.len();
    let mut outputs: Vec<TimeBinField> =
        inputs.iter().map(|(f, _)| TimeBinField { start: f.start, dt: h, amplitudes: vec![C64::new(0.0, 0.0); n * sub] }).collect();
    let mut times = Vec::with_capacity(n + 1);
    let mut excited = Vec::with_capacity(n + 1);
    let mut e = C64::new(0.0, 0.0);
    let mut loss = 0.0;
    times.push(first.start);
    excited.push(0.0);
    for k in 0..n {
        for j in 0..sub {
            // The slice of each incoming bin that meets the atom during one sub-step.
            let incoming: Vec<C64> = inputs.iter().map(|(f, _)| f.amplitudes[k] * split).collect();
            let joint: C64 = incoming.iter().zip(&weights).map(|(a, w)| a * w).sum();
            let e_new = e * c - joint * s;
            let joint_new = e * s + joint * c;
            for ((out, a), w) in outputs.iter_mut().zip(&incoming).zip(&weights) {
                out.amplitudes[k * sub + j] = a + (joint_new - joint) * w;
            }
            if loss_rate > 0.0 {
                loss += e_new.norm_sqr() * (1.0 - damp * damp);
            }
            e = e_new * damp * phase;
        }
        times.push(first.start + (k + 1) as f64 * dt);
        excited.push(e.norm_sqr());
    }
    Ok(Scattering { times, excited, outputs, loss, atom: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn photon(t_w: f64) -> PulseShape {
        PulseShape::gaussian(0.0, t_w).unwrap()
    }

    #[test]
    fn discretized_gaussian_is_normalized() {
        let f = discretize(&photon(1.0), 200).unwrap();
        assert!((f.norm_sqr() - 1.0).abs() < 1e-6);
        assert!(discretize(&photon(1.0), 49).is_err());
        let zero = PulseShape::from_fn(|_| C64::new(0.0, 0.0), 0.0, 1.0, true).unwrap();
        assert!(discretize(&zero, 100).unwrap().amplitudes().iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn delay_shifts_and_drops() {
        let f = discretize(&photon(1.0), 100).unwrap().padded(100);
        assert_eq!(delay_bins(&f, 0), f);
        let d = delay_bins(&f, 30);
        assert_eq!(&d.amplitudes()[30..130], &f.amplitudes()[..100]);
        assert!(d.amplitudes()[..30].iter().all(|a| a.norm() == 0.0));
        assert_eq!(delay_bins(&f, 500).norm_sqr(), 0.0);
    }

    #[test]
    fn delayed_envelope_tracks_continuous_delay() {
        let u = photon(1.0);
        let f = discretize(&u, 400).unwrap().padded(200);
        let shift = 40;
        let tau = shift as f64 * f.dt();
        let d = delay_bins(&f, shift);
        let worst = (0..600).map(|k| f.start() + k as f64 * 0.025).map(|t| (d.envelope(t) - u.u(t - tau)).norm()).fold(0.0, f64::max);
        assert!(worst < 5e-3, "worst {worst}");
    }

    #[test]
    fn no_field_leaves_atom_in_ground_state() {
        let f = TimeBinField::vacuum(0.0, 0.01, 300).unwrap();
        let res = scatter_on_atom(&[(f, 1.0)], AtomParams::new(1.0, 0.0).unwrap()).unwrap();
        assert!(res.excited.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn lossless_scattering_is_unitary() {
        let f = discretize(&photon(1.0), 200).unwrap().padded(400);
        let res = scatter_on_atom(&[(f, 1.0)], AtomParams::new(1.0, 0.7).unwrap()).unwrap();
        assert!((res.total_probability() - 1.0).abs() < 1e-10);
        assert_eq!(res.loss, 0.0);
        let lossy = scatter_on_atom(&[(discretize(&photon(1.0), 200).unwrap(), 0.5)], AtomParams::new(1.0, 0.0).unwrap()).unwrap();
        assert!((lossy.total_probability() - 1.0).abs() < 1e-10);
        assert!(lossy.loss > 0.0);
    }

    #[test]
    fn delay_commutes_with_scattering_bit_for_bit() {
        let f = discretize(&photon(0.5), 120).unwrap().padded(200);
        let params = AtomParams::new(1.0, 0.3).unwrap();
        let direct = scatter_on_atom(&[(f.clone(), 1.0)], params).unwrap();
        let shifted = scatter_on_atom(&[(delay_bins(&f, 37), 1.0)], params).unwrap();
        for k in 0..direct.excited.len() - 37 {
            assert_eq!(direct.excited[k].to_bits(), shifted.excited[k + 37].to_bits());
        }
    }

    #[test]
    fn matched_rising_exponential_excites_atom() {
        let u = PulseShape::rising_exponential(0.0, 1.0, 20.0).unwrap();
        let f = discretize(&u, 4000).unwrap().padded(200);
        let res = scatter_on_atom(&[(f, 1.0)], AtomParams::new(1.0, 0.0).unwrap()).unwrap();
        let peak = res.excited.iter().copied().fold(0.0, f64::max);
        assert!(peak >= 0.95, "peak {peak}");
    }

    #[test]
    fn rejects_two_excitations_and_mismatched_grids() {
        let f = discretize(&photon(1.0), 100).unwrap();
        let params = AtomParams::new(1.0, 0.0).unwrap();
        assert!(matches!(scatter_on_atom(&[(f.clone(), 0.5), (f.clone(), 0.5)], params), Err(Error::ExcitationSector(_))));
        assert!(scatter_on_atom(&[(f.clone(), 0.5), (f.padded(1), 0.5)], params).is_err());
    }

    #[test]
    fn refinement_converges() {
        let u = photon(1.0);
        let run = |n: usize| {
            let f = discretize(&u, n).unwrap();
            let pad = (4.0 / f.dt()).round() as usize;
            scatter_on_atom(&[(f.padded(pad), 1.0)], AtomParams::new(1.0, 0.0).unwrap()).unwrap()
        };
        let (a, b, c) = (run(100), run(200), run(400));
        let diff = |x: &Scattering, y: &Scattering| {
            (0..=80).map(|k| -5.0 + k as f64 * 0.1).map(|t| (x.excited_at(t) - y.excited_at(t)).abs()).fold(0.0, f64::max)
        };
        let (d1, d2) = (diff(&a, &b), diff(&b, &c));
        assert!(d2 < d1, "{d1} {d2}");
        assert!(d2 < 0.01);
    }
}
