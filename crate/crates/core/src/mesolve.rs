//! Time-dependent Lindblad integration in matrix form.
//!
//! `dρ/dt = −i[H(t), ρ] + Σᵢ D[Lᵢ(t)]ρ` is evaluated as `M + M†` with
//! `M = Kρ + ½ Σᵢ Lᵢ(Lᵢρ)†` and `K = −iH − ½ Σᵢ Lᵢ†Lᵢ`. When the dynamics
//! respect the total excitation number (H conserves it, every channel shifts it
//! by a fixed amount, ρ₀ has no coherence between sectors) the state is kept as
//! one dense block per sector.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qcore::{hermitian_min_eigenvalue, Basis, DensityMatrix, Operator};
use crate::system::{Coefficient, TimeDependentSystem, TimeOp};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    /// Dormand–Prince 5(4) with error control on every matrix element.
    Rk45,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// Fixed step for RK4, initial step for RK45.
    pub step: f64,
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    /// Divide ρ by its trace at every monitor point.
    pub renormalize: bool,
    /// Record observables and run the cheap checks every this many steps.
    pub monitor_every: usize,
    pub trace_tolerance: f64,
    /// Hermiticity defect above which ρ is symmetrized.
    pub symmetrize_above: f64,
    pub positivity_samples: usize,
    pub positivity_tolerance: f64,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            step,
            method: Method::Rk4,
            atol: 1e-10,
            rtol: 1e-8,
            renormalize: false,
            monitor_every: 1,
            trace_tolerance: 1e-6,
            symmetrize_above: 1e-12,
            positivity_samples: 10,
            positivity_tolerance: 1e-8,
        }
    }

    /// RK4 with `h = t_w/200`.
    pub fn for_pulse_width(width: f64) -> Self {
        IntegratorConfig::rk4(width / 200.0)
    }

    pub fn rk45(initial_step: f64, atol: f64, rtol: f64) -> Self {
        IntegratorConfig { method: Method::Rk45, atol, rtol, ..IntegratorConfig::rk4(initial_step) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::param("step", format!("must be positive, got {}", self.step)));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(Error::param("tolerance", "atol and rtol must be positive"));
        }
        if self.monitor_every == 0 {
            return Err(Error::param("monitor_every", "must be at least 1"));
        }
        if !(self.trace_tolerance > 0.0) {
            return Err(Error::param("trace_tolerance", "must be positive"));
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::rk4(1e-3)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub steps: usize,
    pub rejected_steps: usize,
    /// Number of excitation sectors the state was split into (1 = dense).
    pub sectors: usize,
    /// `|Tr ρ − 1|` at every monitor point.
    pub trace_drift: Vec<f64>,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub symmetrizations: usize,
    /// `(time, trace)` before each renormalization.
    pub renormalizations: Vec<(f64, f64)>,
    pub min_eigenvalue: f64,
    pub positivity_checks: usize,
    /// Largest population on the boundary states of a truncation window.
    pub max_boundary_population: Option<f64>,
    pub boundary_tolerance: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Track {
    pub name: String,
    pub values: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct FluxTrack {
    pub channel: String,
    /// `∫⟨L†L⟩dt` from the start, at every recorded time.
    pub cumulative: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub tracks: Vec<Track>,
    pub fluxes: Vec<FluxTrack>,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
}

impl TrajectoryResult {
    pub fn track(&self, name: &str) -> Result<&[C64]> {
        self.tracks.iter().find(|t| t.name == name).map(|t| t.values.as_slice()).ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    /// Real part of the last recorded value of an observable.
    pub fn final_value(&self, name: &str) -> Result<f64> {
        Ok(self.track(name)?.last().map_or(0.0, |v| v.re))
    }

    /// Total integrated flux through a channel.
    pub fn flux(&self, channel: &str) -> Result<f64> {
        self.fluxes
            .iter()
            .find(|f| f.channel == channel)
            .map(|f| f.cumulative.last().copied().unwrap_or(0.0))
            .ok_or_else(|| Error::UnknownChannel(channel.to_string()))
    }

    pub fn total_flux(&self) -> f64 {
        self.fluxes.iter().map(|f| f.cumulative.last().copied().unwrap_or(0.0)).sum()
    }

    /// Fails when the truncation window leaked more than its tolerance.
    pub fn check_window(&self) -> Result<()> {
        match (self.diagnostics.max_boundary_population, self.diagnostics.boundary_tolerance) {
            (Some(p), Some(tol)) if p > tol => Err(Error::WindowLeak { population: p, tolerance: tol }),
            _ => Ok(()),
        }
    }
}

/// `Tr(L ρ L†)`.
pub fn flux(rho: &DensityMatrix, l: &Operator) -> Result<f64> {
    if !rho.basis().same_as(l.basis()) {
        return Err(Error::LayoutMismatch("state and channel live on different bases".into()));
    }
    let dim = rho.dim();
    let m = rho.matrix();
    let (ptr, idx, val) = (l.indptr(), l.indices(), l.data());
    let mut total = 0.0;
    for i in 0..dim {
        for a in ptr[i]..ptr[i + 1] {
            for b in ptr[i]..ptr[i + 1] {
                total += (val[a] * m[(idx[a], idx[b])] * val[b].conj()).re;
            }
        }
    }
    Ok(total)
}

/// Partition of the basis into excitation sectors.
struct Sectors {
    members: Vec<Vec<usize>>,
    sector_of: Vec<usize>,
    local: Vec<usize>,
}

impl Sectors {
    fn single(dim: usize) -> Self {
        Sectors { members: vec![(0..dim).collect()], sector_of: vec![0; dim], local: (0..dim).collect() }
    }

    fn by_label(labels: &[usize]) -> Self {
        let distinct: BTreeMap<usize, usize> = {
            let mut keys: Vec<usize> = labels.to_vec();
            keys.sort_unstable();
            keys.dedup();
            keys.into_iter().enumerate().map(|(k, v)| (v, k)).collect()
        };
        let mut members = vec![Vec::new(); distinct.len()];
        let mut sector_of = vec![0; labels.len()];
        let mut local = vec![0; labels.len()];
        for (i, l) in labels.iter().enumerate() {
            let s = distinct[l];
            sector_of[i] = s;
            local[i] = members[s].len();
            members[s].push(i);
        }
        Sectors { members, sector_of, local }
    }

    fn len(&self) -> usize {
        self.members.len()
    }
}

#[derive(Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, data: vec![ZERO; rows * cols] }
    }

    fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    fn adjoint(&self) -> Dense {
        let mut out = Dense::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    fn trace(&self) -> C64 {
        (0..self.rows).map(|i| self.at(i, i)).sum()
    }

    fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self.at(i, j) - self.at(j, i).conj()).norm());
            }
        }
        worst
    }

    fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.at(i, j))
    }
}

/// One sector-to-sector piece of a compiled operator in CSR form; values live
/// in the owning operator's value buffer starting at `offset`.
struct Pattern {
    target: usize,
    source: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    offset: usize,
}

/// A `TimeOp` on a fixed sparsity pattern: the value buffer is rebuilt at each
/// time from constant and time-dependent contributions.
struct Compiled {
    blocks: Vec<Pattern>,
    base: Vec<C64>,
    parts: Vec<(Coefficient, Vec<(usize, C64)>)>,
    values: Vec<C64>,
}

type Triplets = Vec<(usize, usize, C64)>;

fn materialize_terms(op: &TimeOp, basis: &Arc<Basis>) -> Result<Vec<(Coefficient, Triplets)>> {
    op.terms().iter().map(|(c, term)| Ok((c.clone(), term.materialize(basis)?.triplets().collect()))).collect()
}

impl Compiled {
    fn new(terms: &[(Coefficient, Triplets)], sectors: &Sectors) -> Self {
        let mut groups: BTreeMap<(usize, usize), BTreeMap<(usize, usize), usize>> = BTreeMap::new();
        for (_, trip) in terms {
            for &(r, c, _) in trip {
                groups.entry((sectors.sector_of[r], sectors.sector_of[c])).or_default().insert((sectors.local[r], sectors.local[c]), 0);
            }
        }
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (&(target, source), entries) in groups.iter_mut() {
            let rows = sectors.members[target].len();
            let mut indptr = vec![0; rows + 1];
            let mut indices = Vec::with_capacity(entries.len());
            for (k, (&(r, c), slot)) in entries.iter_mut().enumerate() {
                indptr[r + 1] += 1;
                indices.push(c);
                *slot = offset + k;
            }
            for r in 0..rows {
                indptr[r + 1] += indptr[r];
            }
            let nnz = entries.len();
            blocks.push(Pattern { target, source, indptr, indices, offset });
            offset += nnz;
        }
        let mut base = vec![ZERO; offset];
        let mut parts = Vec::new();
        for (coef, trip) in terms {
            let slots = trip.iter().map(|&(r, c, v)| {
                let key = (sectors.sector_of[r], sectors.sector_of[c]);
                (groups[&key][&(sectors.local[r], sectors.local[c])], v)
            });
            match coef {
                Coefficient::Const(k) => {
                    for (s, v) in slots {
                        base[s] += k * v;
                    }
                }
                Coefficient::Fn(_) => parts.push((coef.clone(), slots.collect())),
            }
        }
        let values = base.clone();
        Compiled { blocks, base, parts, values }
    }

    fn update(&mut self, t: f64) {
        self.values.copy_from_slice(&self.base);
        for (coef, slots) in &self.parts {
            let k = coef.eval(t);
            if k == ZERO {
                continue;
            }
            for &(s, v) in slots {
                self.values[s] += k * v;
            }
        }
    }

    /// `out += A_block · b`.
    fn apply(&self, block: &Pattern, b: &Dense, out: &mut Dense) {
        let w = b.cols;
        let vals = &self.values[block.offset..];
        for i in 0..block.indptr.len() - 1 {
            let row = &mut out.data[i * w..(i + 1) * w];
            for k in block.indptr[i]..block.indptr[i + 1] {
                let v = vals[k];
                if v == ZERO {
                    continue;
                }
                let src = &b.data[block.indices[k] * w..(block.indices[k] + 1) * w];
                for (o, x) in row.iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
    }

    /// `Σ_{ij} A_ij b_ji` over one block.
    fn trace_product(&self, block: &Pattern, b: &Dense) -> C64 {
        let vals = &self.values[block.offset..];
        let mut total = ZERO;
        for i in 0..block.indptr.len() - 1 {
            for k in block.indptr[i]..block.indptr[i + 1] {
                total += vals[k] * b.at(block.indices[k], i);
            }
        }
        total
    }

    fn expectation(&self, rho: &[Dense]) -> C64 {
        self.blocks.iter().filter(|b| b.target == b.source).map(|b| self.trace_product(b, &rho[b.source])).sum()
    }
}

#[derive(Clone)]
struct State {
    blocks: Vec<Dense>,
    flux: Vec<f64>,
}

impl State {
    fn zeros_like(other: &State) -> State {
        State { blocks: other.blocks.iter().map(|b| Dense::zeros(b.rows, b.cols)).collect(), flux: vec![0.0; other.flux.len()] }
    }

    /// `self += a·x`.
    fn axpy(&mut self, a: f64, x: &State) {
        for (s, o) in self.blocks.iter_mut().zip(&x.blocks) {
            for (p, q) in s.data.iter_mut().zip(&o.data) {
                *p += q * a;
            }
        }
        for (p, q) in self.flux.iter_mut().zip(&x.flux) {
            *p += a * q;
        }
    }

    fn combine(base: &State, terms: &[(f64, &State)]) -> State {
        let mut out = base.clone();
        for &(a, x) in terms {
            if a != 0.0 {
                out.axpy(a, x);
            }
        }
        out
    }

    fn trace(&self) -> C64 {
        self.blocks.iter().map(Dense::trace).sum()
    }

    fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())) && self.flux.iter().all(|f| f.is_finite())
    }
}

struct Engine {
    sectors: Sectors,
    k: Compiled,
    channels: Vec<Compiled>,
}

impl Engine {
    fn rhs(&mut self, t: f64, y: &State) -> State {
        self.k.update(t);
        for l in &mut self.channels {
            l.update(t);
        }
        let mut dy = State::zeros_like(y);
        for block in &self.k.blocks {
            let rho = &y.blocks[block.source];
            let mut m = Dense::zeros(self.sectors.members[block.target].len(), rho.cols);
            self.k.apply(block, rho, &mut m);
            let out = &mut dy.blocks[block.target];
            let n = m.rows;
            for i in 0..n {
                for j in 0..n {
                    out.data[i * n + j] += m.data[i * n + j] + m.data[j * n + i].conj();
                }
            }
        }
        for (c, l) in self.channels.iter().enumerate() {
            for block in &l.blocks {
                let rho = &y.blocks[block.source];
                let mut x = Dense::zeros(self.sectors.members[block.target].len(), rho.cols);
                l.apply(block, rho, &mut x);
                let xh = x.adjoint();
                dy.flux[c] += l.trace_product(block, &xh).re;
                l.apply(block, &xh, &mut dy.blocks[block.target]);
            }
        }
        dy
    }
}

fn excitation_labels(basis: &Basis) -> Vec<usize> {
    (0..basis.dim()).map(|i| basis.occupations(i).iter().sum()).collect()
}

/// Whether the excitation-sector split is exact for these operators and state.
fn graded(labels: &[usize], k: &[(Coefficient, Triplets)], channels: &[Vec<(Coefficient, Triplets)>], rho0: &DMatrix<C64>) -> bool {
    let shift = |r: usize, c: usize| labels[r] as i64 - labels[c] as i64;
    if k.iter().any(|(_, t)| t.iter().any(|&(r, c, _)| shift(r, c) != 0)) {
        return false;
    }
    for terms in channels {
        let mut degree = None;
        for &(r, c, _) in terms.iter().flat_map(|(_, t)| t) {
            match degree {
                None => degree = Some(shift(r, c)),
                Some(d) if d != shift(r, c) => return false,
                _ => {}
            }
        }
    }
    let n = rho0.nrows();
    (0..n).all(|i| (0..n).all(|j| labels[i] == labels[j] || rho0[(i, j)] == ZERO))
}

/// Evolve `rho0` over `t_span` and record the named observables.
pub fn integrate(
    system: &TimeDependentSystem,
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    observables: &[(&str, TimeOp)],
    config: &IntegratorConfig,
) -> Result<TrajectoryResult> {
    config.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::param("t_span", format!("expected a finite, ordered interval, got ({t0}, {t1})")));
    }
    let basis = system.basis();
    if !rho0.basis().same_as(basis) {
        return Err(Error::LayoutMismatch("initial state and system live on different bases".into()));
    }

    let mut k_op = system.hamiltonian.scale(C64::new(0.0, -1.0));
    for ch in &system.channels {
        k_op = k_op.add(&ch.op.adjoint().mul(&ch.op)?.scale(C64::new(-0.5, 0.0)));
    }
    let k_terms = materialize_terms(&k_op, basis)?;
    let l_terms = system.channels.iter().map(|c| materialize_terms(&c.op, basis)).collect::<Result<Vec<_>>>()?;
    let obs_terms = observables.iter().map(|(_, o)| materialize_terms(o, basis)).collect::<Result<Vec<_>>>()?;

    let labels = excitation_labels(basis);
    let sectors =
        if graded(&labels, &k_terms, &l_terms, rho0.matrix()) { Sectors::by_label(&labels) } else { Sectors::single(basis.dim()) };
    debug!("integrating '{}' on {} states in {} sector(s)", system.metadata.scenario, basis.dim(), sectors.len());

    let mut engine =
        Engine { k: Compiled::new(&k_terms, &sectors), channels: l_terms.iter().map(|t| Compiled::new(t, &sectors)).collect(), sectors };
    let mut obs: Vec<Compiled> = obs_terms.iter().map(|t| Compiled::new(t, &engine.sectors)).collect();

    let blocks = engine
        .sectors
        .members
        .iter()
        .map(|m| {
            let n = m.len();
            let mut d = Dense::zeros(n, n);
            for (a, &i) in m.iter().enumerate() {
                for (b, &j) in m.iter().enumerate() {
                    d.data[a * n + b] = rho0.matrix()[(i, j)];
                }
            }
            d
        })
        .collect();
    let mut y = State { blocks, flux: vec![0.0; system.channels.len()] };

    let boundary: Vec<(usize, usize)> = system
        .monitor
        .as_ref()
        .map(|m| m.states.iter().map(|&i| (engine.sectors.sector_of[i], engine.sectors.local[i])).collect())
        .unwrap_or_default();

    let mut rec = Recorder {
        times: Vec::new(),
        tracks: vec![Vec::new(); observables.len()],
        fluxes: vec![Vec::new(); system.channels.len()],
        diag: Diagnostics {
            sectors: engine.sectors.len(),
            min_eigenvalue: f64::INFINITY,
            boundary_tolerance: system.monitor.as_ref().map(|m| m.tolerance),
            max_boundary_population: system.monitor.as_ref().map(|_| 0.0),
            ..Diagnostics::default()
        },
        boundary,
        config: config.clone(),
    };
    rec.observe(t0, &mut y, &mut obs)?;
    rec.check_positivity(&y);

    match config.method {
        Method::Rk4 => run_rk4(&mut engine, &mut y, (t0, t1), &mut obs, &mut rec)?,
        Method::Rk45 => run_rk45(&mut engine, &mut y, (t0, t1), &mut obs, &mut rec)?,
    }

    let dim = basis.dim();
    let mut full = DMatrix::zeros(dim, dim);
    for (m, block) in engine.sectors.members.iter().zip(&y.blocks) {
        for (a, &i) in m.iter().enumerate() {
            for (b, &j) in m.iter().enumerate() {
                full[(i, j)] = block.at(a, b);
            }
        }
    }
    let channel_names = system.channels.iter().map(|c| c.name.clone());
    Ok(TrajectoryResult {
        times: rec.times,
        tracks: observables.iter().zip(rec.tracks).map(|((n, _), values)| Track { name: n.to_string(), values }).collect(),
        fluxes: channel_names.zip(rec.fluxes).map(|(channel, cumulative)| FluxTrack { channel, cumulative }).collect(),
        final_state: DensityMatrix::from_matrix(basis.clone(), full)?,
        diagnostics: rec.diag,
    })
}

struct Recorder {
    times: Vec<f64>,
    tracks: Vec<Vec<C64>>,
    fluxes: Vec<Vec<f64>>,
    diag: Diagnostics,
    boundary: Vec<(usize, usize)>,
    config: IntegratorConfig,
}

impl Recorder {
    fn observe(&mut self, t: f64, y: &mut State, obs: &mut [Compiled]) -> Result<()> {
        let last_good = self.times.last().copied().unwrap_or(t);
        if !y.is_finite() {
            return Err(Error::Divergence { time: t, last_good });
        }
        let defect = y.blocks.iter().map(Dense::hermiticity_defect).fold(0.0, f64::max);
        self.diag.max_hermiticity_defect = self.diag.max_hermiticity_defect.max(defect);
        if defect > self.config.symmetrize_above {
            debug!("symmetrizing ρ at t = {t:.6} (defect {defect:.3e})");
            y.blocks.iter_mut().for_each(Dense::symmetrize);
            self.diag.symmetrizations += 1;
        }
        let trace = y.trace().re;
        let drift = (trace - 1.0).abs();
        self.diag.trace_drift.push(drift);
        self.diag.max_trace_drift = self.diag.max_trace_drift.max(drift);
        if drift > self.config.trace_tolerance {
            return Err(Error::Accuracy { drift, time: t, tolerance: self.config.trace_tolerance });
        }
        if self.config.renormalize && trace != 1.0 {
            info!("renormalizing ρ at t = {t:.6}: trace {trace:.12}");
            self.diag.renormalizations.push((t, trace));
            for b in &mut y.blocks {
                b.data.iter_mut().for_each(|z| *z /= trace);
            }
        }
        if let Some(worst) = self.diag.max_boundary_population.as_mut() {
            let pop: f64 = self.boundary.iter().map(|&(s, l)| y.blocks[s].at(l, l).re).sum();
            *worst = worst.max(pop);
        }
        self.times.push(t);
        for (track, o) in self.tracks.iter_mut().zip(obs.iter_mut()) {
            o.update(t);
            track.push(o.expectation(&y.blocks));
        }
        for (track, f) in self.fluxes.iter_mut().zip(&y.flux) {
            track.push(*f);
        }
        Ok(())
    }

    fn check_positivity(&mut self, y: &State) {
        let mut worst = f64::INFINITY;
        for b in &y.blocks {
            let low = hermitian_min_eigenvalue(&b.to_matrix());
            worst = if low.is_nan() { f64::NEG_INFINITY } else { worst.min(low) };
        }
        if worst < -self.config.positivity_tolerance {
            warn!("density matrix has eigenvalue {worst:.3e}");
        }
        self.diag.min_eigenvalue = self.diag.min_eigenvalue.min(worst);
        self.diag.positivity_checks += 1;
    }

    fn finish(&mut self, t: f64, y: &mut State, obs: &mut [Compiled]) -> Result<()> {
        if self.times.last() != Some(&t) {
            self.observe(t, y, obs)?;
        }
        Ok(())
    }
}

fn run_rk4(engine: &mut Engine, y: &mut State, (t0, t1): (f64, f64), obs: &mut [Compiled], rec: &mut Recorder) -> Result<()> {
    let span = t1 - t0;
    let steps = if span == 0.0 { 0 } else { ((span / rec.config.step) - 1e-9).ceil().max(1.0) as usize };
    let samples = rec.config.positivity_samples.min(steps);
    let checkpoints: Vec<usize> = (1..=samples).map(|k| (k * steps).div_ceil(samples)).collect();
    let h = if steps == 0 { 0.0 } else { span / steps as f64 };
    for step in 1..=steps {
        let t = t0 + (step - 1) as f64 * h;
        let k1 = engine.rhs(t, y);
        let k2 = engine.rhs(t + 0.5 * h, &State::combine(y, &[(0.5 * h, &k1)]));
        let k3 = engine.rhs(t + 0.5 * h, &State::combine(y, &[(0.5 * h, &k2)]));
        let k4 = engine.rhs(t + h, &State::combine(y, &[(h, &k3)]));
        y.axpy(h / 6.0, &k1);
        y.axpy(h / 3.0, &k2);
        y.axpy(h / 3.0, &k3);
        y.axpy(h / 6.0, &k4);
        rec.diag.steps += 1;
        let now = if step == steps { t1 } else { t0 + step as f64 * h };
        if step % rec.config.monitor_every == 0 || step == steps {
            rec.observe(now, y, obs)?;
        }
        if checkpoints.contains(&step) {
            rec.check_positivity(y);
        }
    }
    rec.finish(t1, y, obs)
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

fn run_rk45(engine: &mut Engine, y: &mut State, (t0, t1): (f64, f64), obs: &mut [Compiled], rec: &mut Recorder) -> Result<()> {
    let (atol, rtol) = (rec.config.atol, rec.config.rtol);
    let samples = rec.config.positivity_samples;
    let mut next_sample = 1;
    let mut t = t0;
    let mut h = rec.config.step.min(t1 - t0);
    let mut accepted = 0usize;
    let min_step = 1e-14 * (t1 - t0).abs().max(1.0);
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k: Vec<State> = Vec::with_capacity(7);
        k.push(engine.rhs(t, y));
        for s in 1..7 {
            let terms: Vec<(f64, &State)> = (0..s).map(|j| (h * DP_A[s][j], &k[j])).collect();
            let stage = State::combine(y, &terms);
            k.push(engine.rhs(t + DP_C[s] * h, &stage));
        }
        let terms: Vec<(f64, &State)> = (0..6).map(|j| (h * DP_A[6][j], &k[j])).collect();
        let next = State::combine(y, &terms);
        let err_terms: Vec<(f64, &State)> = (0..7).map(|j| (h * DP_E[j], &k[j])).collect();
        let err = State::combine(&State::zeros_like(y), &err_terms);
        let mut norm = 0.0f64;
        for ((e, a), b) in err.blocks.iter().zip(&y.blocks).zip(&next.blocks) {
            for ((ez, az), bz) in e.data.iter().zip(&a.data).zip(&b.data) {
                norm = norm.max(ez.norm() / (atol + rtol * az.norm().max(bz.norm())));
            }
        }
        for ((e, a), b) in err.flux.iter().zip(&y.flux).zip(&next.flux) {
            norm = norm.max(e.abs() / (atol + rtol * a.abs().max(b.abs())));
        }
        if !norm.is_finite() {
            return Err(Error::Divergence { time: t, last_good: t });
        }
        if norm <= 1.0 {
            t = if t1 - (t + h) < min_step { t1 } else { t + h };
            *y = next;
            accepted += 1;
            rec.diag.steps += 1;
            if accepted.is_multiple_of(rec.config.monitor_every) || t >= t1 {
                rec.observe(t, y, obs)?;
            }
            while next_sample <= samples && t >= t0 + (t1 - t0) * next_sample as f64 / samples as f64 - min_step {
                rec.check_positivity(y);
                next_sample += 1;
            }
        } else {
            rec.diag.rejected_steps += 1;
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < min_step && t < t1 {
            return Err(Error::Divergence { time: t, last_good: t });
        }
    }
    rec.finish(t1, y, obs)
}

/// One grid point of a scan.
#[derive(Debug)]
pub struct ScanRow<P, T> {
    pub index: usize,
    pub param: P,
    pub outcome: Result<T>,
}

impl<P, T> ScanRow<P, T> {
    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Run `job` at every grid point in parallel. Rows come back in grid order and
/// a failing point does not stop the others.
pub fn scan<P, T, F>(grid: &[P], job: F) -> Result<Vec<ScanRow<P, T>>>
where
    P: Clone + Sync + Send,
    T: Send,
    F: Fn(&P) -> Result<T> + Sync,
{
    if grid.is_empty() {
        return Err(Error::param("grid", "scan grid is empty"));
    }
    Ok(grid.par_iter().enumerate().map(|(index, p)| ScanRow { index, param: p.clone(), outcome: job(p) }).collect())
}

/// [`scan`] on a dedicated pool of `workers` threads.
pub fn scan_with_workers<P, T, F>(grid: &[P], workers: usize, job: F) -> Result<Vec<ScanRow<P, T>>>
where
    P: Clone + Sync + Send,
    T: Send,
    F: Fn(&P) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::param("workers", e.to_string()))?;
    pool.install(|| scan(grid, job))
}

/// Build a system and initial state per grid point and integrate each.
pub fn scan_systems<P, S, R>(
    grid: &[P],
    system: S,
    rho0: R,
    t_span: (f64, f64),
    observables: &[(&str, TimeOp)],
    config: &IntegratorConfig,
) -> Result<Vec<ScanRow<P, TrajectoryResult>>>
where
    P: Clone + Sync + Send,
    S: Fn(&P) -> Result<TimeDependentSystem> + Sync,
    R: Fn(&TimeDependentSystem) -> Result<DensityMatrix> + Sync,
{
    scan(grid, |p| {
        let sys = system(p)?;
        let rho = rho0(&sys)?;
        integrate(&sys, &rho, t_span, observables, config)
    })
}
