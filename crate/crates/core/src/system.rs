//! Time-dependent operators and the systems handed to the integrator.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::cascade::{AtomParams, DelayGeometry};
use crate::error::{Error, Result};
use crate::pulses::PulseShape;
use crate::qcore::{Basis, Operator, SpaceLayout, TensorTerm};

/// Scalar time dependence of an operator term.
#[derive(Clone)]
pub enum Coefficient {
    Const(C64),
    Fn(Arc<dyn Fn(f64) -> C64 + Send + Sync>),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "Const({c})"),
            Coefficient::Fn(_) => write!(f, "Fn(..)"),
        }
    }
}

impl Coefficient {
    pub fn constant(c: C64) -> Self {
        Coefficient::Const(c)
    }

    pub fn real(x: f64) -> Self {
        Coefficient::Const(C64::new(x, 0.0))
    }

    pub fn from_fn(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Coefficient::Fn(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Fn(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Const(_))
    }

    pub fn conj(&self) -> Self {
        match self {
            Coefficient::Const(c) => Coefficient::Const(c.conj()),
            Coefficient::Fn(f) => {
                let f = f.clone();
                Coefficient::from_fn(move |t| f(t).conj())
            }
        }
    }

    pub fn mul(&self, other: &Coefficient) -> Self {
        match (self, other) {
            (Coefficient::Const(a), Coefficient::Const(b)) => Coefficient::Const(a * b),
            (Coefficient::Const(a), Coefficient::Fn(f)) | (Coefficient::Fn(f), Coefficient::Const(a)) => {
                let (a, f) = (*a, f.clone());
                Coefficient::from_fn(move |t| a * f(t))
            }
            (Coefficient::Fn(f), Coefficient::Fn(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Coefficient::from_fn(move |t| f(t) * g(t))
            }
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.mul(&Coefficient::Const(c))
    }
}

/// `Σ_k c_k(t)·T_k` with tensor-product terms `T_k`.
#[derive(Clone, Debug, Default)]
pub struct TimeOp {
    terms: Vec<(Coefficient, TensorTerm)>,
}

impl TimeOp {
    pub fn zero() -> Self {
        TimeOp { terms: Vec::new() }
    }

    pub fn term(c: Coefficient, t: TensorTerm) -> Self {
        TimeOp { terms: vec![(c, t)] }
    }

    pub fn constant(t: TensorTerm) -> Self {
        TimeOp::term(Coefficient::real(1.0), t)
    }

    pub fn terms(&self) -> &[(Coefficient, TensorTerm)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &TimeOp) -> TimeOp {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TimeOp { terms }
    }

    pub fn sub(&self, other: &TimeOp) -> TimeOp {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> TimeOp {
        TimeOp { terms: self.terms.iter().map(|(k, t)| (k.scale(c), t.clone())).collect() }
    }

    pub fn scale_by(&self, c: &Coefficient) -> TimeOp {
        TimeOp { terms: self.terms.iter().map(|(k, t)| (k.mul(c), t.clone())).collect() }
    }

    pub fn adjoint(&self) -> TimeOp {
        TimeOp { terms: self.terms.iter().map(|(k, t)| (k.conj(), t.adjoint())).collect() }
    }

    /// Product expanded term by term.
    pub fn mul(&self, other: &TimeOp) -> Result<TimeOp> {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, s) in &self.terms {
            for (b, o) in &other.terms {
                let prod = s.mul(o)?;
                if !prod.vanishes() {
                    terms.push((a.mul(b), prod));
                }
            }
        }
        Ok(TimeOp { terms })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().flat_map(|(_, t)| t.factors().map(|(l, _)| l))
    }

    /// Snapshot `Σ_k c_k(t)·T_k` on `basis`.
    pub fn eval(&self, t: f64, basis: &Arc<Basis>) -> Result<Operator> {
        let mut triplets = Vec::new();
        for (c, term) in &self.terms {
            let value = c.eval(t);
            if value == C64::new(0.0, 0.0) {
                continue;
            }
            triplets.extend(term.materialize(basis)?.triplets().map(|(r, col, v)| (r, col, v * value)));
        }
        Operator::from_triplets(basis.clone(), triplets)
    }
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub name: String,
    pub op: TimeOp,
}

impl Channel {
    pub fn new(name: impl Into<String>, op: TimeOp) -> Self {
        Channel { name: name.into(), op }
    }
}

/// Scenario name and numerical parameters recorded alongside results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub scenario: String,
    pub params: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl Metadata {
    pub fn new(scenario: impl Into<String>) -> Self {
        Metadata { scenario: scenario.into(), ..Default::default() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }
}

/// Basis states whose population signals that a truncation window is too tight.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMonitor {
    pub states: Vec<usize>,
    pub tolerance: f64,
}

/// Which builder produced a system; the picture transformations need the
/// pulse geometry behind the operators.
#[derive(Clone, Debug, Default)]
pub enum Origin {
    #[default]
    Generic,
    MzDelay(DelayGeometry),
    ReducedMz(DelayGeometry),
    RamseyAtom {
        geometry: DelayGeometry,
        params: AtomParams,
    },
    OutputAnalysis {
        geometry: DelayGeometry,
        params: AtomParams,
        pickups: (PulseShape, PulseShape),
    },
    OutputAnalysisInteraction {
        geometry: DelayGeometry,
        params: AtomParams,
    },
}

/// A Hamiltonian and a list of output channels over a shared basis. Every
/// channel `L_i(t)` contributes the dissipator `D[L_i]`.
#[derive(Clone, Debug)]
pub struct TimeDependentSystem {
    basis: Arc<Basis>,
    pub hamiltonian: TimeOp,
    pub channels: Vec<Channel>,
    pub metadata: Metadata,
    pub monitor: Option<BoundaryMonitor>,
    pub origin: Origin,
}

impl TimeDependentSystem {
    pub fn new(subsystems: &[(&str, usize)], hamiltonian: TimeOp, channels: Vec<Channel>, metadata: Metadata) -> Result<Self> {
        let layout = Arc::new(SpaceLayout::new(subsystems)?);
        let system =
            TimeDependentSystem { basis: Basis::product(layout), hamiltonian, channels, metadata, monitor: None, origin: Origin::Generic };
        system.check_labels()?;
        Ok(system)
    }

    /// A system with no subsystems of its own; used as the neutral element of
    /// the series product.
    pub fn identity(channel: &str) -> Self {
        let layout = Arc::new(SpaceLayout::new(&[("identity", 1)]).expect("one-level layout"));
        TimeDependentSystem {
            basis: Basis::product(layout),
            hamiltonian: TimeOp::zero(),
            channels: vec![Channel::new(channel, TimeOp::zero())],
            metadata: Metadata::new("identity"),
            monitor: None,
            origin: Origin::Generic,
        }
    }

    fn check_labels(&self) -> Result<()> {
        let layout = self.layout();
        let ops = std::iter::once(&self.hamiltonian).chain(self.channels.iter().map(|c| &c.op));
        for op in ops {
            for (_, term) in op.terms() {
                for (label, m) in term.factors() {
                    let dim = layout.dim_of(label)?;
                    if m.nrows() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
                    }
                }
            }
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::param("channels", format!("duplicate channel `{}`", w[0])));
        }
        Ok(())
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        self.basis.layout()
    }

    pub fn subsystems(&self) -> Vec<(String, usize)> {
        self.layout().subsystems().iter().map(|s| (s.label.clone(), s.dim)).collect()
    }

    /// Replace the basis by a masked basis over the same layout.
    pub fn with_basis(mut self, basis: Arc<Basis>) -> Result<Self> {
        if basis.layout() != self.layout() {
            return Err(Error::LayoutMismatch("replacement basis has a different layout".into()));
        }
        self.basis = basis;
        self.monitor = None;
        Ok(self)
    }

    /// Rebuild the product basis with the subsystems in `order`.
    pub fn reordered(mut self, order: &[&str]) -> Result<Self> {
        let layout = self.layout();
        if order.len() != layout.len() {
            return Err(Error::LayoutMismatch(format!("reorder lists {} of {} subsystems", order.len(), layout.len())));
        }
        let parts = order.iter().map(|l| Ok((*l, layout.dim_of(l)?))).collect::<Result<Vec<_>>>()?;
        self.basis = Basis::product(Arc::new(SpaceLayout::new(&parts)?));
        self.monitor = None;
        Ok(self)
    }

    pub fn channel(&self, name: &str) -> Result<&Channel> {
        self.channels.iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels.iter().position(|c| c.name == name).ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn hamiltonian_at(&self, t: f64) -> Result<Operator> {
        self.hamiltonian.eval(t, &self.basis)
    }

    pub fn channel_at(&self, name: &str, t: f64) -> Result<Operator> {
        self.channel(name)?.op.eval(t, &self.basis)
    }

    /// Largest entry of `H(t) − H(t)†`.
    pub fn hermiticity_defect(&self, t: f64) -> Result<f64> {
        Ok(self.hamiltonian_at(t)?.hermiticity_defect())
    }

    /// Operator of a term on this system's basis.
    pub fn materialize(&self, term: &TensorTerm) -> Result<Operator> {
        term.materialize(&self.basis)
    }

    /// Number operator of a subsystem.
    pub fn number_term(&self, label: &str) -> Result<TensorTerm> {
        TensorTerm::number(label, self.layout().dim_of(label)?)
    }

    pub fn destroy_term(&self, label: &str) -> Result<TensorTerm> {
        TensorTerm::destroy(label, self.layout().dim_of(label)?)
    }

    /// Total excitation number `Σ` over every subsystem.
    pub fn total_number(&self) -> Result<TimeOp> {
        let mut op = TimeOp::zero();
        for s in self.layout().subsystems() {
            if s.dim > 1 {
                op = op.add(&TimeOp::constant(TensorTerm::number(&s.label, s.dim)?));
            }
        }
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::sigma_minus;

    fn lowering() -> TensorTerm {
        TensorTerm::local("atom", sigma_minus().to_dense())
    }

    #[test]
    fn coefficients_compose() {
        let f = Coefficient::from_fn(|t| C64::new(t, 1.0));
        let g = f.conj().mul(&Coefficient::real(2.0));
        assert_eq!(g.eval(3.0), C64::new(6.0, -2.0));
        assert!(Coefficient::real(2.0).mul(&Coefficient::real(3.0)).is_constant());
    }

    #[test]
    fn product_expansion_matches_operator_product() {
        let basis = Basis::product(Arc::new(SpaceLayout::new(&[("atom", 2), ("m", 3)]).unwrap()));
        let a = TimeOp::term(Coefficient::from_fn(|t| C64::new(t.cos(), t.sin())), TensorTerm::destroy("m", 3).unwrap())
            .add(&TimeOp::term(Coefficient::real(0.7), lowering()));
        let prod = a.adjoint().mul(&a).unwrap();
        let t = 0.4;
        let direct = a.eval(t, &basis).unwrap().adjoint().mul(&a.eval(t, &basis).unwrap()).unwrap();
        assert!(prod.eval(t, &basis).unwrap().max_abs_diff(&direct).unwrap() < 1e-15);
    }

    #[test]
    fn system_checks_labels_and_channels() {
        let h = TimeOp::constant(lowering());
        assert!(TimeDependentSystem::new(&[("m", 2)], h.clone(), vec![], Metadata::new("x")).is_err());
        let dup = vec![Channel::new("a", TimeOp::zero()), Channel::new("a", TimeOp::zero())];
        assert!(TimeDependentSystem::new(&[("atom", 2)], h.clone(), dup, Metadata::new("x")).is_err());
        let sys = TimeDependentSystem::new(&[("atom", 2)], h, vec![Channel::new("out", TimeOp::zero())], Metadata::new("x")).unwrap();
        assert!(matches!(sys.channel("in"), Err(Error::UnknownChannel(_))));
    }
}
