//! Interaction-picture reductions that absorb the linear cavity-to-cavity
//! transfer into the operators, and basis truncations for the reduced systems.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_complex::Complex64 as C64;

use crate::cascade::{c_mode, ATOM, MODE_B1, MODE_B2, MODE_U, PICKUP_1, PICKUP_2};
use crate::error::{Error, Result};
use crate::pulses::{g_absorber, g_source, regularized_trig_factor, theta_schedule, CouplingSchedule, TrigFactor, TrigKind};
use crate::qcore::{sigma_minus, Basis, TensorTerm};
use crate::system::{BoundaryMonitor, Channel, Coefficient, Origin, TimeDependentSystem, TimeOp};

fn conj_of(g: &CouplingSchedule) -> Coefficient {
    let g = g.clone();
    Coefficient::from_fn(move |t| g.eval(t).conj())
}

fn trig(f: &TrigFactor) -> Coefficient {
    let f = f.clone();
    Coefficient::from_fn(move |t| f.eval(t))
}

fn destroy(label: &str, dim: usize) -> Result<TimeOp> {
    Ok(TimeOp::constant(TensorTerm::destroy(label, dim)?))
}

/// Drop `b̂₁` and the reflected channels of a delayed interferometer and take
/// the capture rotation at its long-time limit. The result lives on
/// `[mode_u, mode_b2]` with `H = 0` and channels `t1 = g_v1*·ĉ₊`,
/// `t2 = g_v2*·ĉ₋`.
pub fn reduce_mz(system: &TimeDependentSystem) -> Result<TimeDependentSystem> {
    let Origin::MzDelay(geometry) = &system.origin else {
        return Err(Error::Unsupported("reduce_mz expects a system built by build_mz_delay".into()));
    };
    let dim = system.layout().dim_of(MODE_U)?;
    let reg = geometry.reg;
    let t1 = c_mode(dim, 1.0)?.scale_by(&conj_of(&g_source(&geometry.v1(), reg)));
    let t2 = c_mode(dim, -1.0)?.scale_by(&conj_of(&g_source(&geometry.v2(), reg)));
    let mut out = TimeDependentSystem::new(
        &[(MODE_U, dim), (MODE_B2, dim)],
        TimeOp::zero(),
        vec![Channel::new("t1", t1), Channel::new("t2", t2)],
        system.metadata.clone(),
    )?;
    out.metadata.scenario = "mz-delay-reduced".into();
    out.origin = Origin::ReducedMz(geometry.clone());
    Ok(out)
}

/// The delayed interferometer in the interaction picture of its capture
/// Hamiltonian, without the long-time substitution: `H_I = 0` on
/// `[mode_u, mode_b1, mode_b2]` with the rotated transmission channels and,
/// optionally, the reflected ones.
pub fn mz_interaction_picture(system: &TimeDependentSystem, keep_reflected: bool) -> Result<TimeDependentSystem> {
    let Origin::MzDelay(geometry) = &system.origin else {
        return Err(Error::Unsupported("mz_interaction_picture expects a system built by build_mz_delay".into()));
    };
    let dim = system.layout().dim_of(MODE_U)?;
    let reg = geometry.reg;
    let u = &geometry.pulse;
    let (au, b1, b2) = (destroy(MODE_U, dim)?, destroy(MODE_B1, dim)?, destroy(MODE_B2, dim)?);
    let th = theta_schedule(u);
    let (th_s, th_c) = (th.clone(), th);
    let sin = Coefficient::from_fn(move |t| C64::new(th_s.sin_cos(t).0, 0.0));
    let cos = Coefficient::from_fn(move |t| C64::new(th_c.sin_cos(t).1, 0.0));
    let rotated = b1.scale_by(&cos).add(&au.scale_by(&sin));
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let mut channels = Vec::new();
    if keep_reflected {
        let csc = trig(&regularized_trig_factor(u, TrigKind::Csc, reg));
        let head = b1.scale_by(&csc).scale(C64::new(-2.0, 0.0));
        let tail = b2.scale_by(&conj_of(&g_absorber(u, reg)));
        channels.push(Channel::new("r1", head.add(&tail).scale(s)));
        channels.push(Channel::new("r2", head.sub(&tail).scale(s)));
    }
    let t1 = rotated.add(&b2).scale_by(&conj_of(&g_source(&geometry.v1(), reg))).scale(s);
    let t2 = rotated.sub(&b2).scale_by(&conj_of(&g_source(&geometry.v2(), reg))).scale(s);
    channels.push(Channel::new("t1", t1));
    channels.push(Channel::new("t2", t2));
    let mut out =
        TimeDependentSystem::new(&[(MODE_U, dim), (MODE_B1, dim), (MODE_B2, dim)], TimeOp::zero(), channels, system.metadata.clone())?;
    out.metadata.scenario = "mz-delay-interaction".into();
    Ok(out)
}

/// Interaction picture of the output-analysis system with respect to the
/// cavity-to-cavity transfer `ĉᵢ → d̂ᵢ`:
///
/// `H_I = Δσ₊σ₋ + i√(γ/2) Σᵢ [vᵢ*(ĉᵢ† + cot 2θᵢ d̂ᵢ†)σ₋ − h.c.]`,
/// `L₁ = −√2 Σᵢ vᵢ csc 2θᵢ d̂ᵢ + √γ σ₋`, `L₂ = √2 (v₁ csc 2θ₁ d̂₁ − v₂ csc 2θ₂ d̂₂)`.
pub fn transform_output_analysis(system: &TimeDependentSystem) -> Result<TimeDependentSystem> {
    let Origin::OutputAnalysis { geometry, params, pickups } = &system.origin else {
        return Err(Error::Unsupported("transform_output_analysis expects a system built by build_output_analysis".into()));
    };
    let (v1, v2) = (geometry.v1(), geometry.v2());
    if !pickups.0.same_as(&v1) || !pickups.1.same_as(&v2) {
        return Err(Error::Unsupported("the interaction picture is derived only for pickups matched to the released pulses".into()));
    }
    let layout = system.layout().clone();
    let dim = layout.dim_of(MODE_U)?;
    let reg = geometry.reg;
    let sm = TimeOp::constant(TensorTerm::local(ATOM, sigma_minus().to_dense()));
    let sp = sm.adjoint();
    let mut h = TimeOp::term(
        Coefficient::real(params.delta),
        TensorTerm::local(ATOM, sigma_minus().to_dense().adjoint() * sigma_minus().to_dense()),
    );
    let root = (params.gamma / 2.0).sqrt();
    let mut csc_terms = Vec::new();
    for (k, (v, label)) in [(&v1, PICKUP_1), (&v2, PICKUP_2)].into_iter().enumerate() {
        let c = c_mode(dim, if k == 0 { 1.0 } else { -1.0 })?;
        let d = destroy(label, layout.dim_of(label)?)?;
        let vv = v.clone();
        let v_conj = Coefficient::from_fn(move |t| vv.u(t).conj());
        let cot = trig(&regularized_trig_factor(v, TrigKind::Cot, reg)).conj();
        let x = c.adjoint().scale_by(&v_conj).add(&d.adjoint().scale_by(&cot)).mul(&sm)?;
        h = h.add(&x.sub(&x.adjoint()).scale(C64::new(0.0, root)));
        csc_terms.push(d.scale_by(&trig(&regularized_trig_factor(v, TrigKind::Csc, reg))));
    }
    let _ = sp;
    let l1 = csc_terms[0].add(&csc_terms[1]).scale(C64::new(-SQRT_2, 0.0)).add(&sm.scale(C64::new(params.gamma.sqrt(), 0.0)));
    let l2 = csc_terms[0].sub(&csc_terms[1]).scale(C64::new(SQRT_2, 0.0));
    let parts: Vec<(String, usize)> = system.subsystems();
    let parts: Vec<(&str, usize)> = parts.iter().map(|(l, d)| (l.as_str(), *d)).collect();
    let mut out = TimeDependentSystem::new(&parts, h, vec![Channel::new("L1", l1), Channel::new("L2", l2)], system.metadata.clone())?;
    out.metadata.scenario = "output-analysis-interaction".into();
    out.origin = Origin::OutputAnalysisInteraction { geometry: geometry.clone(), params: *params };
    out.with_basis(system.basis().clone())
}

fn total(occ: &[usize]) -> usize {
    occ.iter().sum()
}

/// Restrict to states with at most `n` excitations in total. Exact for systems
/// whose Hamiltonian conserves the excitation number and whose channels each
/// remove one excitation, starting from `n` excitations.
pub fn excitation_cap(system: &TimeDependentSystem, n: usize) -> Result<TimeDependentSystem> {
    let basis = Basis::restricted(system.layout().clone(), |o| total(o) <= n)?;
    system.clone().with_basis(basis)
}

/// Keep only Fock states near the initial photon number: at most `n`
/// excitations, at least `n − window` photons in the source mode and at most
/// `window` in every other mode. Population on the outermost retained states
/// is reported by the integrator through the boundary monitor.
pub fn window_truncate(system: &TimeDependentSystem, n: usize, window: usize) -> Result<TimeDependentSystem> {
    window_truncate_with_tolerance(system, n, window, 1e-6)
}

pub fn window_truncate_with_tolerance(
    system: &TimeDependentSystem,
    n: usize,
    window: usize,
    tolerance: f64,
) -> Result<TimeDependentSystem> {
    if window < 2 {
        return Err(Error::param("window", format!("photon-number window must be at least 2, got {window}")));
    }
    let layout = system.layout().clone();
    let pu = layout.position(MODE_U)?;
    let atom = layout.position(ATOM).ok();
    let floor = n.saturating_sub(window);
    let is_mode = |k: usize| k != pu && Some(k) != atom;
    let keep = |o: &[usize]| total(o) <= n && o[pu] >= floor && o.iter().enumerate().all(|(k, &x)| !is_mode(k) || x <= window);
    let basis = Basis::restricted(layout.clone(), keep)?;
    let tight = window < n;
    let states = (0..basis.dim())
        .filter(|&i| {
            let o = basis.occupations(i);
            tight && (o[pu] == floor || o.iter().enumerate().any(|(k, &x)| is_mode(k) && x == window))
        })
        .collect();
    let mut out = system.clone().with_basis(basis)?;
    out.monitor = Some(BoundaryMonitor { states, tolerance });
    out.metadata = out.metadata.with("window", window as f64);
    Ok(out)
}
