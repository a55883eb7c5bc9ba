//! Simulation of quantum light pulses travelling through networks with time
//! delays. Sources, delay lines and pickups are modelled as virtual cavities
//! with time-dependent couplings; the resulting cascaded Lindblad master
//! equations are integrated directly.
//!
//! Units: times in γ⁻¹, rates in γ, with γ = 1 unless a scenario overrides it.

pub mod cascade;
pub mod error;
pub mod experiments;
pub mod ipicture;
pub mod mesolve;
pub mod oracle;
pub mod pulses;
pub mod qcore;
pub mod system;

pub use error::{Error, Result};
