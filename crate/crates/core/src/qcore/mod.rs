//! Operator algebra over composite truncated Fock/qubit spaces and density
//! matrix utilities.

pub mod layout;
pub mod operator;
pub mod state;
pub mod term;

pub use layout::{Basis, SpaceLayout, Subsystem};
pub use operator::{annihilation, creation, embed, local_identity, mode_superposition, number, sigma_minus, Operator};
pub use state::{hermitian_min_eigenvalue, prepare_binomial_split, prepare_fock, DensityMatrix};
pub use term::TensorTerm;
