//! Generalized cluster expansion for quantum Gibbs states on graphs.
//!
//! Given a local Hamiltonian at inverse temperature `β`, the crate expands the
//! effective Hamiltonian `-β⁻¹ log tr_{L^c} e^{-βH}` of a region `L`, the log
//! partition function and the conditional mutual information `I(A:C|B)` as sums of
//! cluster derivatives, and reports rigorous truncation certificates next to an
//! exact-diagonalization reference.

pub mod bounds;
pub mod cluster;
pub mod derivative;
pub mod ed;
pub mod ensembles;
pub mod error;
pub mod expansion;
pub mod operator;
pub mod spin_model;
pub mod verify;

pub use cluster::Cluster;
pub use derivative::{DerivativeMethod, DerivativeOptions};
pub use error::{Error, Result};
pub use operator::SupportedOperator;
pub use spin_model::{Hamiltonian, InteractionClass, SpinGraph};
