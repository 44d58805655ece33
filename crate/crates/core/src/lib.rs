//! Variational ground-state search for a two-qubit molecular Hamiltonian
//! encoded in a single photon's path and polarization (a ququart), with
//! Pauli noise, readout-style error mitigation and derivative-free
//! optimizers.

pub mod ansatz;
pub mod driver;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod optim;
pub mod qem;
pub mod qpu;

pub use error::{Error, Result};
