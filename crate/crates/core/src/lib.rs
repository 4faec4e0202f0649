//! Multiple Davydov D2 dynamics for a driven, dissipative, anisotropic
//! three-level Landau-Zener model.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: file formats, worker pools and the command line live in the
//! `lz3` companion crate.
//!
//! Units: hbar = 1 and all frequencies are measured in units of the z-drive
//! frequency, so configurations carry plain numbers.
//!
//! Module map:
//!
//! * [`model`]: spin-1 operators, drives and the 3x3 system Hamiltonian.
//! * [`bath`]: single phonon modes and discretised super-Ohmic baths.
//! * [`ansatz`]: the multi-D2 state and its observables.
//! * [`eom`]: variational equations of motion and their regularised solution.
//! * [`integrator`]: fixed-step RK4 propagation with norm monitoring.
//! * [`oracle`]: truncated-Fock exact propagation and energy diagrams.
//! * [`analysis`]: contour sweeps, peak finding and Rabi-cycle fitting.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod ansatz;
pub mod bath;
pub mod eom;
mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

pub use ansatz::{MultiD2State, ObservableRecord, Spin};
pub use bath::{BathModes, Mode, SpectralParams};
pub use integrator::{PropagationConfig, Solver, Trajectory};
pub use model::{DriveSpec, ModelConfig};
