//! Numerics for the transverse linear stability of line solitons of the
//! two-dimensional Toda lattice.
//!
//! The crate is organised bottom-up: [`dispersion`] holds every spectral
//! scalar, [`soliton`] the background fields, [`jost`] the Jost functions,
//! [`modes`] the secular modes and their Gram matrix, [`darboux`] the
//! Darboux operators and solvers, [`evolution`] the per-mode integrators and
//! [`profile`] the asymptotic damped-wave profile. [`checks`] bundles the
//! end-to-end acceptance experiments used by the command-line tool.

pub mod checks;
pub mod darboux;
pub mod dispersion;
pub mod error;
pub mod evolution;
pub mod jost;
pub mod lattice;
pub mod modes;
pub mod profile;
pub mod soliton;

pub use dispersion::{DispersionPoint, SolitonParams};
pub use error::{Result, TodaError};
pub use lattice::{ComplexSeq, LatticeWindow};

pub type C64 = num_complex::Complex64;
