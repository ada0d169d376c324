//! Simulation of quantized single-particle Thouless pumping in an auxiliary
//! chain weakly coupled to a Rice-Mele chain held at finite temperature.
//!
//! The crate provides three pumping channels:
//!
//! * [`single`]: one particle in a given band structure (optionally the
//!   mean-field Hamiltonian of the thermal chain),
//! * [`full`]: the exact reduced dynamics of the auxiliary particle including
//!   its entanglement with the thermal chain, evaluated momentum by momentum,
//! * [`oracle`]: a brute-force reference on tiny lattices for checking [`full`].
//!
//! Topological invariants (Zak phase, plaquette Chern number) live in
//! [`spectral`]; thermal two-point functions and Fock-space states in
//! [`thermal`] and [`fock`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolve;
pub mod fock;
pub mod full;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod single;
pub mod spectral;
pub mod thermal;

pub use nalgebra;
pub use nalgebra::Complex;

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = nalgebra::DMatrix<C64>;
pub type CVector = nalgebra::DVector<C64>;

pub use error::{Error, ErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
