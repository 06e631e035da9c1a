//! Hamiltonian Boundary Value Methods (HBVMs).
//!
//! An HBVM(k, s) is a k-stage implicit Runge–Kutta method whose Butcher
//! matrix `A = I_s P_sᵀ Ω` has rank `s`. This crate builds those tableaux from
//! the orthonormal shifted-Legendre basis, checks their structural properties
//! numerically (nonzero spectrum equal to the Gauss–Legendre one, collocation
//! filtering, W-transformation structure, A-stability), and integrates
//! Hamiltonian systems with them.

pub mod error;
pub mod integrator;
pub mod io;
pub mod legendre;
pub mod problems;
pub mod spectral;
pub mod tableau;
pub mod verify;

pub use error::{HbvmError, Result};
