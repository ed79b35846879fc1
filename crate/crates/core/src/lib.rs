//! Direct FFT-based solver for order-`n` Lagrange finite element
//! discretizations of `-Δu + αu = f` with zero Dirichlet data on
//! N-dimensional boxes.

pub mod assembly;
mod dense;
pub mod element;
pub mod error;
pub mod grid;
pub mod quadrature;
pub mod solver;
pub mod spectral;
pub mod transform;
pub mod trig;

pub use error::{Error, Result};
