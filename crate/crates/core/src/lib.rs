//! Numerical toolkit for quasilinear Schrödinger equations on a periodic box:
//! spectral grids, symbol calculus and quantization, bicharacteristic flows,
//! escape functions, coefficient families, and linear/nonlinear solvers.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod doi;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod linear;
pub mod nonlinear;
pub mod psido;
pub mod report;
pub mod symbols;
pub mod util;

pub use error::{QlsError, Result};
pub use grid::{CubePartition, Grid, Spectrum, StateField, Trajectory, C64};
