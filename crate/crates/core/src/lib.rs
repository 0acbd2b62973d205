//! Variational and path-integral tools for the mean-field limit of trapped bosons.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`] holds the discretization (nodes, quadrature, discrete Laplacian).
//! - [`spectral`] provides exact per-axis eigenbases of the discrete Laplacian.
//! - [`potentials`] evaluates traps, pair interactions and mollifiers.
//! - [`scattering`] computes zero-energy scattering lengths.
//! - [`gp_solver`], [`hartree`] and [`dv_rate`] are the deterministic variational solvers.
//! - [`path_mc`] and [`free_energy`] are the Monte Carlo side.
//! - [`diagram`] runs both routes and compares their limits.
//! - [`config`] and [`cli`] drive everything from a flat key/value file.

pub mod cli;
pub mod config;
pub mod conv;
pub mod diagram;
pub mod dv_rate;
pub mod error;
pub mod extrapolate;
pub mod free_energy;
pub mod gp_solver;
pub mod grid;
pub mod hartree;
pub mod path_mc;
pub mod potentials;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{build_grid, Boundary, Grid, GridField, GridParams};
