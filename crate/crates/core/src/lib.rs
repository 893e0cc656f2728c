//! Numerical laboratory for self-gravitating barotropic gas spheres.
//!
//! The crate computes gravitational hydrostatic equilibria for a general
//! pressure law (polytropes and the degenerate-electron white-dwarf law),
//! advances the spherically symmetric vacuum free-boundary compressible
//! Navier-Stokes-Poisson system in Lagrangian coordinates on the fixed
//! reference interval [0, Rbar], and evaluates the energy functionals and
//! sup-norm diagnostics that control nonlinear stability, including
//! algebraic decay-rate fits of the measured time series.
//!
//! Modules:
//! - [`eos`]: barotropic pressure laws and derived thermodynamics (p, p',
//!   p'', enthalpy, pressure potential, structure-condition checks).
//! - [`equilibrium`]: the stationary star — enthalpy-form integration of
//!   the hydrostatic balance, mass shooting, critical-mass scans.
//! - [`simulator`]: implicit Lagrangian evolution of the perturbed star
//!   with the free-surface stress condition at the vacuum boundary.
//! - [`diagnostics`]: energy functionals, weighted norms, sup-norm panel,
//!   predicted decay exponents and log-log decay fits.
//! - [`config`] / [`output`]: run configuration, CSV/JSON writers and
//!   run manifests for the command-line driver.

pub mod config;
pub mod diagnostics;
pub mod eos;
pub mod equilibrium;
pub mod output;
pub mod simulator;

pub(crate) mod grid;
pub(crate) mod linalg;
pub(crate) mod ode;
pub(crate) mod quad;

pub use grid::Grid;
