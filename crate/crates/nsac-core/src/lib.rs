//! Discrete solver for a compressible two-phase flow model: an isentropic
//! Navier-Stokes system coupled to an Allen-Cahn phase equation, discretized
//! with piecewise-constant densities, Crouzeix-Raviart velocities, and a
//! discontinuous piecewise-linear order parameter on periodic triangulations.
//!
//! Modules build bottom-up: `mesh` and `quad` supply geometry, `field` the
//! discrete function spaces, `dg` the broken operators and face fluxes,
//! `physics` the pointwise constitutive laws, `scheme` the implicit time
//! stepper, and `energy`/`consistency`/`study` the diagnostics layered on a
//! run.

pub mod config;
pub mod consistency;
pub mod dg;
pub mod energy;
pub mod error;
pub mod field;
pub mod io;
pub mod linsolve;
pub mod mesh;
pub mod physics;
pub mod preset;
pub mod quad;
pub mod scheme;
pub mod study;

pub use error::{Error, Result};
