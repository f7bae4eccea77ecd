//! Solver for first-order nonlocal mean-field games on 2D domains.
//!
//! The nonlocal coupling kernel is expanded in a finite feature basis,
//! `K(x, y) = sum_ij k_ij f_i(x) f_j(y)`, which turns the interaction term
//! into a small vector of time-dependent coefficients. The coupled
//! Hamilton-Jacobi / continuity system is then solved as a saddle-point
//! problem with a preconditioned primal-dual hybrid gradient iteration whose
//! value-function metric is an H1-type norm, making the step sizes usable
//! across grid resolutions.
//!
//! Module map:
//! - [`grid`]: staggered space-time grid, fields, difference operators
//! - [`basis`]: kernel feature bases and coefficient paths
//! - [`problem`]: densities, costs, obstacles, full problem assembly
//! - [`pdhg`]: proximal operators, residuals, and the solver loop
//! - [`experiments`]: preset problem families and their diagnostics
//! - [`config`], [`io`], [`runner`]: JSON run configs and output artifacts

pub mod basis;
pub mod config;
mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod pdhg;
pub mod problem;
pub mod runner;

pub use error::{Error, Result};
