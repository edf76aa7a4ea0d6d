//! Variational computation of hyperbolic (escaping) orbits of
//! `ü + ∇V(u) = 0`, `½|u̇|² + V(u) = H > 0`, for repulsive (−α)-homogeneous
//! potentials with `0 < α < 2`.
//!
//! Pipeline per endpoint radius `R`:
//!
//! 1. [`seed`]: a feasible antisymmetric loop on the constraint `g(q) = H`;
//! 2. [`minimize`]: constrained minimization of the Dirichlet energy;
//! 3. [`rescale`]: conversion of the unit-interval minimizer to a true-time
//!    segment `u_R` on `[−T_R/2, T_R/2]`;
//! 4. [`diagnostics`]: escape estimates, and the continuation sweep `R → ∞`.
//!
//! [`dynamics`] holds the independent checks: a Störmer–Verlet integrator and
//! the closed-form repulsive-Kepler and strong-force circular oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod functional;
pub mod json;
pub mod minimize;
pub mod potential;
pub mod rescale;
pub mod seed;
pub mod symloop;
pub mod vecops;

pub use error::{OrbitError, Result};
pub use minimize::{minimize_constrained, SolveReport, SolverConfig};
pub use potential::{Coupling, DecayParams, PotentialSpec, Profile};
pub use symloop::SymmetricLoop;
