//! Artificial-potential-field traffic protocol for small UAS flying inside
//! an airspace link.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: links as convex polyhedra, signed wall distances, the
//!   interior core region and link validation.
//! - [`potential`]: the σ-norm and the repulsive potential family (ψ, φ).
//! - [`dynamics`]: fixed-wing kinematics, feedback linearization to the
//!   double integrator, and the fixed-step integrator.
//! - [`control`]: the damped gradient control law.
//! - [`energy`]: Hamiltonian bookkeeping, safety thresholds, dissipation,
//!   Lipschitz estimation, the O(1/t) rate certificate and λ estimation.
//! - [`admission`]: entry energy (κ, γ), group-size and period budgets,
//!   link transitions and the runtime admission gate.
//! - [`sim`]: scenario files, the simulation loop, monitors and outputs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admission;
pub mod control;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod potential;
pub mod sim;

pub use error::{Error, Result};

/// Three-vector used for positions, velocities and accelerations.
pub type Vec3 = nalgebra::Vector3<f64>;
