//! Calculus on time scales and impulsive dynamic equations.
//!
//! The crate covers the discrete (integer lattice), continuous (real line) and
//! mixed cases through one grid type, [`timescale::TimeScaleGrid`]:
//!
//! - [`calculus`]: cylinder transform, generalized exponential, regressive
//!   algebra, delta integral and derivative.
//! - [`solver`]: impulsive dynamic equations with exact steps on scattered
//!   points and RK4 on dense cells.
//! - [`comparison`]: closed-form comparison envelopes for linear and logistic
//!   impulsive inequalities, and a pointwise verifier.
//! - [`model`]: the single-species model with saturating predation and
//!   logarithmic impulses, its hypotheses and derived constants.
//! - [`analysis`]: permanence, Lyapunov contraction and translation checks
//!   on simulated trajectories.
//! - [`config`]: the TOML model configuration format.

pub mod analysis;
pub mod calculus;
pub mod coefficient;
pub mod comparison;
pub mod config;
pub mod error;
pub mod impulse;
pub mod model;
pub mod report;
pub mod solver;
pub mod timescale;

pub use error::{Error, Result};
