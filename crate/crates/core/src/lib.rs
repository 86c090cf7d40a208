//! Stochastic heavy-ball (SHB) momentum on strongly-convex quadratics.
//!
//! The crate is organised bottom-up:
//!
//! - [`problems`]: synthetic finite-sum quadratics (noisy regression, feasible
//!   linear systems and the diagonal divergence construction).
//! - [`sampling`]: without-replacement mini-batches and their variance factors.
//! - [`schedules`]: constant accelerated parameters and the exponential
//!   noise-adaptive `(eta_k, lambda_k)` sequence.
//! - [`optimizers`]: the SHB, averaging-form SHB, SGD and Nesterov loops.
//! - [`multistage`] and [`twophase`]: the staged and two-phase SHB drivers.
//! - [`lowerbound`]: the norm-square increase factor over random 2x2 products.
//! - [`harness`]: experiment configs, presets, aggregation, CSV and SVG output.

pub mod error;
pub mod harness;
pub mod lowerbound;
pub mod multistage;
pub mod optimizers;
pub mod problems;
pub mod sampling;
pub mod schedules;
pub mod twophase;
mod vecops;

pub use error::{Error, Result};
pub use problems::{NoiseProfile, ProblemKind, QuadraticProblem};
pub use optimizers::{RunConfig, Trajectory};
