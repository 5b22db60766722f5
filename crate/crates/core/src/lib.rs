//! Stackelberg equilibrium between an institutional liquidator (major agent)
//! and a high-frequency trader (minor agent) with signal-driven prices.
//!
//! The pipeline runs bottom-up: [`riccati`] produces the feedback gain and its
//! exponentials, [`operators`] builds the integral operators and their rank-n
//! approximation, [`equilibrium`] solves both agents' strategies, and [`sim`]
//! runs Monte Carlo experiments on top. [`verify`] holds independent
//! objective evaluations and residual checks.

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod model;
pub mod operators;
pub mod par;
pub mod report;
pub mod riccati;
pub mod sim;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::{cosine_basis, TimeGrid};
pub use model::{ModelParams, PenaltySpec, SignalParams};
pub use par::Execution;
pub use riccati::{riccati_closed_form_phi0, solve_riccati, RiccatiSolution};
