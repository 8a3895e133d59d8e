//! Physics-informed skill models and planning on toy rigid-body tasks.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`numerics`] — dense feed-forward networks, exact derivatives (with
//!   respect to inputs and to parameters), and an L-BFGS minimizer with a
//!   strong-Wolfe line search.
//! - [`skills`] — the five skill networks (swinging, sliding, throwing,
//!   bouncing, hitting), their governing-equation residuals, the combined
//!   data + physics loss, training, and inverse parameter identification.
//! - [`worldsim`] — the ground-truth simulator: analytic/RK4 physics per
//!   skill, dataset generation, full task execution, and rewards.
//! - [`planner`] — Monte Carlo tree search over sampled continuous arms with
//!   skill-chaining rollouts.
//! - [`adapt`] — Gaussian-process model of the skill models' reward error,
//!   the UCB correction, and the outer adaptive loop.
//! - [`bench`] — the task/agent/seed experiment harness and regret curves.
//!
//! The command-line front door lives in [`cli`]; `phyplan --help` lists the
//! subcommands (`gen-data`, `train`, `eval`, `identify`, `plan`, `bench`,
//! `grid-opt`).

pub mod adapt;
pub mod bench;
pub mod cli;
pub mod config;
mod error;
pub mod numerics;
pub mod parallel;
pub mod planner;
pub mod skills;
pub mod worldsim;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Gravitational acceleration in m/s^2. A global constant, never trainable.
pub const GRAVITY: f64 = 9.81;
