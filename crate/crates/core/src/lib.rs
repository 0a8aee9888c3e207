//! Consensus-based optimization on closed convex sets.
//!
//! The solver ([`solver`]) runs a predictor-corrector particle scheme: an
//! Euler step toward a Boltzmann-weighted consensus point followed by an
//! exact Euclidean projection ([`projection`]) onto the feasible set. The
//! portfolio application maximizes the Sharpe ratio ([`objective`]) over the
//! probability simplex using statistics estimated from price data
//! ([`market`]). [`baseline`] provides reference solvers and [`diagnostics`]
//! checks convergence conditions and decay rates empirically.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod market;
pub mod objective;
pub mod projection;
pub mod solver;
mod vecops;

pub use error::{Error, Result};
pub use objective::{MarketStats, Objective};
pub use projection::Projector;
pub use solver::{CboParams, Ensemble, NoiseMode, RunOptions, RunOutcome, RunTrace};
