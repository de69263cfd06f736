//! Projection-free stochastic solvers for smooth nested composition
//! optimization over closed convex sets.
//!
//! The crate provides:
//! - nested objectives with exact evaluators and per-level stochastic oracles
//!   ([`composition`]),
//! - constraint sets exposing linear minimization oracles and projections
//!   ([`sets`]),
//! - the inexact conditional gradient subproblem solver ([`icg`]),
//! - the one-sample outer algorithms with the square-root schedule
//!   ([`solver`]),
//! - stationarity measures and rate-fit tooling ([`diagnostics`]),
//! - benchmark problem builders ([`benchmarks`]) and the replication harness
//!   ([`experiment`]).

pub mod benchmarks;
pub mod composition;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod icg;
pub mod sets;
pub mod solver;

pub use composition::{CompositionProblem, Matrix, NoiseModel, SmoothMap, StochasticOracle, Vector};
pub use error::{Error, Result};
pub use sets::FeasibleSet;
pub use solver::{Algorithm, RunOptions, RunResult, Schedule, SolverState};
