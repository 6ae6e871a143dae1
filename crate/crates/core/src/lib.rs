//! Asynchronous distributed feedback optimization.
//!
//! A network of agents drives the outputs `y = Cx` of a static linear plant
//! toward the minimizers of a sequence of strongly convex objectives
//! `J(x, y; t) = f(x; t) + g(y; t)`. Each agent owns one block of the input
//! vector and one block of the output vector, and operates on possibly stale
//! local copies of everyone else's blocks. Computations, measurements and
//! communications are all asynchronous, subject to a common delay bound `B`.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] – block layouts, box constraints, projection and the output map.
//! * [`objective`] – time-varying quadratic epochs and their per-epoch constants.
//! * [`schedule`] – event schedules satisfying partial asynchrony.
//! * [`engine`] – the tick-level simulator producing a [`engine::RunTrace`].
//! * [`metrics`] – the minimizer oracle, tracking series and lemma checks.
//! * [`theory`] – the bound-constant ladder, rate bounds and operation counts.

pub mod engine;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod rng;
pub mod schedule;
pub mod theory;

pub use error::{Error, Result};
