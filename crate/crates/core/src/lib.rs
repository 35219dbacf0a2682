//! Offline synthesis of per-cell output-feedback tracking controllers.
//!
//! An environment is a chain of overlapping convex cells, each carrying one
//! Bernstein polynomial segment. For every cell a static gain `u = K [y; x_p]`
//! is computed from a semidefinite program that combines a Lyapunov
//! convergence LMI with control-barrier safety constraints on every face; the
//! switched closed loop is then simulated and checked.

pub mod cli;
pub mod conic;
pub mod environment;
pub mod error;
pub mod io;
pub mod plot;
pub mod simulator;
pub mod synthesis;
pub mod trajectory;

pub use error::{Error, Result};
