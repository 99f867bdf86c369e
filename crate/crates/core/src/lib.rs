//! Solve the control-constrained optimal control problem for a non-smooth
//! semilinear elliptic equation on a rectangle and certify computed
//! candidates against B-stationarity and the strong-stationarity system.

pub mod beta;
pub mod certificates;
pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod heaviside;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod runner;
pub mod solvers;
pub mod wspace;

pub use error::{Error, Result};
