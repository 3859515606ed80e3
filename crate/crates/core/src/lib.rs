//! Auto-regressive surrogates for 2D periodic PDEs.
//!
//! A pointwise MLP reads the last `N` values at a grid point and is wrapped
//! in an explicit time-integration scheme (direct, forward Euler, central
//! differences, or Adams-Bashforth over forward-Euler derivatives). Models
//! are trained with single-step regression or multi-step rollouts under
//! fixed or adaptive loss weights, and evaluated by recursive rollout.

pub mod dataset;
pub mod error;
pub mod grid;
mod io;
pub mod metrics;
pub mod nn;
pub mod pde;
pub mod schemes;
pub mod training;
pub mod weighting;

pub use error::{Error, Result};
pub use io::write_atomic;
