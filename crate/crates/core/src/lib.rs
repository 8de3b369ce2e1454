//! Bistable piezoelectric energy harvester: model, time integration,
//! regime analysis and variance-based sensitivity analysis.

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod integrator;
mod lstsq;
pub mod model;
pub mod pce;
pub mod uq;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
