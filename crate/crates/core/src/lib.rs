//! Depth from a frame triplet with dynamic object motion disentanglement.
//!
//! Pipeline: [`scenesim`] renders a synthetic triplet with exact ground
//! truth, [`domd`] repaints moving objects in the neighbour frames from a
//! depth prior, [`costvol`] sweeps and fills a plane-sweep cost volume,
//! [`losses`] scores the resulting depth, and [`solver`] ties the stages
//! together. [`metrics`] evaluates predictions and [`cli`] drives it all
//! from the command line.

// `!(x > 0.0)` is how NaN is rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod costvol;
pub mod domd;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod reduce;
pub mod scenesim;
pub mod solver;

pub use error::{Error, Result};
