// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Planning and simulation for deposition with a wearing conical tool tip.
//!
//! The pipeline: identify force and wear parameters from data, plan a full input
//! sequence that tracks a reference stroke in position and width, run it open loop on
//! a simulated canvas, measure the drawn width from the raster and refit.

pub mod canvas;
pub mod chain;
pub mod error;
pub mod experiment;
pub mod force;
pub mod kinematics;
pub mod planner;
pub mod stroke;
pub mod tip;
pub mod vision;

pub use error::{Error, Result};
