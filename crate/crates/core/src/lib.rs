//! Simulation and analysis toolkit for atom-chip BEC interferometry.
//!
//! * [`chip_model`]: wire geometry, currents, bias and atom parameters.
//! * [`magnetostatics`]: Biot–Savart fields and gradients of the chip wires.
//! * [`trap`]: trap minima, frequencies, principal axes and depth.
//! * [`rf`]: rf-dressed adiabatic potentials and double-well splitting.
//! * [`disorder`]: wire-meander roughness and density-profile inversion.
//! * [`thermal`]: Joule heating and maximum current density of the wires.
//! * [`interferometry`]: fringe synthesis, modulated-gaussian fits and
//!   circular phase statistics.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chip_model;
pub mod constants;
pub mod disorder;
pub mod error;
pub mod interferometry;
pub mod magnetostatics;
pub mod report;
pub mod reproduce;
pub mod rf;
pub mod thermal;
pub mod trap;

pub use error::{Error, Result};
