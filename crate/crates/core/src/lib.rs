//! Penalty-solidification simulator for a rigid body immersed in a
//! compressible isentropic flow with inflow and outflow boundaries.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod body;
pub mod continuity;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod exec;
pub mod fields;
pub mod geometry;
pub mod linsolve;
pub mod momentum;

pub use error::{Result, SimError};
