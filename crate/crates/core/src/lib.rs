//! Conformal Ricci flow `u_t = e^{−2u} Δu` for rotationally symmetric metrics
//! `e^{2u}|dz|²` on the disc: grids, closed-form metrics, cusp truncation,
//! an implicit solver, upper barriers and decay-law fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod barriers;
pub mod error;
pub mod flow;
pub mod grid;
pub mod metrics;
pub mod surgery;

pub use error::{Error, Result};
pub use grid::{Field, GridKind, RadialGrid};
pub use metrics::MetricSpec;
