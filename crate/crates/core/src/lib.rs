//! Kinetic relaxation laboratory for the one-dimensional gas-dynamics
//! hydrodynamic limit.
//!
//! The crate builds composite wave patterns (viscous shocks, viscous contact,
//! smooth rarefaction) of the Lagrangian Navier–Stokes system, evolves a BGK
//! model in Lagrangian mass coordinates with dynamically shifted shocks, and
//! measures the relative-entropy functionals along the way.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod gas;
pub mod grids;
pub mod harness;
pub mod kinetic;
pub mod macro_micro;
pub mod modulation;
pub mod profiles;
pub mod riemann;

pub use error::{KrlError, Result};
pub use gas::{FluidState, Transport};
