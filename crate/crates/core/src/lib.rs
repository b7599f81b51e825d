//! Digital twin of modular articulated soft robots driven by antagonistic
//! pneumatic bellows.
//!
//! Two builds are modelled: a semi-modular chain with one proportional
//! pressure valve per bellows, and a modular chain with on/off microvalves
//! fed from a shared supply line. The [`sim::Twin`] steps the control loop,
//! the pneumatic network and the joint dynamics at a fixed rate; the
//! [`harness`] module runs complete experiments on top of it.

pub mod bus;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod model;
pub mod pneumatics;
pub mod sim;

pub use error::{Error, Result, Violation};
pub use model::{BaseOrientation, BellowsKind, TwinConfig, Variant};
pub use sim::Twin;
