//! Reliability-based monitoring (RBM) for redundant software systems.
//!
//! The crate is layered bottom-up:
//!
//! - [`relcurve`]: reliability curves sampled on a uniform time grid, plus the
//!   splice primitives (restore, freeze, conserve) the monitor applies each step.
//! - [`stpn`]: failure-race nets (competing firing transitions) and their exact
//!   transient reliability.
//! - [`frf`]: failure-rate functions mapping diagnostics data to net parameters.
//! - [`rbd`]: block diagrams per mode of operation and pointwise system evaluation.
//! - [`conditioning`]: per-step conditioned curve computation driven by events.
//! - [`prognostics`]: residual reliability, probability of failure, RUL and the
//!   alarm ledger.
//! - [`scheduler`]: rejuvenation plans built from alarms.
//! - [`monitor`]: the periodic monitor loop wiring all of the above.
//! - [`simulator`]: a seeded discrete-event simulation of a 2-out-of-3 software
//!   system that feeds the monitor and measures availability.

pub mod artifacts;
pub mod conditioning;
pub mod config;
pub mod error;
pub mod frf;
pub mod monitor;
pub mod prognostics;
pub mod rbd;
pub mod relcurve;
pub mod scheduler;
pub mod simulator;
pub mod stpn;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Identifier of an independent subsystem (one software system per node).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsystemId(pub u32);

impl fmt::Display for SubsystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sws{}", self.0)
    }
}

/// Reliability of a constant-rate system at its MTTF; the default alarm threshold.
pub const EOL_THRESHOLD: f64 = 0.367_879_441_171_442_33;
