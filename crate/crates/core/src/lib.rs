//! Simulation of the "Hot Potato" proximity game played on ad-hoc radio devices.
//!
//! Each device runs the same protocol stack: beacon-based neighbor discovery
//! ([`echo`]), a two-phase-commit item transfer ([`action`]), crash-safe local
//! storage ([`persistence`]) and opportunistic upload to infrastructure
//! ([`dts`]). The [`sim`] module wires them onto the discrete-event
//! [`kernel`] over a lossy [`radio`] with scripted player movement
//! ([`mobility`]).

pub mod action;
pub mod dts;
pub mod echo;
pub mod error;
pub mod game;
pub mod gesture;
pub mod kernel;
pub mod metrics;
pub mod mobility;
pub mod persistence;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod sweep;

use std::fmt;

pub use kernel::{RngStream, Scheduler, SimTime};
pub use scenario::Scenario;
pub use sim::{run, RunArtifacts, Simulation};

/// 16-bit device address, as carried on the radio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub u16);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl DeviceId {
    pub fn index(self) -> usize {
        usize::from(self.0)
    }
}
