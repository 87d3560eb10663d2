//! Curative congestion management for low-voltage distribution grids.
//!
//! The crate simulates a small radial feeder with controllable assets,
//! estimates its state from noisy measurements, and cures voltage and
//! apparent-power violations with an optimal power flow that respects
//! time-variant flow limits. A scenario harness replays controlled and
//! uncontrolled runs and scores them with persistence-based violation
//! metrics.

pub mod net;
pub mod pf;
pub mod assets;
pub mod se;
pub mod opf;
pub mod bus;
pub mod ctrl;
pub mod sim;

pub use net::{Branch, BranchKind, Bus, BusKind, Network, TapChanger, S_BASE_KVA};
pub use opf::{BranchLimit, Flexibility, FlexKind, VoltageBand};
pub use pf::{InjectionSpec, PfSolution};
pub use se::{Measurement, MeasurementSet, SystemState};
pub use sim::{Mode, Scenario, Trace};
