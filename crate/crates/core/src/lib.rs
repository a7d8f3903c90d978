//! Event-driven emulation of DSRC (IEEE 802.11p) V2V broadcast as heard by a
//! host vehicle (HV).
//!
//! A fleet of remote vehicles (RVs) follows mobility traces and emits BSMs at
//! a fixed rate. The [`mac`] scheduler pushes every packet through a
//! five-state CSMA/CA model with propagation-delay and hidden-node
//! collisions, backoff and AIFS deferral, then resolves each channel
//! occupancy at the HV with a capture model from [`channel`]. [`metrics`]
//! reduces the resulting event log to channel busy percent and packet error
//! rate.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, pacing and the
//! CLI live in the `rtcsim` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod channel;
pub mod mac;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod time;

pub use channel::{Channel, PathLossModel, RadioConfig};
pub use mac::{MacParams, Outcome, Packet, RunOptions, RunOutput, TxEvent};
pub use scenario::{Position, Scenario, Topology, TopologySpec};
pub use time::SimTime;
