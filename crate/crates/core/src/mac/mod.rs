//! CSMA/CA broadcast scheduling.
//!
//! A priority queue of pending packets is drained one transmission at a
//! time. The head (`current`) seizes the channel; each following head
//! (`next`) is classified by its offset `diff` from `current`:
//!
//! | state | condition                                  | action                         |
//! |-------|--------------------------------------------|--------------------------------|
//! | A1    | `diff <= PD`                               | joins the overlap list         |
//! | A2    | hidden from `current` and `diff <= tx`     | joins the overlap list         |
//! | B     | `PD < diff <= tx`                          | backoff past the transmission  |
//! | C     | `tx < diff <= tx + AIFS`                   | moved to the end of AIFS       |
//! | D     | `diff > tx + AIFS`                         | closes `current`               |
//!
//! On D the overlap list is resolved at the HV with the capture model.

mod classify;
mod invariants;
mod params;
mod scheduler;

use alloc::vec::Vec;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::rng::SimRng;
use crate::scenario::{Position, ScenarioError};
use crate::time::SimTime;

pub use classify::{apply_backoff, classify, classify_diff, reschedule_after_aifs};
pub use invariants::{check_run, InvariantReport};
pub use params::{MacParams, PropagationDelay, SPEED_OF_LIGHT_MPS};
pub use scheduler::{init_queue, resolve_transmission, run, Receiver, RunOptions, RunOutput, Scheduler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("invalid MAC parameters: {0}")]
    InvalidParams(&'static str),
    #[error("queue ordering violated: next packet ({next_id}/{next_seq}) scheduled before current")]
    OrderingViolation { next_id: u32, next_seq: u32 },
    #[error("invariant violated: {0}")]
    Invariant(&'static str),
    #[error("oracle refuses {0} packets (at most 8)")]
    OracleTooManyPackets(usize),
    #[error("oracle tick must be in (0, 1 us]")]
    OracleTick,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// One BSM transmission attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub vehicle_id: u32,
    pub seq: u32,
    pub gen_time: SimTime,
    /// Channel-access time; only ever moves later.
    pub sched_time: SimTime,
    pub duration: SimTime,
    /// Idle slots still to wait; `None` until the first busy sensing.
    pub backoff_counter: Option<u32>,
    /// Transmitter state at `gen_time`.
    pub position: Position,
    pub speed_mps: f64,
    pub heading_rad: f64,
}

impl Packet {
    pub fn new(vehicle_id: u32, seq: u32, gen_time: SimTime, duration: SimTime, position: Position) -> Self {
        Packet {
            vehicle_id,
            seq,
            gen_time,
            sched_time: gen_time,
            duration,
            backoff_counter: None,
            position,
            speed_mps: 0.0,
            heading_rad: 0.0,
        }
    }

    /// Queue order: `(sched_time, vehicle_id, seq)`.
    pub fn queue_key(&self) -> (SimTime, u32, u32) {
        (self.sched_time, self.vehicle_id, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlapState {
    /// A1: started inside the propagation delay of `current`.
    CollisionPd,
    /// A2: hidden from `current` and started during its transmission.
    CollisionHiddenNode,
    /// B: sensed `current` busy.
    Backoff,
    /// C: arrived inside the AIFS that follows `current`.
    AifsWaiting,
    /// D: clear of `current` and its AIFS.
    PostTransmission,
}

impl OverlapState {
    pub fn label(&self) -> &'static str {
        match self {
            OverlapState::CollisionPd => "A1",
            OverlapState::CollisionHiddenNode => "A2",
            OverlapState::Backoff => "B",
            OverlapState::AifsWaiting => "C",
            OverlapState::PostTransmission => "D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Decoded(u32),
    Collided,
    BelowSensitivity,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Decoded(_) => "decoded",
            Outcome::Collided => "collided",
            Outcome::BelowSensitivity => "below_sensitivity",
        }
    }

    pub fn winner(&self) -> Option<u32> {
        match self {
            Outcome::Decoded(id) => Some(*id),
            _ => None,
        }
    }
}

/// One channel occupancy as seen by the HV.
#[derive(Debug, Clone, PartialEq)]
pub struct TxEvent {
    pub transmitter: Packet,
    pub start: SimTime,
    pub end: SimTime,
    pub colliders: Vec<Packet>,
    pub outcome: Outcome,
    pub hv_distance_m: f64,
}

impl TxEvent {
    pub fn transmitter_id(&self) -> u32 {
        self.transmitter.vehicle_id
    }

    /// Transmitter first, then colliders in queue order.
    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        core::iter::once(&self.transmitter).chain(self.colliders.iter())
    }

    pub fn winner_packet(&self) -> Option<&Packet> {
        let id = self.outcome.winner()?;
        self.packets().find(|p| p.vehicle_id == id)
    }
}

/// Source of contention-window draws.
pub trait BackoffSource {
    fn draw(&mut self, packet: &Packet, cw_min: u32, cw_max: u32) -> u32;
}

impl BackoffSource for SimRng {
    fn draw(&mut self, _packet: &Packet, cw_min: u32, cw_max: u32) -> u32 {
        self.uniform_inclusive(cw_min, cw_max)
    }
}

impl<F: FnMut(&Packet, u32, u32) -> u32> BackoffSource for F {
    fn draw(&mut self, packet: &Packet, cw_min: u32, cw_max: u32) -> u32 {
        self(packet, cw_min, cw_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MacStats {
    pub packets_generated: u64,
    pub events: u64,
    pub decoded: u64,
    pub collided: u64,
    pub below_sensitivity: u64,
    /// Packets carried by events, transmitters and colliders alike.
    pub packets_in_events: u64,
    pub expired: u64,
    /// Follow-on packets generated while their predecessor was still queued
    /// past the next slot; they enter at the end of the current AIFS.
    pub late_generations: u64,
    pub backoffs: u64,
    pub aifs_deferrals: u64,
}

impl MacStats {
    pub fn conservation_holds(&self, still_queued: u64) -> bool {
        self.packets_generated == self.packets_in_events + self.expired + still_queued
    }
}
