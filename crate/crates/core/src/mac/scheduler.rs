use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::channel::{resolve_capture, Channel};
use crate::rng::SimRng;
use crate::scenario::{MobilityTrace, Position, Scenario};
use crate::time::SimTime;

use super::{
    apply_backoff, classify_diff, reschedule_after_aifs, BackoffSource, MacError, MacParams, MacStats, OverlapState,
    Outcome, Packet, TxEvent,
};

/// Where outcomes are evaluated: the HV.
#[derive(Debug, Clone, Copy)]
pub enum Receiver<'a> {
    Trace(&'a MobilityTrace),
    Fixed(Position),
}

impl Receiver<'_> {
    pub fn position_at(&self, t: SimTime) -> Position {
        match self {
            // traces are validated non-empty before a run starts
            Receiver::Trace(tr) => tr.position_at(t.as_secs_f64()).unwrap_or(Position::ORIGIN),
            Receiver::Fixed(p) => *p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Whether the HV contends for the channel like the RVs.
    pub hv_transmits: bool,
    /// Seed of the backoff RNG.
    pub backoff_seed: u64,
}

impl RunOptions {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        RunOptions { hv_transmits: true, backoff_seed: scenario.seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: Vec<TxEvent>,
    pub expired: Vec<Packet>,
    pub stats: MacStats,
}

#[derive(Debug, Clone)]
struct Queued(Packet);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.0.queue_key() == other.0.queue_key()
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.queue_key().cmp(&other.0.queue_key())
    }
}

/// Min-queue of packets keyed by `(sched_time, vehicle_id, seq)`.
#[derive(Debug, Clone, Default)]
pub struct PacketQueue {
    heap: BinaryHeap<Reverse<Queued>>,
}

impl PacketQueue {
    pub fn push(&mut self, p: Packet) {
        self.heap.push(Reverse(Queued(p)));
    }
    pub fn pop(&mut self) -> Option<Packet> {
        self.heap.pop().map(|Reverse(Queued(p))| p)
    }
    pub fn peek(&self) -> Option<&Packet> {
        self.heap.peek().map(|Reverse(Queued(p))| p)
    }
    pub fn len(&self) -> usize {
        self.heap.len()
    }
    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// First packet of every transmitting vehicle.
pub fn init_queue(scenario: &Scenario, params: &MacParams, hv_transmits: bool) -> Result<PacketQueue, MacError> {
    scenario.validate()?;
    let mut q = PacketQueue::default();
    let duration = scenario.duration();
    let senders = scenario.traces().filter(|t| hv_transmits || t.vehicle_id != scenario.hv_id());
    for trace in senders {
        if let Some(p) = make_packet(trace, 0, duration, params.tx_interval()) {
            q.push(p);
        }
    }
    Ok(q)
}

fn make_packet(trace: &MobilityTrace, seq: u32, horizon: SimTime, duration: SimTime) -> Option<Packet> {
    let gen = trace.gen_time(seq);
    if gen >= horizon {
        return None;
    }
    let k = trace.kinematics_at(gen.as_secs_f64()).ok()?;
    let mut p = Packet::new(trace.vehicle_id, seq, gen, duration, k.position);
    p.speed_mps = k.speed_mps;
    p.heading_rad = k.heading_rad;
    Some(p)
}

/// Evaluates one transmission and its overlap list at the HV.
pub fn resolve_transmission(
    current: Packet,
    colliders: Vec<Packet>,
    channel: &Channel,
    hv_position: Position,
    tx_interval: SimTime,
) -> Result<TxEvent, MacError> {
    let arrivals: Vec<(u32, f64)> = core::iter::once(&current)
        .chain(colliders.iter())
        .map(|p| (p.vehicle_id, channel.rss_between(&p.position, &hv_position)))
        .collect();
    let outcome = match resolve_capture(&channel.radio, &arrivals)? {
        Some(i) => Outcome::Decoded(arrivals[i].0),
        None if arrivals.len() > 1 => Outcome::Collided,
        None => Outcome::BelowSensitivity,
    };
    let start = current.sched_time;
    Ok(TxEvent {
        hv_distance_m: current.position.distance_to(&hv_position),
        start,
        end: start + tx_interval,
        transmitter: current,
        colliders,
        outcome,
    })
}

struct Traffic<'a> {
    traces: BTreeMap<u32, &'a MobilityTrace>,
}

/// Incremental CSMA/CA scheduler; each call to [`Scheduler::next_event`]
/// closes one transmission.
pub struct Scheduler<'a, B> {
    params: MacParams,
    channel: &'a Channel,
    receiver: Receiver<'a>,
    traffic: Option<Traffic<'a>>,
    queue: PacketQueue,
    backoff: B,
    horizon: SimTime,
    last_pop: SimTime,
    stats: MacStats,
    expired: Vec<Packet>,
}

impl<'a> Scheduler<'a, SimRng> {
    pub fn for_scenario(
        scenario: &'a Scenario,
        channel: &'a Channel,
        params: &MacParams,
        options: RunOptions,
    ) -> Result<Self, MacError> {
        Self::with_backoff(scenario, channel, params, options, SimRng::seed_from_u64(options.backoff_seed))
    }
}

impl<'a, B: BackoffSource> Scheduler<'a, B> {
    pub fn with_backoff(
        scenario: &'a Scenario,
        channel: &'a Channel,
        params: &MacParams,
        options: RunOptions,
        backoff: B,
    ) -> Result<Self, MacError> {
        let queue = init_queue(scenario, params, options.hv_transmits)?;
        let traces = scenario
            .traces()
            .filter(|t| options.hv_transmits || t.vehicle_id != scenario.hv_id())
            .map(|t| (t.vehicle_id, t))
            .collect();
        let stats = MacStats { packets_generated: queue.len() as u64, ..MacStats::default() };
        Ok(Scheduler {
            params: *params,
            channel,
            receiver: Receiver::Trace(&scenario.hv_trace),
            traffic: Some(Traffic { traces }),
            queue,
            backoff,
            horizon: scenario.duration(),
            last_pop: SimTime::ZERO,
            stats,
            expired: Vec::new(),
        })
    }

    /// A fixed packet set with no follow-on generation.
    pub fn from_packets(
        packets: Vec<Packet>,
        channel: &'a Channel,
        params: &MacParams,
        receiver: Receiver<'a>,
        horizon: SimTime,
        backoff: B,
    ) -> Self {
        let mut queue = PacketQueue::default();
        let n = packets.len() as u64;
        for p in packets {
            queue.push(p);
        }
        Scheduler {
            params: *params,
            channel,
            receiver,
            traffic: None,
            queue,
            backoff,
            horizon,
            last_pop: SimTime::ZERO,
            stats: MacStats { packets_generated: n, ..MacStats::default() },
            expired: Vec::new(),
        }
    }

    pub fn stats(&self) -> &MacStats {
        &self.stats
    }

    pub fn expired(&self) -> &[Packet] {
        &self.expired
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn into_expired(self) -> Vec<Packet> {
        self.expired
    }

    fn pop(&mut self) -> Result<Option<Packet>, MacError> {
        let Some(p) = self.queue.pop() else { return Ok(None) };
        if p.sched_time < self.last_pop {
            return Err(MacError::Invariant("queue popped a packet earlier than its predecessor"));
        }
        if p.sched_time < p.gen_time {
            return Err(MacError::Invariant("packet scheduled before its generation time"));
        }
        self.last_pop = p.sched_time;
        Ok(Some(p))
    }

    /// The packet leaves the system: queue its vehicle's next BSM, no
    /// earlier than `floor`.
    fn release(&mut self, left: &Packet, floor: SimTime) {
        let Some(traffic) = &self.traffic else { return };
        let Some(trace) = traffic.traces.get(&left.vehicle_id) else { return };
        let Some(mut next) = make_packet(trace, left.seq + 1, self.horizon, self.params.tx_interval()) else {
            return;
        };
        self.stats.packets_generated += 1;
        if next.sched_time < floor {
            next.sched_time = floor;
            self.stats.late_generations += 1;
        }
        if next.sched_time >= self.horizon {
            self.expire(next, floor);
        } else {
            self.queue.push(next);
        }
    }

    fn expire(&mut self, p: Packet, floor: SimTime) {
        self.stats.expired += 1;
        self.release(&p, floor);
        self.expired.push(p);
    }

    /// Runs the state machine until one transmission closes. `None` once the
    /// queue is drained.
    pub fn next_event(&mut self) -> Result<Option<TxEvent>, MacError> {
        let tx = self.params.tx_interval();
        let aifs = self.params.aifs();
        loop {
            let Some(current) = self.pop()? else { return Ok(None) };
            if current.sched_time >= self.horizon {
                let floor = self.last_pop;
                self.expire(current, floor);
                continue;
            }
            let end = current.sched_time + tx;
            let mut colliders = Vec::new();
            let mut deferred = Vec::new();
            while let Some(head) = self.queue.peek() {
                let diff = head
                    .sched_time
                    .checked_sub(current.sched_time)
                    .ok_or(MacError::OrderingViolation { next_id: head.vehicle_id, next_seq: head.seq })?;
                let hidden = diff <= tx && self.channel.is_hidden(&current.position, &head.position);
                let pd = self.params.propagation_delay(&current.position, &head.position);
                let state = classify_diff(diff, pd, tx, aifs, hidden);
                if state == OverlapState::PostTransmission {
                    break;
                }
                let mut next = self.pop()?.expect("peeked");
                match state {
                    OverlapState::CollisionPd | OverlapState::CollisionHiddenNode => colliders.push(next),
                    OverlapState::Backoff => {
                        apply_backoff(&mut next, &mut self.backoff, &self.params, end);
                        self.stats.backoffs += 1;
                        deferred.push(next);
                    }
                    OverlapState::AifsWaiting => {
                        reschedule_after_aifs(&mut next, end, &self.params);
                        self.stats.aifs_deferrals += 1;
                        deferred.push(next);
                    }
                    OverlapState::PostTransmission => unreachable!(),
                }
            }

            let hv = self.receiver.position_at(current.sched_time);
            let event = resolve_transmission(current, colliders, self.channel, hv, tx)?;
            self.stats.events += 1;
            self.stats.packets_in_events += 1 + event.colliders.len() as u64;
            match event.outcome {
                Outcome::Decoded(_) => self.stats.decoded += 1,
                Outcome::Collided => self.stats.collided += 1,
                Outcome::BelowSensitivity => self.stats.below_sensitivity += 1,
            }

            let boundary = end + aifs;
            for p in deferred {
                if p.sched_time >= self.horizon {
                    self.expire(p, boundary);
                } else {
                    self.queue.push(p);
                }
            }
            for p in event.packets().cloned().collect::<Vec<_>>() {
                self.release(&p, boundary);
            }
            return Ok(Some(event));
        }
    }

    /// Drains the scheduler, checking conservation at the end.
    pub fn run_to_end(mut self) -> Result<RunOutput, MacError> {
        let mut events = Vec::new();
        while let Some(e) = self.next_event()? {
            events.push(e);
        }
        self.finish(events)
    }

    /// Wraps up a run driven through [`Scheduler::next_event`].
    pub fn finish(self, events: Vec<TxEvent>) -> Result<RunOutput, MacError> {
        if !self.stats.conservation_holds(self.queue.len() as u64) {
            return Err(MacError::Invariant("packet conservation"));
        }
        Ok(RunOutput { events, stats: self.stats, expired: self.expired })
    }
}

/// Batch execution of a scenario.
pub fn run(scenario: &Scenario, channel: &Channel, params: &MacParams, options: RunOptions) -> Result<RunOutput, MacError> {
    Scheduler::for_scenario(scenario, channel, params, options)?.run_to_end()
}
