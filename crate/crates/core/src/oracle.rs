//! Time-stepped reference model of the broadcast MAC.
//!
//! Every station senses the medium tick by tick instead of being classified
//! against a queue head. It is `O(ticks * stations)` and only meant for
//! cross-checking the event-driven scheduler on a handful of packets.
//!
//! Medium model, relative to the most recent transmission that seized an
//! idle channel (start `S`, elapsed `e = t - S`):
//! - `e >= tx + AIFS` or no transmission yet: idle, the station transmits.
//! - `e <= tx` and (hidden from the transmitter or `e <= PD`): the station
//!   cannot sense it and transmits into it.
//! - `e <= tx` otherwise: busy; wait out the transmission, AIFS, and the
//!   contention counter. The counter is drawn on first busy sensing; a
//!   station whose countdown is interrupted keeps the slots it had left.
//! - `tx < e < tx + AIFS`: wait for the end of AIFS.

use alloc::vec::Vec;

use crate::channel::Channel;
use crate::mac::{resolve_transmission, BackoffSource, MacError, MacParams, Packet, Receiver, Scheduler, TxEvent};
use crate::rng::SimRng;
use crate::scenario::Position;
use crate::time::SimTime;

pub const MAX_ORACLE_PACKETS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub events: Vec<TxEvent>,
    pub expired: Vec<Packet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Waiting,
    OnAir,
    Expired,
}

struct Station {
    packet: Packet,
    phase: Phase,
}

struct Transmission {
    start: SimTime,
    transmitter: usize,
    joined: Vec<usize>,
}

pub fn oracle_replay<B: BackoffSource>(
    packets: &[Packet],
    channel: &Channel,
    params: &MacParams,
    hv: Position,
    tick: SimTime,
    horizon: SimTime,
    backoff: &mut B,
) -> Result<OracleOutput, MacError> {
    if packets.len() > MAX_ORACLE_PACKETS {
        return Err(MacError::OracleTooManyPackets(packets.len()));
    }
    if tick == SimTime::ZERO || tick > SimTime::from_us(1) {
        return Err(MacError::OracleTick);
    }
    let tx = params.tx_interval();
    let aifs = params.aifs();
    let mut stations: Vec<Station> =
        packets.iter().map(|p| Station { packet: p.clone(), phase: Phase::Waiting }).collect();
    let mut finished: Vec<Transmission> = Vec::new();
    let mut medium: Option<Transmission> = None;

    let mut t = SimTime::ZERO;
    while stations.iter().any(|s| s.phase == Phase::Waiting) {
        let mut ready: Vec<usize> = (0..stations.len())
            .filter(|&i| stations[i].phase == Phase::Waiting && stations[i].packet.sched_time <= t)
            .collect();
        ready.sort_by_key(|&i| stations[i].packet.queue_key());

        for i in ready {
            let idle = match &medium {
                None => true,
                Some(m) => t - m.start >= tx + aifs,
            };
            if idle {
                if t >= horizon {
                    stations[i].phase = Phase::Expired;
                    continue;
                }
                stations[i].phase = Phase::OnAir;
                if let Some(done) = medium.replace(Transmission { start: t, transmitter: i, joined: Vec::new() }) {
                    finished.push(done);
                }
                continue;
            }
            let m = medium.as_mut().expect("busy medium has a transmission");
            let elapsed = t - m.start;
            let src = stations[m.transmitter].packet.position;
            let me = stations[i].packet.position;
            let deaf = channel.is_hidden(&src, &me) || elapsed <= params.propagation_delay(&src, &me);
            let resume = if elapsed <= tx && deaf {
                m.joined.push(i);
                stations[i].phase = Phase::OnAir;
                None
            } else if elapsed <= tx {
                let p = &mut stations[i].packet;
                let slots = match p.backoff_counter {
                    // the countdown would have ended `elapsed` after the channel went busy
                    Some(c) => {
                        let slot = params.slot_time().as_ps();
                        c.min(elapsed.as_ps().div_ceil(slot) as u32)
                    }
                    None => backoff.draw(p, params.cw_min(), params.cw_max()),
                };
                p.backoff_counter = Some(slots);
                Some(m.start + tx + aifs + params.slot_time().times(slots as u64))
            } else {
                Some(m.start + tx + aifs)
            };
            if let Some(at) = resume {
                let st = &mut stations[i];
                st.packet.sched_time = at;
                if at >= horizon {
                    st.phase = Phase::Expired;
                }
            }
        }
        t += tick;
    }
    finished.extend(medium);

    let mut events = Vec::with_capacity(finished.len());
    for tr in finished {
        let mut current = stations[tr.transmitter].packet.clone();
        current.sched_time = tr.start;
        let mut colliders: Vec<Packet> = tr.joined.iter().map(|&j| stations[j].packet.clone()).collect();
        colliders.sort_by_key(Packet::queue_key);
        events.push(resolve_transmission(current, colliders, channel, hv, tx)?);
    }
    events.sort_by_key(|e| e.start);
    let expired = stations.into_iter().filter(|s| s.phase == Phase::Expired).map(|s| s.packet).collect();
    Ok(OracleOutput { events, expired })
}

/// A small seeded instance for cross-checking the scheduler: 2 to 5
/// packets on whole-microsecond times, spaced to land in every overlap
/// band, spread wide enough that some pairs are hidden, each with a fixed
/// backoff counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub seed: u64,
    pub packets: Vec<Packet>,
    /// Indexed by vehicle id.
    pub counters: Vec<u32>,
    pub hv: Position,
    pub horizon: SimTime,
}

impl OracleCase {
    pub const HORIZON: SimTime = SimTime::from_ms(100);

    pub fn random(seed: u64, params: &MacParams) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let n = rng.uniform_inclusive(2, 5) as usize;
        let us = |t: SimTime| t.as_ps() / SimTime::from_us(1).as_ps();
        let pd = us(params.propagation_delay(&Position::ORIGIN, &Position::ORIGIN));
        let tx = us(params.tx_interval());
        let aifs = us(params.aifs());
        let last = us(Self::HORIZON) - 1;
        let mut gens: Vec<u64> = alloc::vec![rng.next_u64() % (last + 1)];
        for _ in 1..n {
            let base = gens[(rng.next_u64() % gens.len() as u64) as usize];
            let offset = match rng.uniform_inclusive(0, 4) {
                0 => rng.next_u64() % (pd + 1),
                1 => pd + 1 + rng.next_u64() % (tx - pd),
                2 => tx + 1 + rng.next_u64() % aifs,
                3 => tx + aifs + 1 + rng.next_u64() % 300,
                _ => rng.next_u64() % 3000,
            };
            gens.push((base + offset).min(last));
        }
        let packets = gens
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let x = -700.0 + 1400.0 * rng.unit_f64();
                let y = -100.0 + 200.0 * rng.unit_f64();
                Packet::new(i as u32, 0, SimTime::from_us(g), params.tx_interval(), Position::new(x, y))
            })
            .collect();
        let counters = (0..n).map(|_| rng.uniform_inclusive(params.cw_min(), params.cw_max())).collect();
        OracleCase { seed, packets, counters, hv: Position::ORIGIN, horizon: Self::HORIZON }
    }

    fn backoff(&self) -> impl FnMut(&Packet, u32, u32) -> u32 + '_ {
        move |p: &Packet, _, _| self.counters[p.vehicle_id as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseComparison {
    pub oracle: OracleOutput,
    pub scheduler: OracleOutput,
}

impl CaseComparison {
    pub fn agree(&self) -> bool {
        self.oracle == self.scheduler
    }
}

/// Runs one case through both models. Expired packets are put in queue
/// order on both sides.
pub fn compare_case(case: &OracleCase, channel: &Channel, params: &MacParams) -> Result<CaseComparison, MacError> {
    let mut oracle = oracle_replay(&case.packets, channel, params, case.hv, SimTime::from_us(1), case.horizon, &mut case.backoff())?;
    let run = Scheduler::from_packets(case.packets.clone(), channel, params, Receiver::Fixed(case.hv), case.horizon, case.backoff())
        .run_to_end()?;
    let mut scheduler = OracleOutput { events: run.events, expired: run.expired };
    oracle.expired.sort_by_key(Packet::queue_key);
    scheduler.expired.sort_by_key(Packet::queue_key);
    Ok(CaseComparison { oracle, scheduler })
}
