use crate::channel::Channel;

use super::{MacParams, Outcome, Receiver, RunOutput};

/// Post-run audit of the scheduler's timeline guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InvariantReport {
    pub events_checked: usize,
    /// Events whose occupancy is not exactly one packet duration.
    pub duration_violations: usize,
    /// Non-hidden consecutive events closer than AIFS.
    pub aifs_violations: usize,
    /// Colliders that could have sensed the transmission they joined.
    pub overlap_violations: usize,
    /// Events out of start-time order.
    pub ordering_violations: usize,
    /// Packets transmitted before their generation time.
    pub causality_violations: usize,
    /// Decoded outcomes whose winner was below sensitivity.
    pub decode_violations: usize,
    pub conservation_ok: bool,
}

impl InvariantReport {
    pub fn is_ok(&self) -> bool {
        self.conservation_ok
            && self.duration_violations == 0
            && self.aifs_violations == 0
            && self.overlap_violations == 0
            && self.ordering_violations == 0
            && self.causality_violations == 0
            && self.decode_violations == 0
    }
}

pub fn check_run(out: &RunOutput, params: &MacParams, channel: &Channel, receiver: Receiver<'_>) -> InvariantReport {
    let tx = params.tx_interval();
    let aifs = params.aifs();
    let mut r = InvariantReport { events_checked: out.events.len(), ..InvariantReport::default() };

    for (i, e) in out.events.iter().enumerate() {
        if e.end - e.start != tx {
            r.duration_violations += 1;
        }
        if e.packets().any(|p| p.sched_time < p.gen_time) {
            r.causality_violations += 1;
        }
        for c in &e.colliders {
            let within_pd = c.sched_time - e.start <= params.propagation_delay(&e.transmitter.position, &c.position);
            let hidden = channel.is_hidden(&e.transmitter.position, &c.position);
            if c.sched_time < e.start || !(within_pd || hidden && c.sched_time <= e.end) {
                r.overlap_violations += 1;
            }
        }
        if let Outcome::Decoded(_) = e.outcome {
            let hv = receiver.position_at(e.start);
            let w = e.winner_packet().expect("decoded winner is in the event");
            if channel.rss_between(&w.position, &hv) < channel.radio.rx_sensitivity_dbm {
                r.decode_violations += 1;
            }
        }
        if i > 0 {
            let prev = &out.events[i - 1];
            if e.start < prev.start {
                r.ordering_violations += 1;
            }
            let hidden = channel.is_hidden(&prev.transmitter.position, &e.transmitter.position);
            if !hidden && e.start < prev.end + aifs {
                r.aifs_violations += 1;
            }
        }
    }

    let carried: usize = out.events.iter().map(|e| 1 + e.colliders.len()).sum();
    r.conservation_ok = out.stats.packets_generated == (carried + out.expired.len()) as u64
        && out.stats.expired == out.expired.len() as u64;
    r
}
