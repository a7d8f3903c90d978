use crate::time::SimTime;

use super::{BackoffSource, MacError, MacParams, OverlapState, Packet};

/// State of `next` relative to `current` given the gap `diff` between their
/// scheduled times. Hidden-node collisions take precedence within the
/// transmission window.
pub fn classify_diff(diff: SimTime, pd: SimTime, tx_interval: SimTime, aifs: SimTime, hidden: bool) -> OverlapState {
    if hidden && diff <= tx_interval {
        OverlapState::CollisionHiddenNode
    } else if diff <= pd {
        OverlapState::CollisionPd
    } else if diff <= tx_interval {
        OverlapState::Backoff
    } else if diff <= tx_interval + aifs {
        OverlapState::AifsWaiting
    } else {
        OverlapState::PostTransmission
    }
}

pub fn classify(current: &Packet, next: &Packet, params: &MacParams, hidden: bool) -> Result<OverlapState, MacError> {
    let diff = next
        .sched_time
        .checked_sub(current.sched_time)
        .ok_or(MacError::OrderingViolation { next_id: next.vehicle_id, next_seq: next.seq })?;
    let pd = params.propagation_delay(&current.position, &next.position);
    Ok(classify_diff(diff, pd, params.tx_interval(), params.aifs(), hidden))
}

/// B: draw a counter on first contention, otherwise freeze the one in
/// progress at the slots it still had left when `current` seized the
/// channel. The packet then waits for the end of `current`, AIFS, and the
/// remaining slots.
pub fn apply_backoff<B: BackoffSource + ?Sized>(next: &mut Packet, backoff: &mut B, params: &MacParams, current_end: SimTime) {
    let counter = match next.backoff_counter {
        Some(c) => {
            let start = current_end - params.tx_interval();
            let left = next.sched_time.saturating_sub(start).as_ps().div_ceil(params.slot_time().as_ps());
            c.min(left as u32)
        }
        None => backoff.draw(next, params.cw_min(), params.cw_max()),
    };
    let target = current_end + params.aifs() + params.slot_time().times(counter as u64);
    next.sched_time = next.sched_time.max(target);
    next.backoff_counter = Some(counter);
}

/// C: hold `next` until the AIFS after `current` has elapsed.
pub fn reschedule_after_aifs(next: &mut Packet, current_end: SimTime, params: &MacParams) {
    next.sched_time = next.sched_time.max(current_end + params.aifs());
}
