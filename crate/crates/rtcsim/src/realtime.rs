//! Wall-clock paced runs.
//!
//! A producer thread drives the scheduler ahead of real time into a bounded
//! channel; the calling thread hands each decoded BSM to a [`Sink`] once the
//! wall clock reaches the event's end. The log is the same one `run` makes.

use std::io;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rtcsim_core::mac::{MacError, Receiver, RunOptions, RunOutput, Scheduler};
use rtcsim_core::{Channel, MacParams, Packet, Scenario, SimTime, TxEvent};

/// A delivery later than this aborts the run.
pub const VIOLATION_LAG: Duration = Duration::from_millis(100);

pub trait Sink {
    fn deliver(&mut self, event: &TxEvent, winner: &Packet, rss_dbm: f64) -> io::Result<()>;
}

/// Paces and discards.
#[derive(Debug, Default)]
pub struct NullSink {
    pub delivered: u64,
}

impl Sink for NullSink {
    fn deliver(&mut self, _event: &TxEvent, _winner: &Packet, _rss_dbm: f64) -> io::Result<()> {
        self.delivered += 1;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RealtimeError {
    #[error("real-time violation: event ending at {sim_end}s delivered {:.1} ms late", lag.as_secs_f64() * 1e3)]
    Violation { sim_end: SimTime, lag: Duration, partial: Vec<TxEvent> },
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error("sink: {0}")]
    Sink(io::Error),
}

#[derive(Debug)]
pub struct RealtimeOutput {
    pub run: RunOutput,
    /// One per delivered BSM, in delivery order.
    pub lags: Vec<Duration>,
    pub wall_time: Duration,
}

impl RealtimeOutput {
    pub fn p99_lag(&self) -> Option<Duration> {
        percentile(&self.lags, 0.99)
    }
}

/// Nearest-rank percentile.
pub fn percentile(samples: &[Duration], q: f64) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Sleeping alone overshoots by up to a millisecond on a loaded host, so the
/// last stretch is spent yielding.
const SPIN: Duration = Duration::from_micros(1500);

fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN {
            thread::sleep(left - SPIN);
        } else {
            thread::yield_now();
        }
    }
}

fn wall(t: SimTime) -> Duration {
    Duration::from_nanos(t.as_ps() / 1_000)
}

/// Simulation time zero is the moment of the call. Returns at once when the
/// run produces no events, otherwise after the scenario's duration.
pub fn run_realtime<S: Sink>(
    scenario: &Scenario,
    channel: &Channel,
    params: &MacParams,
    options: RunOptions,
    buffer_events: usize,
    sink: &mut S,
) -> Result<RealtimeOutput, RealtimeError> {
    let epoch = Instant::now();
    let (tx, rx) = mpsc::sync_channel::<TxEvent>(buffer_events.max(1));
    let hv = Receiver::Trace(&scenario.hv_trace);

    thread::scope(|scope| {
        let producer = scope.spawn(move || -> Result<RunOutput, MacError> {
            let mut sched = Scheduler::for_scenario(scenario, channel, params, options)?;
            while let Some(e) = sched.next_event()? {
                if tx.send(e).is_err() {
                    break;
                }
            }
            sched.finish(Vec::new())
        });

        let mut events = Vec::new();
        let mut lags = Vec::new();
        let mut failure = None;
        for e in rx.iter() {
            if let Some(w) = e.winner_packet() {
                let deadline = epoch + wall(e.end);
                sleep_until(deadline);
                let rss = channel.rss_between(&w.position, &hv.position_at(e.start));
                if let Err(err) = sink.deliver(&e, w, rss) {
                    failure = Some(RealtimeError::Sink(err));
                    break;
                }
                let lag = Instant::now().saturating_duration_since(deadline);
                lags.push(lag);
                if lag > VIOLATION_LAG {
                    let sim_end = e.end;
                    events.push(e);
                    failure = Some(RealtimeError::Violation { sim_end, lag, partial: Vec::new() });
                    break;
                }
            }
            events.push(e);
        }
        drop(rx);
        let produced = producer.join().expect("scheduler thread panicked");

        match failure {
            Some(RealtimeError::Violation { sim_end, lag, .. }) => {
                return Err(RealtimeError::Violation { sim_end, lag, partial: events });
            }
            Some(other) => return Err(other),
            None => {}
        }
        let mut run = produced?;
        run.events = events;
        if !run.events.is_empty() {
            sleep_until(epoch + wall(scenario.duration()));
        }
        Ok(RealtimeOutput { run, lags, wall_time: epoch.elapsed() })
    })
}
