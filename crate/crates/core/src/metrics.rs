//! Reductions of an event log: channel busy percent, packet error rate by
//! distance, RSS curves and run summaries.

use alloc::string::String;
use alloc::vec::Vec;

use crate::channel::{Channel, ChannelError};
use crate::mac::{MacStats, Packet, Receiver, TxEvent};
use crate::time::SimTime;

pub const DEFAULT_CBP_WINDOW: SimTime = SimTime::from_ms(100);
pub const DEFAULT_PER_BIN_M: f64 = 25.0;
pub const DEFAULT_PER_MAX_M: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbpSample {
    pub t_start_s: f64,
    pub busy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbpSeries {
    pub window_s: f64,
    pub samples: Vec<CbpSample>,
    /// Busy time over the whole run divided by its duration.
    pub average: f64,
}

/// Busy intervals sensed at the HV, merged and clipped to `[0, duration)`.
pub fn busy_intervals(events: &[TxEvent], receiver: Receiver<'_>, channel: &Channel, duration: SimTime) -> Vec<(SimTime, SimTime)> {
    let mut spans: Vec<(SimTime, SimTime)> = Vec::new();
    for e in events {
        let hv = receiver.position_at(e.start);
        for p in e.packets() {
            if channel.rss_between(&p.position, &hv) >= channel.radio.cs_threshold_dbm {
                let start = p.sched_time.min(duration);
                let end = (p.sched_time + p.duration).min(duration);
                if end > start {
                    spans.push((start, end));
                }
            }
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

pub fn compute_cbp(
    events: &[TxEvent],
    receiver: Receiver<'_>,
    channel: &Channel,
    duration: SimTime,
    window: SimTime,
) -> CbpSeries {
    assert!(window > SimTime::ZERO, "CBP window must be positive");
    let n = duration.as_ps().div_ceil(window.as_ps()) as usize;
    let mut busy = alloc::vec![0u64; n];
    let mut total = 0u64;
    for (s, e) in busy_intervals(events, receiver, channel, duration) {
        total += (e - s).as_ps();
        let mut t = s;
        while t < e {
            let k = (t.as_ps() / window.as_ps()) as usize;
            let w_end = SimTime::from_ps((k as u64 + 1) * window.as_ps()).min(e);
            busy[k] += (w_end - t).as_ps();
            t = w_end;
        }
    }
    let samples = busy
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let w_start = k as u64 * window.as_ps();
            let w_len = window.as_ps().min(duration.as_ps() - w_start);
            CbpSample { t_start_s: SimTime::from_ps(w_start).as_secs_f64(), busy_fraction: *b as f64 / w_len as f64 }
        })
        .collect();
    let average = if duration > SimTime::ZERO { total as f64 / duration.as_ps() as f64 } else { 0.0 };
    CbpSeries { window_s: window.as_secs_f64(), samples, average }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerBin {
    pub d_lo: f64,
    pub d_hi: f64,
    pub sent: u64,
    pub errors: u64,
    /// `None` for empty bins.
    pub per: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerHistogram {
    pub bin_width_m: f64,
    pub max_distance_m: f64,
    pub bins: Vec<PerBin>,
    /// Pooled over all binned packets.
    pub average: Option<f64>,
}

impl PerHistogram {
    pub fn sent(&self) -> u64 {
        self.bins.iter().map(|b| b.sent).sum()
    }

    pub fn errors(&self) -> u64 {
        self.bins.iter().map(|b| b.errors).sum()
    }

    /// Merges adjacent bins `factor` at a time.
    pub fn coarsen(&self, factor: usize) -> PerHistogram {
        let bins: Vec<PerBin> = self
            .bins
            .chunks(factor.max(1))
            .map(|c| {
                let sent = c.iter().map(|b| b.sent).sum();
                let errors = c.iter().map(|b| b.errors).sum();
                PerBin { d_lo: c[0].d_lo, d_hi: c[c.len() - 1].d_hi, sent, errors, per: ratio(errors, sent) }
            })
            .collect();
        PerHistogram { bin_width_m: self.bin_width_m * factor as f64, max_distance_m: self.max_distance_m, average: self.average, bins }
    }
}

fn ratio(errors: u64, sent: u64) -> Option<f64> {
    (sent > 0).then(|| errors as f64 / sent as f64)
}

/// PER versus TX-HV distance at generation time. A packet is an error
/// unless its event decoded it at the HV; expired packets are errors.
pub fn compute_per(
    events: &[TxEvent],
    expired: &[Packet],
    receiver: Receiver<'_>,
    hv_id: u32,
    bin_width_m: f64,
    max_distance_m: f64,
) -> PerHistogram {
    assert!(bin_width_m > 0.0, "PER bin width must be positive");
    let n = libm::ceil(max_distance_m / bin_width_m) as usize;
    let mut sent = alloc::vec![0u64; n];
    let mut errors = alloc::vec![0u64; n];
    let mut tally = |p: &Packet, ok: bool| {
        if p.vehicle_id == hv_id {
            return;
        }
        let hv = receiver.position_at(p.gen_time);
        let d = p.position.distance_to(&hv);
        if d < max_distance_m {
            let k = ((d / bin_width_m) as usize).min(n - 1);
            sent[k] += 1;
            if !ok {
                errors[k] += 1;
            }
        }
    };
    for e in events {
        let winner = e.outcome.winner();
        for p in e.packets() {
            tally(p, winner == Some(p.vehicle_id));
        }
    }
    for p in expired {
        tally(p, false);
    }
    let bins = (0..n)
        .map(|k| PerBin {
            d_lo: k as f64 * bin_width_m,
            d_hi: ((k + 1) as f64 * bin_width_m).min(max_distance_m),
            sent: sent[k],
            errors: errors[k],
            per: ratio(errors[k], sent[k]),
        })
        .collect();
    let average = ratio(errors.iter().sum(), sent.iter().sum());
    PerHistogram { bin_width_m, max_distance_m, bins, average }
}

/// `(d, rss)` for `d = d_min + k * step` up to `d_max`.
pub fn rss_curve(channel: &Channel, d_min: f64, d_max: f64, step: f64) -> Result<Vec<(f64, f64)>, ChannelError> {
    if !(d_min >= 0.0 && d_max > d_min && step > 0.0) {
        return Err(ChannelError::InvalidModel("rss curve needs 0 <= d_min < d_max and step > 0"));
    }
    let count = libm::floor((d_max - d_min) / step + 1e-9) as usize + 1;
    (0..count)
        .map(|k| {
            let d = d_min + k as f64 * step;
            channel.rss_dbm(d).map(|r| (d, r))
        })
        .collect()
}

/// Counts and timing for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub sim_duration_s: f64,
    pub wall_time_s: f64,
    pub speedup: f64,
    pub packets_generated: u64,
    pub decoded: u64,
    pub collided: u64,
    pub below_sensitivity: u64,
    pub expired: u64,
    pub p99_delivery_lag_s: Option<f64>,
}

impl RunStats {
    pub fn new(mac: &MacStats, sim_duration_s: f64, wall_time_s: f64) -> Self {
        RunStats {
            sim_duration_s,
            wall_time_s,
            speedup: if wall_time_s > 0.0 { sim_duration_s / wall_time_s } else { f64::INFINITY },
            packets_generated: mac.packets_generated,
            decoded: mac.decoded,
            collided: mac.collided,
            below_sensitivity: mac.below_sensitivity,
            expired: mac.expired,
            p99_delivery_lag_s: None,
        }
    }

    pub fn real_time_capable(&self) -> bool {
        self.speedup > 1.0
    }
}

/// One row of the summary tables: one run (topology x density x channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub topology: String,
    pub vehicles: u32,
    pub channel: String,
    pub avg_cbp_pct: f64,
    /// `None` when no RV packet fell inside the PER distance cap.
    pub avg_per_pct: Option<f64>,
    pub events: u64,
    pub packets_generated: u64,
    pub decoded: u64,
    pub collided: u64,
    pub below_sensitivity: u64,
    pub expired: u64,
    pub no_traffic: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimReport {
    pub rows: Vec<ReportRow>,
}

impl SimReport {
    /// Rows ordered by topology (disk, linear, intersection, others), then
    /// channel, then ascending density.
    pub fn from_rows(mut rows: Vec<ReportRow>) -> Self {
        fn rank(t: &str) -> u8 {
            match t {
                "disk" => 0,
                "linear" => 1,
                "intersection" => 2,
                _ => 3,
            }
        }
        rows.sort_by(|a, b| {
            (rank(&a.topology), &a.topology, &a.channel, a.vehicles).cmp(&(rank(&b.topology), &b.topology, &b.channel, b.vehicles))
        });
        SimReport { rows }
    }
}

pub fn summarize(
    topology: &str,
    vehicles: u32,
    channel: &str,
    events: &[TxEvent],
    cbp: &CbpSeries,
    per: &PerHistogram,
    mac: &MacStats,
) -> ReportRow {
    ReportRow {
        topology: topology.into(),
        vehicles,
        channel: channel.into(),
        avg_cbp_pct: cbp.average * 100.0,
        avg_per_pct: per.average.map(|p| p * 100.0),
        events: events.len() as u64,
        packets_generated: mac.packets_generated,
        decoded: mac.decoded,
        collided: mac.collided,
        below_sensitivity: mac.below_sensitivity,
        expired: mac.expired,
        no_traffic: events.is_empty(),
    }
}
