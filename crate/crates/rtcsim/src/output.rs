//! Event log, plot series, summary tables and timing files.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rtcsim_core::metrics::{CbpSeries, PerHistogram, ReportRow, RunStats, SimReport};
use rtcsim_core::TxEvent;

pub const EVENTS_FILE: &str = "events.csv";
pub const PLOT_FILE: &str = "series.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const TIMING_FILE: &str = "timing.csv";

pub const EVENT_HEADER: &str = "start_s,end_s,transmitter_id,outcome,winner_id,n_colliders,hv_distance_m";

pub fn write_events<W: Write>(events: &[TxEvent], mut w: W) -> io::Result<()> {
    writeln!(w, "{EVENT_HEADER}")?;
    for e in events {
        write_event(e, &mut w)?;
    }
    w.flush()
}

pub fn write_event<W: Write>(e: &TxEvent, mut w: W) -> io::Result<()> {
    let winner = e.outcome.winner().map(|id| id.to_string()).unwrap_or_default();
    writeln!(
        w,
        "{},{},{},{},{},{},{:.3}",
        e.start,
        e.end,
        e.transmitter_id(),
        e.outcome.label(),
        winner,
        e.colliders.len(),
        e.hv_distance_m
    )
}

/// One `series,x,y` row per point: CBP per window start, PER per bin
/// midpoint (empty bins skipped), RSS per distance.
pub fn write_plot_series<W: Write>(cbp: &CbpSeries, per: &PerHistogram, rss: &[(f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "series,x,y")?;
    for s in &cbp.samples {
        writeln!(w, "cbp,{:.3},{:.6}", s.t_start_s, s.busy_fraction)?;
    }
    for b in &per.bins {
        if let Some(p) = b.per {
            writeln!(w, "per,{},{:.6}", (b.d_lo + b.d_hi) / 2.0, p)?;
        }
    }
    for (d, r) in rss {
        writeln!(w, "rss,{d},{r:.6}")?;
    }
    w.flush()
}

/// Serialized form of [`ReportRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub topology: String,
    pub vehicles: u32,
    pub channel: String,
    pub avg_cbp_pct: String,
    pub avg_per_pct: String,
    pub events: u64,
    pub packets_generated: u64,
    pub decoded: u64,
    pub collided: u64,
    pub below_sensitivity: u64,
    pub expired: u64,
    pub no_traffic: bool,
}

impl From<&ReportRow> for SummaryRecord {
    fn from(r: &ReportRow) -> Self {
        SummaryRecord {
            topology: r.topology.clone(),
            vehicles: r.vehicles,
            channel: r.channel.clone(),
            avg_cbp_pct: format!("{:.2}", r.avg_cbp_pct),
            avg_per_pct: r.avg_per_pct.map(|p| format!("{p:.2}")).unwrap_or_default(),
            events: r.events,
            packets_generated: r.packets_generated,
            decoded: r.decoded,
            collided: r.collided,
            below_sensitivity: r.below_sensitivity,
            expired: r.expired,
            no_traffic: r.no_traffic,
        }
    }
}

impl SummaryRecord {
    pub fn to_row(&self) -> Result<ReportRow, String> {
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| format!("{what}: not a number: {s:?}"));
        Ok(ReportRow {
            topology: self.topology.clone(),
            vehicles: self.vehicles,
            channel: self.channel.clone(),
            avg_cbp_pct: num(&self.avg_cbp_pct, "avg_cbp_pct")?,
            avg_per_pct: if self.avg_per_pct.is_empty() { None } else { Some(num(&self.avg_per_pct, "avg_per_pct")?) },
            events: self.events,
            packets_generated: self.packets_generated,
            decoded: self.decoded,
            collided: self.collided,
            below_sensitivity: self.below_sensitivity,
            expired: self.expired,
            no_traffic: self.no_traffic,
        })
    }
}

pub fn write_summary_csv<W: Write>(report: &SimReport, w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in &report.rows {
        wtr.serialize(SummaryRecord::from(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<ReportRow>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    rdr.deserialize::<SummaryRecord>()
        .map(|r| {
            r.map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|rec| rec.to_row().map_err(|e| format!("{}: {e}", path.display())))
        })
        .collect()
}

fn title(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Per-run listing, one line per row.
pub fn render_summary(report: &SimReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<13} {:>8} {:<19} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "topology", "vehicles", "channel", "CBP %", "PER %", "events", "decoded", "collided", "expired"
    );
    for r in &report.rows {
        let per = r.avg_per_pct.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into());
        let _ = write!(
            out,
            "{:<13} {:>8} {:<19} {:>8.2} {:>8} {:>8} {:>8} {:>8} {:>8}",
            r.topology, r.vehicles, r.channel, r.avg_cbp_pct, per, r.events, r.decoded, r.collided, r.expired
        );
        if r.no_traffic {
            out.push_str("  (no traffic)");
        }
        out.push('\n');
    }
    out
}

/// Average CBP and PER side by side per channel model, grouped by topology
/// and density.
pub fn render_tables(report: &SimReport) -> String {
    let mut channels: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !channels.contains(&r.channel.as_str()) {
            channels.push(&r.channel);
        }
    }
    channels.sort_by_key(|c| (*c != "fowlerville", *c));
    let mut keys: Vec<(&str, u32)> = Vec::new();
    for r in &report.rows {
        if !keys.contains(&(r.topology.as_str(), r.vehicles)) {
            keys.push((&r.topology, r.vehicles));
        }
    }
    let mut out = String::new();
    for (name, pick) in [
        ("Average CBP (%)", (|r: &ReportRow| Some(r.avg_cbp_pct)) as fn(&ReportRow) -> Option<f64>),
        ("Average PER (%)", |r: &ReportRow| r.avg_per_pct),
    ] {
        let _ = writeln!(out, "{name}");
        let _ = write!(out, "{:<13} {:>8}", "Topology", "Vehicles");
        for c in &channels {
            let _ = write!(out, " {:>20}", title(&c.replace('_', " ")));
        }
        out.push('\n');
        let mut last_topo = "";
        for (topo, n) in &keys {
            let shown = if *topo == last_topo { String::new() } else { title(topo) };
            last_topo = topo;
            let _ = write!(out, "{:<13} {:>8}", shown, n);
            for c in &channels {
                let cell = report
                    .rows
                    .iter()
                    .find(|r| r.topology == *topo && r.vehicles == *n && r.channel == *c)
                    .and_then(pick)
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " {:>20}", cell);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn write_timing<W: Write>(stats: &RunStats, mut w: W) -> io::Result<()> {
    writeln!(w, "sim_duration_s,wall_time_s,speedup,real_time_capable,p99_delivery_lag_s")?;
    let p99 = stats.p99_delivery_lag_s.map(|v| format!("{v:.6}")).unwrap_or_default();
    writeln!(
        w,
        "{},{:.6},{:.2},{},{}",
        stats.sim_duration_s,
        stats.wall_time_s,
        stats.speedup,
        stats.real_time_capable(),
        p99
    )?;
    w.flush()
}

/// Creates `dir` and opens `dir/name` for buffered writing.
pub fn create_in(dir: &Path, name: &str) -> io::Result<(PathBuf, io::BufWriter<fs::File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let f = fs::File::create(&path)?;
    Ok((path, io::BufWriter::new(f)))
}
