//! Scenario resolution, batch and paced runs, metrics and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rtcsim_core::mac::{check_run, run, InvariantReport, Receiver, RunOptions, RunOutput};
use rtcsim_core::metrics::{
    compute_cbp, compute_per, rss_curve, summarize, CbpSeries, PerHistogram, ReportRow, RunStats, SimReport,
};
use rtcsim_core::scenario::generate_topology;
use rtcsim_core::{Channel, MacParams, Scenario, SimTime};

use crate::config::{MetricsSection, Mode, RunConfig};
use crate::error::CliError;
use crate::output;
use crate::realtime::{run_realtime, NullSink, RealtimeError, RealtimeOutput};
use crate::trace_io::load_scenario_dir;
use crate::udp::UdpSink;

/// Everything a run needs, resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Workload {
    pub scenario: Scenario,
    pub channel: Channel,
    pub params: MacParams,
    pub options: RunOptions,
    /// Topology label for reports; `trace` for scenarios read from disk.
    pub topology: String,
    pub channel_name: String,
}

impl Workload {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let s = &cfg.scenario;
        let (scenario, topology) = match &s.trace_dir {
            Some(dir) => (load_scenario_dir(dir)?, "trace".to_string()),
            None => {
                let spec = cfg.topology_spec()?;
                let sc = generate_topology(&spec, s.speed_mps, s.duration_s, s.seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                (sc, spec.topology.name().to_string())
            }
        };
        Ok(Workload {
            scenario,
            channel: cfg.channel()?,
            params: cfg.mac_params()?,
            options: RunOptions { hv_transmits: cfg.mac.hv_transmits, backoff_seed: s.seed },
            topology,
            channel_name: cfg.profile_name().to_string(),
        })
    }

    pub fn receiver(&self) -> Receiver<'_> {
        Receiver::Trace(&self.scenario.hv_trace)
    }

    pub fn vehicles(&self) -> u32 {
        self.scenario.vehicle_count() as u32
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub cbp: CbpSeries,
    pub per: PerHistogram,
    pub row: ReportRow,
    pub invariants: InvariantReport,
}

pub fn analyze(w: &Workload, out: &RunOutput, m: &MetricsSection) -> Analysis {
    let duration = w.scenario.duration();
    let cbp = compute_cbp(&out.events, w.receiver(), &w.channel, duration, SimTime::from_secs_f64(m.cbp_window_s));
    let per = compute_per(&out.events, &out.expired, w.receiver(), w.scenario.hv_id(), m.per_bin_m, m.per_max_m);
    let row = summarize(&w.topology, w.vehicles(), &w.channel_name, &out.events, &cbp, &per, &out.stats);
    let invariants = check_run(out, &w.params, &w.channel, w.receiver());
    Analysis { cbp, per, row, invariants }
}

pub fn run_batch(w: &Workload) -> Result<(RunOutput, Duration), CliError> {
    let t0 = Instant::now();
    let out = run(&w.scenario, &w.channel, &w.params, w.options)?;
    Ok((out, t0.elapsed()))
}

#[derive(Debug)]
pub struct Completed {
    pub output: RunOutput,
    pub analysis: Analysis,
    pub stats: RunStats,
    pub out_dir: PathBuf,
}

/// `run`: executes the configured mode and writes every output file. Files
/// are written before a violation or invariant breach is reported.
pub fn execute(cfg: &RunConfig) -> Result<Completed, CliError> {
    let w = Workload::from_config(cfg)?;
    log::info!(
        "{} {} vehicles, {} s, channel {}, mode {:?}",
        w.topology,
        w.vehicles(),
        w.scenario.duration_s,
        w.channel_name,
        cfg.run.mode
    );
    let (output, wall, p99) = match cfg.run.mode {
        Mode::Batch => {
            let (out, wall) = run_batch(&w)?;
            (out, wall, None)
        }
        Mode::Realtime => match paced(&w, cfg) {
            Ok(rt) => {
                let p99 = rt.p99_lag();
                (rt.run, rt.wall_time, p99)
            }
            Err(RealtimeError::Violation { sim_end, lag, partial }) => {
                let dir = &cfg.run.out_dir;
                let (path, mut f) = output::create_in(dir, output::EVENTS_FILE).map_err(CliError::io(dir))?;
                output::write_events(&partial, &mut f).map_err(CliError::io(path))?;
                return Err(RealtimeError::Violation { sim_end, lag, partial }.into());
            }
            Err(e) => return Err(e.into()),
        },
    };
    let analysis = analyze(&w, &output, &cfg.metrics);
    let mut stats = RunStats::new(&output.stats, w.scenario.duration_s, wall.as_secs_f64());
    stats.p99_delivery_lag_s = p99.map(|d| d.as_secs_f64());
    let out_dir = cfg.run.out_dir.clone();
    write_outputs(&out_dir, cfg, &w, &output, &analysis, &stats)?;
    if !analysis.invariants.is_ok() {
        return Err(CliError::Invariant(format!("{:?}", analysis.invariants)));
    }
    Ok(Completed { output, analysis, stats, out_dir })
}

fn paced(w: &Workload, cfg: &RunConfig) -> Result<RealtimeOutput, RealtimeError> {
    let buf = cfg.run.buffer_events;
    match cfg.run.emit_udp {
        Some(addr) => {
            let mut sink = UdpSink::connect(addr).map_err(RealtimeError::Sink)?;
            run_realtime(&w.scenario, &w.channel, &w.params, w.options, buf, &mut sink)
        }
        None => run_realtime(&w.scenario, &w.channel, &w.params, w.options, buf, &mut NullSink::default()),
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    w: &Workload,
    out: &RunOutput,
    a: &Analysis,
    stats: &RunStats,
) -> Result<(), CliError> {
    let m = &cfg.metrics;
    let rss = rss_curve(&w.channel, m.rss_d_min_m, m.rss_d_max_m, m.rss_step_m).map_err(|e| CliError::Other(e.to_string()))?;
    let report = SimReport::from_rows(vec![a.row.clone()]);

    let (p, mut f) = output::create_in(dir, output::EVENTS_FILE).map_err(CliError::io(dir))?;
    output::write_events(&out.events, &mut f).map_err(CliError::io(p))?;
    let (p, mut f) = output::create_in(dir, output::PLOT_FILE).map_err(CliError::io(dir))?;
    output::write_plot_series(&a.cbp, &a.per, &rss, &mut f).map_err(CliError::io(p))?;
    let (p, f) = output::create_in(dir, output::SUMMARY_CSV).map_err(CliError::io(dir))?;
    output::write_summary_csv(&report, f).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
    let p = dir.join(output::SUMMARY_TXT);
    fs::write(&p, output::render_summary(&report)).map_err(CliError::io(p))?;
    let (p, mut f) = output::create_in(dir, output::TIMING_FILE).map_err(CliError::io(dir))?;
    output::write_timing(stats, &mut f).map_err(CliError::io(p))?;
    Ok(())
}
