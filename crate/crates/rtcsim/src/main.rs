use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtcsim::config::{Mode, ProfileName, RunConfig, TopologyKind};
use rtcsim::error::CliError;
use rtcsim::output;
use rtcsim::runner::{execute, Workload};
use rtcsim::trace_io::write_trace_files;
use rtcsim_core::metrics::{rss_curve, SimReport};

#[derive(Parser)]
#[command(name = "rtcsim", version, about = "Real-time DSRC V2V broadcast channel emulator")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set mac.cw_min=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate mobility traces and a manifest.
    Gen(ScenarioArgs),
    /// Run a scenario and write the event log and reports.
    Run(RunArgs),
    /// Write an RSS-versus-distance curve.
    Rss(RssArgs),
    /// Combine `summary.csv` files into the CBP and PER tables.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct ScenarioArgs {
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    arm_length: Option<f64>,
    /// Vehicles including the HV.
    #[arg(long)]
    vehicles: Option<u32>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    tx_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Run the traces in this directory instead of a generated topology.
    #[arg(long)]
    scenario_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Send one datagram per decoded BSM to this address (realtime mode).
    #[arg(long)]
    emit_udp: Option<SocketAddr>,
    /// Pace without emitting (realtime mode).
    #[arg(long)]
    null_sink: bool,
}

#[derive(Args)]
struct RssArgs {
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories or summary CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TopologyArg {
    Disk,
    Linear,
    Intersection,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ChannelArg {
    ThreeLogDistance,
    Fowlerville,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Batch,
    Realtime,
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn enum_value<T: serde::Serialize>(v: T) -> String {
    toml::Value::try_from(v).expect("enum serializes").to_string()
}

impl ScenarioArgs {
    fn overrides(&self, o: &mut Vec<String>) {
        if let Some(t) = self.topology {
            let k = match t {
                TopologyArg::Disk => TopologyKind::Disk,
                TopologyArg::Linear => TopologyKind::Linear,
                TopologyArg::Intersection => TopologyKind::Intersection,
            };
            o.push(format!("scenario.topology={}", enum_value(k)));
        }
        let mut num = |key: &str, v: Option<f64>| {
            if let Some(v) = v {
                o.push(format!("scenario.{key}={}", toml::Value::Float(v)));
            }
        };
        num("radius_m", self.radius);
        num("length_m", self.length);
        num("arm_length_m", self.arm_length);
        num("speed_mps", self.speed);
        num("duration_s", self.duration);
        num("tx_rate_hz", self.tx_rate);
        if let Some(n) = self.vehicles {
            o.push(format!("scenario.vehicles={n}"));
        }
    }
}

fn channel_override(c: Option<ChannelArg>, o: &mut Vec<String>) {
    if let Some(c) = c {
        let p = match c {
            ChannelArg::ThreeLogDistance => ProfileName::ThreeLogDistance,
            ChannelArg::Fowlerville => ProfileName::Fowlerville,
        };
        o.push(format!("channel.profile={}", enum_value(p)));
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    if cli.sets.iter().any(|s| s.starts_with('=')) {
        return Err(CliError::Usage("--set needs KEY=VALUE".into()));
    }
    let mut o = cli.sets.clone();
    if let Some(seed) = cli.seed {
        o.push(format!("scenario.seed={seed}"));
    }
    if let Some(out) = &cli.out {
        o.push(format!("run.out_dir={}", quoted(&out.to_string_lossy())));
    }
    match &cli.cmd {
        Cmd::Gen(s) => s.overrides(&mut o),
        Cmd::Run(r) => {
            r.scenario.overrides(&mut o);
            if let Some(d) = &r.scenario_dir {
                o.push(format!("scenario.trace_dir={}", quoted(&d.to_string_lossy())));
            }
            channel_override(r.channel, &mut o);
            if let Some(m) = r.mode {
                let m = match m {
                    ModeArg::Batch => Mode::Batch,
                    ModeArg::Realtime => Mode::Realtime,
                };
                o.push(format!("run.mode={}", enum_value(m)));
            }
            if let Some(a) = r.emit_udp {
                o.push(format!("run.emit_udp={}", quoted(&a.to_string())));
            }
            if r.null_sink {
                o.push("run.null_sink=true".into());
            }
        }
        Cmd::Rss(r) => {
            channel_override(r.channel, &mut o);
            for (k, v) in [("rss_d_min_m", r.d_min), ("rss_d_max_m", r.d_max), ("rss_step_m", r.step)] {
                if let Some(v) = v {
                    o.push(format!("metrics.{k}={}", toml::Value::Float(v)));
                }
            }
        }
        Cmd::Report(_) => {}
    }
    Ok(RunConfig::load(cli.config.as_deref(), &o)?)
}

fn cmd_gen(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.scenario.trace_dir.is_some() {
        return Err(CliError::Usage("gen generates a topology; unset scenario.trace_dir".into()));
    }
    let w = Workload::from_config(cfg)?;
    let dir = &cfg.run.out_dir;
    let manifest = write_trace_files(&w.scenario, dir)?;
    println!(
        "wrote {} traces ({} topology, seed {}) to {}",
        manifest.vehicles.len(),
        w.topology,
        cfg.scenario.seed,
        dir.display()
    );
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<(), CliError> {
    let done = execute(cfg)?;
    print!("{}", output::render_summary(&SimReport::from_rows(vec![done.analysis.row.clone()])));
    let s = &done.stats;
    let lag = s.p99_delivery_lag_s.map(|v| format!(", p99 lag {:.3} ms", v * 1e3)).unwrap_or_default();
    println!("wall {:.3} s, speedup {:.1}x{lag}; outputs in {}", s.wall_time_s, s.speedup, done.out_dir.display());
    Ok(())
}

fn cmd_rss(cfg: &RunConfig, to_file: bool) -> Result<(), CliError> {
    let m = &cfg.metrics;
    let ch = cfg.channel()?;
    let curve = rss_curve(&ch, m.rss_d_min_m, m.rss_d_max_m, m.rss_step_m).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut text = String::from("distance_m,rss_dbm\n");
    for (d, r) in &curve {
        text.push_str(&format!("{d},{r}\n"));
    }
    if to_file {
        let dir = &cfg.run.out_dir;
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let p = dir.join("rss.csv");
        fs::write(&p, text).map_err(CliError::io(p))?;
    } else {
        io::stdout().lock().write_all(text.as_bytes()).map_err(CliError::io("<stdout>"))?;
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, out: Option<&PathBuf>) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for input in &args.inputs {
        let p = if input.is_dir() { input.join(output::SUMMARY_CSV) } else { input.clone() };
        rows.extend(output::read_summary_csv(&p).map_err(CliError::Other)?);
    }
    let report = SimReport::from_rows(rows);
    let tables = output::render_tables(&report);
    print!("{tables}");
    if let Some(dir) = out {
        let (p, f) = output::create_in(dir, output::SUMMARY_CSV).map_err(CliError::io(dir))?;
        output::write_summary_csv(&report, f).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
        let p = dir.join("tables.txt");
        fs::write(&p, tables).map_err(CliError::io(p))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Cmd::Report(args) = &cli.cmd {
        return cmd_report(args, cli.out.as_ref());
    }
    let cfg = load(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.cmd {
        Cmd::Gen(_) => cmd_gen(&cfg),
        Cmd::Run(_) => cmd_run(&cfg),
        Cmd::Rss(_) => cmd_rss(&cfg, cli.out.is_some()),
        Cmd::Report(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RTCSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtcsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
