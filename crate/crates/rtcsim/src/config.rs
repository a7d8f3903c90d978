//! Run configuration: one TOML document with `--set section.key=value`
//! overrides on top.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rtcsim_core::mac::PropagationDelay;
use rtcsim_core::scenario::HvPlacement;
use rtcsim_core::{Channel, MacParams, PathLossModel, Position, RadioConfig, SimTime, Topology, TopologySpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override {0:?}: expected section.key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Disk,
    Linear,
    Intersection,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Disk => "disk",
            TopologyKind::Linear => "linear",
            TopologyKind::Intersection => "intersection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    ThreeLogDistance,
    Fowlerville,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Batch,
    Realtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdMode {
    Fixed,
    SpeedOfLight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub topology: TopologyKind,
    pub radius_m: f64,
    pub length_m: f64,
    pub arm_length_m: f64,
    /// Including the HV.
    pub vehicles: u32,
    pub speed_mps: f64,
    /// `[x, y]`; the HV sits at the origin when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hv_position: Option<[f64; 2]>,
    pub tx_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Load traces from a directory written by `gen` instead of generating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            topology: TopologyKind::Disk,
            radius_m: 500.0,
            length_m: 3000.0,
            arm_length_m: 1500.0,
            vehicles: 100,
            speed_mps: 20.0,
            hv_position: None,
            tx_rate_hz: 10.0,
            duration_s: 20.0,
            seed: 42,
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeLogSection {
    pub d0_m: f64,
    pub d1_m: f64,
    pub d2_m: f64,
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub ref_loss_db: f64,
}

impl Default for ThreeLogSection {
    fn default() -> Self {
        match PathLossModel::three_log_distance_default() {
            PathLossModel::ThreeLogDistance { d0_m, d1_m, d2_m, n0, n1, n2, ref_loss_db } => {
                ThreeLogSection { d0_m, d1_m, d2_m, n0, n1, n2, ref_loss_db }
            }
            PathLossModel::Fowlerville { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FowlervilleSection {
    pub boundaries_m: Vec<f64>,
    pub exponents: Vec<f64>,
    pub ref_loss_db: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_seed: u64,
}

impl Default for FowlervilleSection {
    fn default() -> Self {
        match PathLossModel::fowlerville_default() {
            PathLossModel::Fowlerville { boundaries_m, exponents, ref_loss_db, shadowing_sigma_db, shadowing_seed } => {
                FowlervilleSection { boundaries_m, exponents, ref_loss_db, shadowing_sigma_db, shadowing_seed }
            }
            PathLossModel::ThreeLogDistance { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub profile: ProfileName,
    pub three_log_distance: ThreeLogSection,
    pub fowlerville: FowlervilleSection,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            profile: ProfileName::ThreeLogDistance,
            three_log_distance: ThreeLogSection::default(),
            fowlerville: FowlervilleSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub tx_power_dbm: f64,
    pub cs_threshold_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub capture_margin_db: f64,
    pub noise_floor_dbm: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        let r = RadioConfig::default();
        RadioSection {
            tx_power_dbm: r.tx_power_dbm,
            cs_threshold_dbm: r.cs_threshold_dbm,
            rx_sensitivity_dbm: r.rx_sensitivity_dbm,
            capture_margin_db: r.capture_margin_db,
            noise_floor_dbm: r.noise_floor_dbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacSection {
    pub slot_time_us: f64,
    pub sifs_us: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub tx_interval_us: f64,
    pub propagation_delay: PdMode,
    /// Used when `propagation_delay = "fixed"`.
    pub propagation_delay_us: f64,
    pub hv_transmits: bool,
}

impl Default for MacSection {
    fn default() -> Self {
        MacSection {
            slot_time_us: MacParams::DEFAULT_SLOT_TIME.as_us_f64(),
            sifs_us: MacParams::DEFAULT_SIFS.as_us_f64(),
            cw_min: 0,
            cw_max: 15,
            tx_interval_us: MacParams::DEFAULT_TX_INTERVAL.as_us_f64(),
            propagation_delay: PdMode::Fixed,
            propagation_delay_us: MacParams::DEFAULT_PD.as_us_f64(),
            hv_transmits: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit_udp: Option<SocketAddr>,
    /// Realtime without a UDP target: pace and discard.
    pub null_sink: bool,
    /// Events the producer may run ahead of the wall clock.
    pub buffer_events: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { mode: Mode::Batch, out_dir: PathBuf::from("out"), emit_udp: None, null_sink: false, buffer_events: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub cbp_window_s: f64,
    pub per_bin_m: f64,
    pub per_max_m: f64,
    pub rss_d_min_m: f64,
    pub rss_d_max_m: f64,
    pub rss_step_m: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            cbp_window_s: 0.1,
            per_bin_m: 25.0,
            per_max_m: 400.0,
            rss_d_min_m: 1.0,
            rss_d_max_m: 1000.0,
            rss_step_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    pub radio: RadioSection,
    pub mac: MacSection,
    pub run: RunSection,
    pub metrics: MetricsSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let s = &self.scenario;
        if s.trace_dir.is_none() {
            self.topology_spec()?;
        }
        if !(s.speed_mps >= 0.0 && s.speed_mps.is_finite()) {
            return bad(format!("scenario.speed_mps must be >= 0, got {}", s.speed_mps));
        }
        if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
            return bad(format!("scenario.duration_s must be > 0, got {}", s.duration_s));
        }
        self.channel()?;
        self.mac_params()?;
        let m = &self.metrics;
        if !(m.cbp_window_s > 0.0 && m.per_bin_m > 0.0 && m.per_max_m > 0.0 && m.rss_step_m > 0.0) {
            return bad("metrics windows, bins and steps must be positive".into());
        }
        if !(m.rss_d_min_m >= 0.0 && m.rss_d_max_m > m.rss_d_min_m) {
            return bad("metrics.rss_d_max_m must exceed rss_d_min_m >= 0".into());
        }
        if self.run.mode == Mode::Realtime && self.run.emit_udp.is_none() && !self.run.null_sink {
            return bad("realtime mode needs run.emit_udp or run.null_sink = true".into());
        }
        if self.run.buffer_events == 0 {
            return bad("run.buffer_events must be positive".into());
        }
        Ok(())
    }

    pub fn topology(&self) -> Topology {
        let s = &self.scenario;
        match s.topology {
            TopologyKind::Disk => Topology::Disk { radius_m: s.radius_m },
            TopologyKind::Linear => Topology::Linear { length_m: s.length_m },
            TopologyKind::Intersection => Topology::Intersection { arm_length_m: s.arm_length_m },
        }
    }

    pub fn topology_spec(&self) -> Result<TopologySpec, ConfigError> {
        let s = &self.scenario;
        let mut spec = TopologySpec::new(self.topology(), s.vehicles);
        spec.tx_rate_hz = s.tx_rate_hz;
        if let Some([x, y]) = s.hv_position {
            spec.hv_placement = HvPlacement::Explicit(Position::new(x, y));
        }
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn path_loss(&self) -> PathLossModel {
        match self.channel.profile {
            ProfileName::ThreeLogDistance => {
                let t = &self.channel.three_log_distance;
                PathLossModel::ThreeLogDistance {
                    d0_m: t.d0_m,
                    d1_m: t.d1_m,
                    d2_m: t.d2_m,
                    n0: t.n0,
                    n1: t.n1,
                    n2: t.n2,
                    ref_loss_db: t.ref_loss_db,
                }
            }
            ProfileName::Fowlerville => {
                let f = &self.channel.fowlerville;
                PathLossModel::Fowlerville {
                    boundaries_m: f.boundaries_m.clone(),
                    exponents: f.exponents.clone(),
                    ref_loss_db: f.ref_loss_db,
                    shadowing_sigma_db: f.shadowing_sigma_db,
                    shadowing_seed: f.shadowing_seed,
                }
            }
        }
    }

    pub fn radio(&self) -> RadioConfig {
        let r = &self.radio;
        RadioConfig {
            tx_power_dbm: r.tx_power_dbm,
            cs_threshold_dbm: r.cs_threshold_dbm,
            rx_sensitivity_dbm: r.rx_sensitivity_dbm,
            capture_margin_db: r.capture_margin_db,
            noise_floor_dbm: r.noise_floor_dbm,
        }
    }

    pub fn channel(&self) -> Result<Channel, ConfigError> {
        Channel::new(self.path_loss(), self.radio()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn mac_params(&self) -> Result<MacParams, ConfigError> {
        let m = &self.mac;
        let us = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(SimTime::from_us_f64(v))
            } else {
                Err(ConfigError::Invalid(format!("mac.{name} must be a non-negative number of microseconds")))
            }
        };
        let pd = match m.propagation_delay {
            PdMode::Fixed => PropagationDelay::Fixed(us("propagation_delay_us", m.propagation_delay_us)?),
            PdMode::SpeedOfLight => PropagationDelay::PerPairSpeedOfLight,
        };
        MacParams::new(
            us("slot_time_us", m.slot_time_us)?,
            us("sifs_us", m.sifs_us)?,
            m.cw_min,
            m.cw_max,
            us("tx_interval_us", m.tx_interval_us)?,
            pd,
            self.scenario.tx_rate_hz,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn profile_name(&self) -> &'static str {
        self.path_loss().name()
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
