//! Per-vehicle trace CSV files and the scenario manifest.
//!
//! Trace rows are `time_s,vehicle_id,x_m,y_m,speed_mps,heading_rad`; the
//! header line is optional. Numbers are written with Rust's shortest
//! round-trip formatting, so a write/parse cycle is bit-exact.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rtcsim_core::scenario::{project_equirectangular, MobilityTrace, ScenarioError, Waypoint, DEFAULT_TX_RATE_HZ};
use rtcsim_core::Scenario;

pub const TRACE_HEADER: &str = "time_s,vehicle_id,x_m,y_m,speed_mps,heading_rad";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: vehicle {vehicle_id} already has a waypoint at t={time_s}")]
    DuplicateWaypoint { line: u64, vehicle_id: u32, time_s: f64 },
    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

/// One trace per vehicle id, waypoints sorted by time. Rate and phase are
/// not part of the row format: they default to 10 Hz and 0 and are set
/// from the manifest by [`load_scenario_dir`].
pub fn parse_traces<R: Read>(reader: R) -> Result<Vec<MobilityTrace>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut rows: BTreeMap<u32, Vec<(Waypoint, u64)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 && rec.get(0) == Some("time_s") {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let (id, w) = parse_row(&rec).map_err(|msg| TraceError::Parse { line, msg })?;
        rows.entry(id).or_default().push((w, line));
    }
    let mut traces = Vec::with_capacity(rows.len());
    for (id, mut wps) in rows {
        // stable: on equal times the later line comes second
        wps.sort_by(|a, b| a.0.time_s.total_cmp(&b.0.time_s));
        for pair in wps.windows(2) {
            if pair[0].0.time_s == pair[1].0.time_s {
                let (w, line) = pair[1];
                return Err(TraceError::DuplicateWaypoint { line, vehicle_id: id, time_s: w.time_s });
            }
        }
        traces.push(MobilityTrace {
            vehicle_id: id,
            waypoints: wps.into_iter().map(|(w, _)| w).collect(),
            tx_rate_hz: DEFAULT_TX_RATE_HZ,
            gen_phase_s: 0.0,
        });
    }
    Ok(traces)
}

fn parse_row(rec: &csv::StringRecord) -> Result<(u32, Waypoint), String> {
    if rec.len() != 6 {
        return Err(format!("expected 6 fields, found {}", rec.len()));
    }
    let num = |k: usize, name: &str| -> Result<f64, String> {
        let v: f64 = rec[k].parse().map_err(|_| format!("{name}: not a number: {:?}", &rec[k]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name}: not a finite number: {:?}", &rec[k]))
        }
    };
    let id: u32 = rec[1].parse().map_err(|_| format!("vehicle_id: not a non-negative integer: {:?}", &rec[1]))?;
    let w = Waypoint {
        time_s: num(0, "time_s")?,
        x_m: num(2, "x_m")?,
        y_m: num(3, "y_m")?,
        speed_mps: num(4, "speed_mps")?,
        heading_rad: num(5, "heading_rad")?,
    };
    if w.time_s < 0.0 {
        return Err(format!("time_s must be >= 0, got {}", w.time_s));
    }
    if w.speed_mps < 0.0 {
        return Err(format!("speed_mps must be >= 0, got {}", w.speed_mps));
    }
    if !(0.0..TAU).contains(&w.heading_rad) {
        return Err(format!("heading_rad must be in [0, 2pi), got {}", w.heading_rad));
    }
    Ok((id, w))
}

pub fn parse_trace_file(path: &Path) -> Result<Vec<MobilityTrace>, TraceError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    parse_traces(io::BufReader::new(f)).map_err(|e| match e {
        TraceError::Parse { line, msg } => TraceError::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

pub fn write_trace<W: Write>(trace: &MobilityTrace, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for p in &trace.waypoints {
        writeln!(w, "{},{},{},{},{},{}", p.time_s, trace.vehicle_id, p.x_m, p.y_m, p.speed_mps, p.heading_rad)?;
    }
    w.flush()
}

pub fn trace_file_name(vehicle_id: u32) -> String {
    format!("vehicle_{vehicle_id}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// `x_m`, `y_m` are planar meters.
    #[default]
    Planar,
    /// `x_m` holds longitude and `y_m` latitude in degrees; projected about
    /// the HV's first waypoint on load.
    Geodetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVehicle {
    pub vehicle_id: u32,
    pub file: String,
    pub tx_rate_hz: f64,
    pub gen_phase_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub hv_id: u32,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub coordinates: Coordinates,
    pub vehicles: Vec<ManifestVehicle>,
}

/// One CSV per vehicle plus `manifest.json`.
pub fn write_trace_files(scenario: &Scenario, dir: &Path) -> Result<Manifest, TraceError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut vehicles = Vec::with_capacity(scenario.vehicle_count());
    for t in scenario.traces() {
        let name = trace_file_name(t.vehicle_id);
        let path = dir.join(&name);
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        write_trace(t, BufWriter::new(f)).map_err(io_err(&path))?;
        vehicles.push(ManifestVehicle { vehicle_id: t.vehicle_id, file: name, tx_rate_hz: t.tx_rate_hz, gen_phase_s: t.gen_phase_s });
    }
    let manifest = Manifest {
        hv_id: scenario.hv_id(),
        duration_s: scenario.duration_s,
        seed: scenario.seed,
        coordinates: Coordinates::Planar,
        vehicles,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, TraceError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| TraceError::Manifest { path, msg: e.to_string() })
}

pub fn load_scenario_dir(dir: &Path) -> Result<Scenario, TraceError> {
    let manifest = read_manifest(dir)?;
    let mpath = dir.join(MANIFEST_FILE);
    let mut by_id = BTreeMap::new();
    for v in &manifest.vehicles {
        let path = dir.join(&v.file);
        for mut t in parse_trace_file(&path)? {
            if t.vehicle_id != v.vehicle_id {
                return Err(TraceError::Manifest {
                    path: mpath.clone(),
                    msg: format!("{} holds vehicle {}, manifest says {}", v.file, t.vehicle_id, v.vehicle_id),
                });
            }
            t.tx_rate_hz = v.tx_rate_hz;
            t.gen_phase_s = v.gen_phase_s;
            if by_id.insert(t.vehicle_id, t).is_some() {
                return Err(ScenarioError::DuplicateVehicle(v.vehicle_id).into());
            }
        }
    }
    let hv_trace = by_id.remove(&manifest.hv_id).ok_or_else(|| TraceError::Manifest {
        path: mpath.clone(),
        msg: format!("no trace for hv_id {}", manifest.hv_id),
    })?;
    let mut scenario = Scenario {
        hv_trace,
        rv_traces: by_id.into_values().collect(),
        duration_s: manifest.duration_s,
        seed: manifest.seed,
    };
    if manifest.coordinates == Coordinates::Geodetic {
        project(&mut scenario);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn project(s: &mut Scenario) {
    let Some(origin) = s.hv_trace.waypoints.first().copied() else { return };
    let (lat0, lon0) = (origin.y_m, origin.x_m);
    for t in std::iter::once(&mut s.hv_trace).chain(s.rv_traces.iter_mut()) {
        for w in &mut t.waypoints {
            let p = project_equirectangular(w.y_m, w.x_m, lat0, lon0);
            w.x_m = p.x_m;
            w.y_m = p.y_m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rtcsim_core::scenario::generate_topology;
    use rtcsim_core::{Topology, TopologySpec};

    #[test]
    fn empty_input_has_no_traces() {
        assert!(parse_traces("".as_bytes()).unwrap().is_empty());
        assert!(parse_traces(format!("{TRACE_HEADER}\n").as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn rows_group_by_vehicle() {
        let t = parse_traces("0.1,5,1,0,10,0\n0.0,5,0,0,10,0\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].vehicle_id, 5);
        assert_eq!(t[0].waypoints.len(), 2);
        assert_eq!(t[0].waypoints[0].time_s, 0.0);
    }

    #[test]
    fn nan_names_its_line() {
        match parse_traces("0.1,5,NaN,0,10,0\n".as_bytes()) {
            Err(TraceError::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("x_m"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let text = format!("{TRACE_HEADER}\n0,1,0,0,0,0\n0.1,1,0,0,0,7\n");
        assert!(matches!(parse_traces(text.as_bytes()), Err(TraceError::Parse { line: 3, .. })));
        assert!(matches!(parse_traces("0,1,0,0\n".as_bytes()), Err(TraceError::Parse { line: 1, .. })));
        assert!(matches!(parse_traces("0,-1,0,0,0,0\n".as_bytes()), Err(TraceError::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let r = parse_traces("0.5,2,0,0,0,0\n0.1,2,0,0,0,0\n0.5,2,1,0,0,0\n".as_bytes());
        assert!(matches!(r, Err(TraceError::DuplicateWaypoint { line: 3, vehicle_id: 2, .. })), "{r:?}");
    }

    #[test]
    fn write_then_parse_is_bit_exact() {
        let s = generate_topology(&TopologySpec::new(Topology::Disk { radius_m: 500.0 }, 100), 13.7, 2.0, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_trace_files(&s, dir.path()).unwrap();
        assert_eq!(m.vehicles.len(), 100);
        let back = load_scenario_dir(dir.path()).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.traces().zip(s.traces()) {
            for (p, q) in a.waypoints.iter().zip(&b.waypoints) {
                assert_eq!(p.x_m.to_bits(), q.x_m.to_bits());
                assert_eq!(p.heading_rad.to_bits(), q.heading_rad.to_bits());
            }
        }
    }

    #[test]
    fn hv_only_writes_one_file() {
        let s = generate_topology(&TopologySpec::new(Topology::Disk { radius_m: 500.0 }, 1), 0.0, 1.0, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_trace_files(&s, dir.path()).unwrap();
        let n = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(n, 2);
        assert!(dir.path().join("vehicle_0.csv").exists());
    }

    #[test]
    fn geodetic_logs_are_projected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("hv.csv"), "0,0,-83.9,42.6,0,0\n1,0,-83.9,42.6,0,0\n").unwrap();
        fs::write(dir.path().join("rv.csv"), "0,1,-83.9,42.601,0,0\n1,1,-83.9,42.601,0,0\n").unwrap();
        let m = Manifest {
            hv_id: 0,
            duration_s: 1.0,
            seed: 1,
            coordinates: Coordinates::Geodetic,
            vehicles: vec![
                ManifestVehicle { vehicle_id: 0, file: "hv.csv".into(), tx_rate_hz: 10.0, gen_phase_s: 0.0 },
                ManifestVehicle { vehicle_id: 1, file: "rv.csv".into(), tx_rate_hz: 10.0, gen_phase_s: 0.05 },
            ],
        };
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let s = load_scenario_dir(dir.path()).unwrap();
        assert_eq!(s.hv_trace.waypoints[0].x_m, 0.0);
        let north = s.rv_traces[0].waypoints[0].y_m;
        assert!((north - 111.2).abs() < 0.5, "{north}");
        assert_eq!(s.rv_traces[0].gen_phase_s, 0.05);
    }

    #[test]
    fn manifest_id_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "0,3,0,0,0,0\n").unwrap();
        let m = Manifest {
            hv_id: 0,
            duration_s: 1.0,
            seed: 1,
            coordinates: Coordinates::Planar,
            vehicles: vec![ManifestVehicle { vehicle_id: 0, file: "a.csv".into(), tx_rate_hz: 10.0, gen_phase_s: 0.0 }],
        };
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_scenario_dir(dir.path()), Err(TraceError::Manifest { .. })));
    }
}
