//! Vehicle mobility: synthetic topologies, trace interpolation and the
//! per-vehicle BSM generation schedule.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::rng::SimRng;
use crate::time::SimTime;

/// Default BSM generation rate.
pub const DEFAULT_TX_RATE_HZ: f64 = 10.0;
/// Generated traces carry one waypoint every 100 ms.
pub const WAYPOINTS_PER_SECOND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid topology: {0}")]
    InvalidTopology(&'static str),
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("trace for vehicle {0} has no waypoints")]
    EmptyTrace(u32),
    #[error("trace for vehicle {vehicle_id}: waypoint times not strictly increasing at index {index}")]
    NonMonotonic { vehicle_id: u32, index: usize },
    #[error("trace for vehicle {vehicle_id}: {reason}")]
    InvalidTrace { vehicle_id: u32, reason: &'static str },
    #[error("duplicate vehicle id {0}")]
    DuplicateVehicle(u32),
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x_m: 0.0, y_m: 0.0 };

    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Position { x_m, y_m }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        libm::hypot(self.x_m - other.x_m, self.y_m - other.y_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// Roundabout-style disk centered on the origin.
    Disk { radius_m: f64 },
    /// Straight road along the x axis, centered on the origin.
    Linear { length_m: f64 },
    /// Two perpendicular roads along the axes, bisecting at the origin.
    Intersection { arm_length_m: f64 },
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Disk { .. } => "disk",
            Topology::Linear { .. } => "linear",
            Topology::Intersection { .. } => "intersection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HvPlacement {
    #[default]
    Center,
    Explicit(Position),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologySpec {
    pub topology: Topology,
    /// Total vehicles including the HV.
    pub vehicle_count: u32,
    pub hv_placement: HvPlacement,
    pub tx_rate_hz: f64,
}

impl TopologySpec {
    pub fn new(topology: Topology, vehicle_count: u32) -> Self {
        TopologySpec {
            topology,
            vehicle_count,
            hv_placement: HvPlacement::Center,
            tx_rate_hz: DEFAULT_TX_RATE_HZ,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ok = match self.topology {
            Topology::Disk { radius_m } => radius_m > 0.0 && radius_m.is_finite(),
            Topology::Linear { length_m } => length_m > 0.0 && length_m.is_finite(),
            Topology::Intersection { arm_length_m } => arm_length_m > 0.0 && arm_length_m.is_finite(),
        };
        if !ok {
            return Err(ScenarioError::InvalidTopology("dimension must be positive and finite"));
        }
        if self.vehicle_count == 0 {
            return Err(ScenarioError::InvalidTopology("vehicle_count must be at least 1 (the HV)"));
        }
        if !(self.tx_rate_hz > 0.0 && self.tx_rate_hz.is_finite()) {
            return Err(ScenarioError::InvalidTopology("tx_rate_hz must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    pub heading_rad: f64,
}

impl Waypoint {
    pub fn position(&self) -> Position {
        Position::new(self.x_m, self.y_m)
    }
}

/// Position plus the kinematic fields a BSM carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Position,
    pub speed_mps: f64,
    pub heading_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub vehicle_id: u32,
    pub waypoints: Vec<Waypoint>,
    pub tx_rate_hz: f64,
    pub gen_phase_s: f64,
}

impl MobilityTrace {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let id = self.vehicle_id;
        if self.waypoints.is_empty() {
            return Err(ScenarioError::EmptyTrace(id));
        }
        if !(self.tx_rate_hz > 0.0 && self.tx_rate_hz.is_finite()) {
            return Err(ScenarioError::InvalidTrace { vehicle_id: id, reason: "tx_rate_hz must be positive" });
        }
        if !(self.gen_phase_s >= 0.0 && self.gen_phase_s < 1.0 / self.tx_rate_hz) {
            return Err(ScenarioError::InvalidTrace { vehicle_id: id, reason: "gen_phase_s outside [0, 1/tx_rate_hz)" });
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            let finite = w.time_s.is_finite() && w.x_m.is_finite() && w.y_m.is_finite() && w.speed_mps.is_finite();
            if !finite || w.time_s < 0.0 || w.speed_mps < 0.0 {
                return Err(ScenarioError::InvalidTrace { vehicle_id: id, reason: "waypoint field out of range" });
            }
            if !(0.0..TAU).contains(&w.heading_rad) {
                return Err(ScenarioError::InvalidTrace { vehicle_id: id, reason: "heading outside [0, 2pi)" });
            }
            if i > 0 && w.time_s <= self.waypoints[i - 1].time_s {
                return Err(ScenarioError::NonMonotonic { vehicle_id: id, index: i });
            }
        }
        Ok(())
    }

    /// Linear interpolation between bracketing waypoints, clamped outside
    /// the covered interval.
    pub fn position_at(&self, t: f64) -> Result<Position, ScenarioError> {
        self.kinematics_at(t).map(|k| k.position)
    }

    /// Interpolated position; speed and heading come from the waypoint at or
    /// before `t`.
    pub fn kinematics_at(&self, t: f64) -> Result<Kinematics, ScenarioError> {
        let wps = &self.waypoints;
        let first = wps.first().ok_or(ScenarioError::EmptyTrace(self.vehicle_id))?;
        let last = wps[wps.len() - 1];
        if t <= first.time_s {
            return Ok(kin(first));
        }
        if t >= last.time_s {
            return Ok(kin(&last));
        }
        // first index with time > t; 1 <= hi < len
        let hi = wps.partition_point(|w| w.time_s <= t);
        let (a, b) = (&wps[hi - 1], &wps[hi]);
        let f = (t - a.time_s) / (b.time_s - a.time_s);
        Ok(Kinematics {
            position: Position::new(a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)),
            speed_mps: a.speed_mps,
            heading_rad: a.heading_rad,
        })
    }

    pub fn period(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.tx_rate_hz)
    }

    pub fn phase(&self) -> SimTime {
        SimTime::from_secs_f64(self.gen_phase_s)
    }

    /// Generation instant of the `seq`-th packet.
    pub fn gen_time(&self, seq: u32) -> SimTime {
        self.phase() + self.period().times(seq as u64)
    }

    /// Exact generation instants in `[0, duration)`.
    pub fn generation_times(&self, duration: SimTime) -> Vec<SimTime> {
        let mut out = Vec::new();
        let mut seq = 0;
        loop {
            let t = self.gen_time(seq);
            if t >= duration {
                break;
            }
            out.push(t);
            seq += 1;
        }
        out
    }

    /// `{phase + k / rate} ∩ [0, duration)` in seconds.
    pub fn generation_schedule(&self, duration_s: f64) -> Vec<f64> {
        self.generation_times(SimTime::from_secs_f64(duration_s))
            .into_iter()
            .map(SimTime::as_secs_f64)
            .collect()
    }
}

fn kin(w: &Waypoint) -> Kinematics {
    Kinematics { position: w.position(), speed_mps: w.speed_mps, heading_rad: w.heading_rad }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub hv_trace: MobilityTrace,
    pub rv_traces: Vec<MobilityTrace>,
    pub duration_s: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::Invalid("duration_s must be positive"));
        }
        let mut ids: Vec<u32> = self.traces().map(|t| t.vehicle_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ScenarioError::DuplicateVehicle(w[0]));
        }
        self.traces().try_for_each(MobilityTrace::validate)
    }

    pub fn hv_id(&self) -> u32 {
        self.hv_trace.vehicle_id
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    /// HV first, then RVs in stored order.
    pub fn traces(&self) -> impl Iterator<Item = &MobilityTrace> {
        core::iter::once(&self.hv_trace).chain(self.rv_traces.iter())
    }

    pub fn vehicle_count(&self) -> usize {
        1 + self.rv_traces.len()
    }
}

/// Places the HV and `vehicle_count - 1` RVs uniformly on the topology and
/// moves them at constant speed. Deterministic in `seed`.
pub fn generate_topology(
    spec: &TopologySpec,
    speed_mps: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    if !(speed_mps >= 0.0 && speed_mps.is_finite()) {
        return Err(ScenarioError::InvalidTopology("speed must be non-negative"));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(ScenarioError::Invalid("duration_s must be positive"));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let rate = spec.tx_rate_hz;
    let samples = libm::ceil(duration_s * WAYPOINTS_PER_SECOND) as usize;
    let sample_times = || (0..=samples).map(|k| k as f64 / WAYPOINTS_PER_SECOND);

    let hv_pos = match spec.hv_placement {
        HvPlacement::Center => Position::ORIGIN,
        HvPlacement::Explicit(p) => p,
    };
    let hv_trace = MobilityTrace {
        vehicle_id: 0,
        waypoints: sample_times()
            .map(|t| Waypoint { time_s: t, x_m: hv_pos.x_m, y_m: hv_pos.y_m, speed_mps: 0.0, heading_rad: 0.0 })
            .collect(),
        tx_rate_hz: rate,
        gen_phase_s: draw_phase(&mut rng, rate),
    };

    let mut rv_traces = Vec::with_capacity(spec.vehicle_count as usize - 1);
    for id in 1..spec.vehicle_count {
        let motion = Motion::place(&spec.topology, speed_mps, &mut rng);
        let waypoints = sample_times().map(|t| motion.waypoint(t)).collect();
        rv_traces.push(MobilityTrace { vehicle_id: id, waypoints, tx_rate_hz: rate, gen_phase_s: draw_phase(&mut rng, rate) });
    }

    Ok(Scenario { hv_trace, rv_traces, duration_s, seed })
}

fn draw_phase(rng: &mut SimRng, rate: f64) -> f64 {
    let period = 1.0 / rate;
    // Quantize to the clock so the phase survives SimTime conversion.
    let p = SimTime::from_secs_f64(rng.unit_f64() * period).as_secs_f64();
    if p >= period { 0.0 } else { p }
}

/// Closed-form constant-speed motion on one of the topologies.
enum Motion {
    Circle { radius: f64, theta0: f64, omega: f64 },
    /// Reflecting motion along an axis-aligned road of length `len`.
    Road { len: f64, s0: f64, dir: f64, speed: f64, vertical: bool },
}

impl Motion {
    fn place(topology: &Topology, speed: f64, rng: &mut SimRng) -> Motion {
        match *topology {
            Topology::Disk { radius_m } => {
                let radius = radius_m * libm::sqrt(rng.unit_f64());
                let theta0 = rng.unit_f64() * TAU;
                Motion::Circle { radius, theta0, omega: speed / radius.max(1.0) }
            }
            Topology::Linear { length_m } => {
                let s0 = (rng.unit_f64() - 0.5) * length_m;
                let dir = if rng.coin() { 1.0 } else { -1.0 };
                Motion::Road { len: length_m, s0, dir, speed, vertical: false }
            }
            Topology::Intersection { arm_length_m } => {
                let vertical = rng.coin();
                let s0 = (rng.unit_f64() - 0.5) * arm_length_m;
                let dir = if rng.coin() { 1.0 } else { -1.0 };
                Motion::Road { len: arm_length_m, s0, dir, speed, vertical }
            }
        }
    }

    fn waypoint(&self, t: f64) -> Waypoint {
        match *self {
            Motion::Circle { radius, theta0, omega } => {
                let theta = theta0 + omega * t;
                let (s, c) = libm::sincos(theta);
                Waypoint {
                    time_s: t,
                    x_m: radius * c,
                    y_m: radius * s,
                    speed_mps: omega * radius,
                    heading_rad: wrap_angle(theta + PI / 2.0),
                }
            }
            Motion::Road { len, s0, dir, speed, vertical } => {
                let period = 2.0 * len;
                let mut p = libm::fmod(s0 + len / 2.0 + dir * speed * t, period);
                if p < 0.0 {
                    p += period;
                }
                let (offset, moving) = if p <= len { (p, dir) } else { (period - p, -dir) };
                let s = (offset - len / 2.0).clamp(-len / 2.0, len / 2.0);
                let heading = match (vertical, moving > 0.0) {
                    (false, true) => 0.0,
                    (false, false) => PI,
                    (true, true) => PI / 2.0,
                    (true, false) => 3.0 * PI / 2.0,
                };
                let (x_m, y_m) = if vertical { (0.0, s) } else { (s, 0.0) };
                Waypoint { time_s: t, x_m, y_m, speed_mps: speed, heading_rad: heading }
            }
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = libm::fmod(a, TAU);
    let w = if w < 0.0 { w + TAU } else { w };
    if w >= TAU { 0.0 } else { w }
}

/// Local equirectangular projection of `(lat, lon)` degrees about `origin`,
/// returning planar `(x east, y north)` meters.
pub fn project_equirectangular(lat_deg: f64, lon_deg: f64, origin_lat_deg: f64, origin_lon_deg: f64) -> Position {
    const EARTH_RADIUS_M: f64 = 6_371_008.8;
    let to_rad = PI / 180.0;
    let x = (lon_deg - origin_lon_deg) * to_rad * libm::cos(origin_lat_deg * to_rad) * EARTH_RADIUS_M;
    let y = (lat_deg - origin_lat_deg) * to_rad * EARTH_RADIUS_M;
    Position::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn trace(points: &[(f64, f64, f64)]) -> MobilityTrace {
        MobilityTrace {
            vehicle_id: 1,
            waypoints: points
                .iter()
                .map(|&(t, x, y)| Waypoint { time_s: t, x_m: x, y_m: y, speed_mps: 0.0, heading_rad: 0.0 })
                .collect(),
            tx_rate_hz: 10.0,
            gen_phase_s: 0.0,
        }
    }

    #[test]
    fn single_waypoint_clamps() {
        let t = trace(&[(0.0, 3.0, 4.0)]);
        assert_eq!(t.position_at(10.0).unwrap(), Position::new(3.0, 4.0));
    }

    #[test]
    fn interpolates_between_waypoints() {
        let t = trace(&[(0.0, 0.0, 0.0), (2.0, 10.0, 0.0)]);
        assert_eq!(t.position_at(1.0).unwrap(), Position::new(5.0, 0.0));
        // 1.5 / 2 of the way from 0 to 10
        assert_eq!(t.position_at(1.5).unwrap(), Position::new(7.5, 0.0));
        assert_eq!(t.position_at(-1.0).unwrap(), Position::new(0.0, 0.0));
        assert_eq!(t.position_at(9.0).unwrap(), Position::new(10.0, 0.0));
    }

    #[test]
    fn empty_trace_is_an_error() {
        let t = trace(&[]);
        assert_eq!(t.position_at(0.0), Err(ScenarioError::EmptyTrace(1)));
    }

    #[test]
    fn schedule_ten_hz_one_second() {
        let t = trace(&[(0.0, 0.0, 0.0)]);
        let s = t.generation_schedule(1.0);
        assert_eq!(s.len(), 10);
        for (k, v) in s.iter().enumerate() {
            assert!((v - k as f64 * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_single_period() {
        let mut t = trace(&[(0.0, 0.0, 0.0)]);
        t.gen_phase_s = 0.05;
        assert_eq!(t.generation_schedule(0.1), vec![0.05]);
    }

    #[test]
    fn schedule_count_matches_enumeration() {
        let mut t = trace(&[(0.0, 0.0, 0.0)]);
        t.gen_phase_s = 0.02;
        let s = t.generation_schedule(20.0);
        // enumeration oracle: count k with 0.02 + k/10 < 20
        let expected = (0..1000).filter(|k| 2 + 10 * k < 2000).count();
        assert_eq!(expected, 200);
        assert_eq!(s.len(), 200);
        assert!((s[199] - 19.92).abs() < 1e-12);
        for w in s.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_with_hv_only() {
        let spec = TopologySpec::new(Topology::Disk { radius_m: 500.0 }, 1);
        let s = generate_topology(&spec, 10.0, 20.0, 3).unwrap();
        assert!(s.rv_traces.is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn zero_speed_linear_is_static() {
        let spec = TopologySpec::new(Topology::Linear { length_m: 3000.0 }, 100);
        let s = generate_topology(&spec, 0.0, 20.0, 7).unwrap();
        assert_eq!(s.rv_traces.len(), 99);
        for tr in &s.rv_traces {
            let p0 = tr.waypoints[0].position();
            assert!(tr.waypoints.iter().all(|w| w.position() == p0));
        }
    }

    #[test]
    fn disk_positions_inside_radius() {
        let spec = TopologySpec::new(Topology::Disk { radius_m: 500.0 }, 1000);
        let s = generate_topology(&spec, 20.0, 20.0, 42).unwrap();
        s.validate().unwrap();
        for tr in &s.rv_traces {
            assert_eq!(tr.waypoints.len(), 201);
            for w in &tr.waypoints {
                assert!(w.x_m * w.x_m + w.y_m * w.y_m <= 500.0 * 500.0, "{w:?}");
            }
        }
    }

    #[test]
    fn roads_stay_on_geometry() {
        for (topo, vertical_ok) in [
            (Topology::Linear { length_m: 3000.0 }, false),
            (Topology::Intersection { arm_length_m: 1500.0 }, true),
        ] {
            let half = match topo {
                Topology::Linear { length_m } => length_m / 2.0,
                Topology::Intersection { arm_length_m } => arm_length_m / 2.0,
                _ => unreachable!(),
            };
            let s = generate_topology(&TopologySpec::new(topo, 300), 33.0, 200.0, 11).unwrap();
            s.validate().unwrap();
            for w in s.rv_traces.iter().flat_map(|t| t.waypoints.iter()) {
                let on_x = w.y_m == 0.0 && w.x_m.abs() <= half + 1e-9;
                let on_y = vertical_ok && w.x_m == 0.0 && w.y_m.abs() <= half + 1e-9;
                assert!(on_x || on_y, "{w:?}");
            }
        }
    }

    #[test]
    fn road_reflection_conserves_speed() {
        let s = generate_topology(&TopologySpec::new(Topology::Linear { length_m: 100.0 }, 5), 7.0, 60.0, 5).unwrap();
        for tr in &s.rv_traces {
            for w in tr.waypoints.windows(2) {
                let moved = w[0].position().distance_to(&w[1].position());
                // one 100 ms step can fold at an endpoint, never exceed v*dt
                assert!(moved <= 0.7 + 1e-9);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TopologySpec::new(Topology::Intersection { arm_length_m: 1500.0 }, 50);
        let a = generate_topology(&spec, 15.0, 5.0, 99).unwrap();
        let b = generate_topology(&spec, 15.0, 5.0, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_topology(&spec, 15.0, 5.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn disk_radial_distribution_is_uniform_in_area() {
        let spec = TopologySpec::new(Topology::Disk { radius_m: 500.0 }, 10_001);
        let s = generate_topology(&spec, 0.0, 0.1, 2024).unwrap();
        let mut r: Vec<f64> = s.rv_traces.iter().map(|t| t.waypoints[0].position().distance_to(&Position::ORIGIN)).collect();
        r.sort_by(f64::total_cmp);
        let n = r.len() as f64;
        let ks = r
            .iter()
            .enumerate()
            .map(|(i, &ri)| {
                let f = (ri / 500.0) * (ri / 500.0);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_topology(&TopologySpec::new(Topology::Disk { radius_m: 0.0 }, 5), 1.0, 1.0, 0).is_err());
        assert!(generate_topology(&TopologySpec::new(Topology::Linear { length_m: -1.0 }, 5), 1.0, 1.0, 0).is_err());
        assert!(generate_topology(&TopologySpec::new(Topology::Intersection { arm_length_m: 10.0 }, 0), 1.0, 1.0, 0).is_err());
        assert!(generate_topology(&TopologySpec::new(Topology::Disk { radius_m: 5.0 }, 5), -1.0, 1.0, 0).is_err());
    }

    #[test]
    fn phases_within_one_period() {
        let s = generate_topology(&TopologySpec::new(Topology::Disk { radius_m: 50.0 }, 500), 1.0, 1.0, 8).unwrap();
        for t in s.traces() {
            assert!(t.gen_phase_s >= 0.0 && t.gen_phase_s < 0.1);
        }
    }

    #[test]
    fn projection_about_origin() {
        let p = project_equirectangular(42.0, -83.0, 42.0, -83.0);
        assert_eq!(p, Position::ORIGIN);
        // one millidegree of latitude is ~111 m
        let q = project_equirectangular(42.001, -83.0, 42.0, -83.0);
        assert!((q.y_m - 111.19).abs() < 0.05);
    }
}
