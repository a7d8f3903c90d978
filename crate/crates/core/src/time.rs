//! Simulation clock.
//!
//! All channel timing is integer picoseconds so band boundaries (PD, packet
//! duration, AIFS) compare exactly and event logs are reproducible bit for
//! bit across platforms.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};

pub const PS_PER_SEC: u64 = 1_000_000_000_000;
pub const PS_PER_US: u64 = 1_000_000;

/// A point on (or span of) the simulated timeline, in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000_000)
    }

    /// Rounds to the nearest picosecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime(libm::round(secs * PS_PER_SEC as f64) as u64)
    }

    pub fn from_us_f64(us: f64) -> Self {
        Self::from_secs_f64(us * 1e-6)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        // Split to keep full precision for large values.
        let whole = (self.0 / PS_PER_SEC) as f64;
        let frac = (self.0 % PS_PER_SEC) as f64 / PS_PER_SEC as f64;
        whole + frac
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    /// `self` repeated `n` times (slot arithmetic).
    pub fn times(self, n: u64) -> SimTime {
        SimTime(self.0.saturating_mul(n))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Seconds with all twelve fractional digits, e.g. `0.000440000000`.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:012}", self.0 / PS_PER_SEC, self.0 % PS_PER_SEC)
    }
}
