use crate::scenario::Position;
use crate::time::SimTime;

use super::MacError;

pub const SPEED_OF_LIGHT_MPS: f64 = 2.998e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationDelay {
    Fixed(SimTime),
    /// distance / c for each transmitter pair.
    PerPairSpeedOfLight,
}

/// 802.11p channel-access timing. `aifs` is always `sifs + 2 * slot_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacParams {
    slot_time: SimTime,
    sifs: SimTime,
    aifs: SimTime,
    cw_min: u32,
    cw_max: u32,
    tx_interval: SimTime,
    pd_mode: PropagationDelay,
    tx_rate_hz: f64,
}

impl MacParams {
    pub const DEFAULT_SLOT_TIME: SimTime = SimTime::from_us(13);
    pub const DEFAULT_SIFS: SimTime = SimTime::from_us(32);
    /// 300-byte BSM plus 28 bytes of MAC header and FCS at 6 Mb/s in a
    /// 10 MHz channel: 40 us of preamble and SIGNAL, then 56 OFDM symbols.
    pub const DEFAULT_TX_INTERVAL: SimTime = SimTime::from_us(488);
    pub const DEFAULT_PD: SimTime = SimTime::from_us(3);

    pub fn new(
        slot_time: SimTime,
        sifs: SimTime,
        cw_min: u32,
        cw_max: u32,
        tx_interval: SimTime,
        pd_mode: PropagationDelay,
        tx_rate_hz: f64,
    ) -> Result<Self, MacError> {
        if slot_time == SimTime::ZERO {
            return Err(MacError::InvalidParams("slot_time must be positive"));
        }
        if tx_interval == SimTime::ZERO {
            return Err(MacError::InvalidParams("tx_interval must be positive"));
        }
        if cw_min > cw_max {
            return Err(MacError::InvalidParams("cw_min must not exceed cw_max"));
        }
        if let PropagationDelay::Fixed(pd) = pd_mode {
            if pd >= tx_interval {
                return Err(MacError::InvalidParams("propagation delay must be shorter than tx_interval"));
            }
        }
        if !(tx_rate_hz > 0.0 && tx_rate_hz.is_finite()) {
            return Err(MacError::InvalidParams("tx_rate_hz must be positive"));
        }
        Ok(MacParams {
            slot_time,
            sifs,
            aifs: sifs + slot_time.times(2),
            cw_min,
            cw_max,
            tx_interval,
            pd_mode,
            tx_rate_hz,
        })
    }

    pub fn slot_time(&self) -> SimTime {
        self.slot_time
    }
    pub fn sifs(&self) -> SimTime {
        self.sifs
    }
    pub fn aifs(&self) -> SimTime {
        self.aifs
    }
    pub fn cw_min(&self) -> u32 {
        self.cw_min
    }
    pub fn cw_max(&self) -> u32 {
        self.cw_max
    }
    pub fn tx_interval(&self) -> SimTime {
        self.tx_interval
    }
    pub fn pd_mode(&self) -> PropagationDelay {
        self.pd_mode
    }
    pub fn tx_rate_hz(&self) -> f64 {
        self.tx_rate_hz
    }

    /// Propagation delay between two transmitters. Per-pair delays are capped
    /// just below `tx_interval` to keep the band ordering intact.
    pub fn propagation_delay(&self, a: &Position, b: &Position) -> SimTime {
        match self.pd_mode {
            PropagationDelay::Fixed(pd) => pd,
            PropagationDelay::PerPairSpeedOfLight => {
                let pd = SimTime::from_secs_f64(a.distance_to(b) / SPEED_OF_LIGHT_MPS);
                pd.min(SimTime::from_ps(self.tx_interval.as_ps() - 1))
            }
        }
    }
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams::new(
            Self::DEFAULT_SLOT_TIME,
            Self::DEFAULT_SIFS,
            0,
            15,
            Self::DEFAULT_TX_INTERVAL,
            PropagationDelay::Fixed(Self::DEFAULT_PD),
            10.0,
        )
        .expect("default MAC parameters are valid")
    }
}
