//! Path loss, received signal strength, carrier sensing and capture.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use thiserror::Error;

use crate::rng::mix64;
use crate::scenario::Position;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("invalid path loss model: {0}")]
    InvalidModel(&'static str),
    #[error("invalid radio config: {0}")]
    InvalidRadio(&'static str),
    #[error("capture resolution needs at least one arrival")]
    NoArrivals,
}

/// Distance-to-attenuation curve.
///
/// Both kinds are piecewise log-distance: below the first breakpoint the
/// loss is `ref_loss_db`; in segment `k` (from breakpoint `b_k`) the loss
/// grows by `10 * n_k * log10(d / b_k)` on top of the loss accumulated at
/// `b_k`. `Fowlerville` adds a frozen lognormal shadowing term that is a
/// deterministic function of `(shadowing_seed, floor(d))`.
#[derive(Debug, Clone, PartialEq)]
pub enum PathLossModel {
    ThreeLogDistance {
        d0_m: f64,
        d1_m: f64,
        d2_m: f64,
        n0: f64,
        n1: f64,
        n2: f64,
        ref_loss_db: f64,
    },
    Fowlerville {
        boundaries_m: Vec<f64>,
        exponents: Vec<f64>,
        ref_loss_db: f64,
        shadowing_sigma_db: f64,
        shadowing_seed: u64,
    },
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::three_log_distance_default()
    }
}

impl PathLossModel {
    pub fn three_log_distance_default() -> Self {
        PathLossModel::ThreeLogDistance {
            d0_m: 1.0,
            d1_m: 200.0,
            d2_m: 500.0,
            n0: 1.9,
            n1: 3.8,
            n2: 3.8,
            ref_loss_db: 46.6777,
        }
    }

    /// Bundled field-calibrated profile: free-space reference at 1 m for
    /// 5.9 GHz, a near-field segment at exponent 2.0, steeper segments past
    /// 100 m and 400 m, and 1 dB frozen shadowing. Engineering choice; the
    /// model has no published constants.
    pub fn fowlerville_default() -> Self {
        PathLossModel::Fowlerville {
            boundaries_m: alloc::vec![1.0, 100.0, 400.0],
            exponents: alloc::vec![2.0, 2.6, 3.3],
            ref_loss_db: 47.86,
            shadowing_sigma_db: 1.0,
            shadowing_seed: 0x464F_574C,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PathLossModel::ThreeLogDistance { .. } => "three_log_distance",
            PathLossModel::Fowlerville { .. } => "fowlerville",
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            PathLossModel::ThreeLogDistance { d0_m, d1_m, d2_m, n0, n1, n2, ref_loss_db } => {
                if !(*d0_m > 0.0 && d0_m < d1_m && d1_m < d2_m && d2_m.is_finite()) {
                    return Err(ChannelError::InvalidModel("need 0 < d0 < d1 < d2"));
                }
                if !([n0, n1, n2].iter().all(|n| **n >= 0.0 && n.is_finite())) {
                    return Err(ChannelError::InvalidModel("exponents must be non-negative"));
                }
                if !(*ref_loss_db >= 0.0 && ref_loss_db.is_finite()) {
                    return Err(ChannelError::InvalidModel("ref_loss_db must be non-negative"));
                }
            }
            PathLossModel::Fowlerville { boundaries_m, exponents, ref_loss_db, shadowing_sigma_db, .. } => {
                if boundaries_m.is_empty() || boundaries_m.len() != exponents.len() {
                    return Err(ChannelError::InvalidModel("need one exponent per breakpoint"));
                }
                if !(boundaries_m[0] > 0.0 && boundaries_m.windows(2).all(|w| w[0] < w[1])) {
                    return Err(ChannelError::InvalidModel("breakpoints must be positive and increasing"));
                }
                if !boundaries_m.iter().all(|b| b.is_finite()) {
                    return Err(ChannelError::InvalidModel("breakpoints must be finite"));
                }
                if !exponents.iter().all(|n| *n >= 0.0 && n.is_finite()) {
                    return Err(ChannelError::InvalidModel("exponents must be non-negative"));
                }
                if !(*ref_loss_db >= 0.0 && ref_loss_db.is_finite()) {
                    return Err(ChannelError::InvalidModel("ref_loss_db must be non-negative"));
                }
                if !(*shadowing_sigma_db >= 0.0 && shadowing_sigma_db.is_finite()) {
                    return Err(ChannelError::InvalidModel("shadowing sigma must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn path_loss_db(&self, d: f64) -> Result<f64, ChannelError> {
        if d.is_nan() || d < 0.0 {
            return Err(ChannelError::NegativeDistance(d));
        }
        Ok(self.loss_unchecked(d))
    }

    pub(crate) fn loss_unchecked(&self, d: f64) -> f64 {
        match self {
            PathLossModel::ThreeLogDistance { d0_m, d1_m, d2_m, n0, n1, n2, ref_loss_db } => {
                piecewise_loss(&[*d0_m, *d1_m, *d2_m], &[*n0, *n1, *n2], *ref_loss_db, d)
            }
            PathLossModel::Fowlerville { boundaries_m, exponents, ref_loss_db, shadowing_sigma_db, shadowing_seed } => {
                let base = piecewise_loss(boundaries_m, exponents, *ref_loss_db, d);
                if *shadowing_sigma_db == 0.0 {
                    base
                } else {
                    base + shadowing_sigma_db * frozen_normal(*shadowing_seed, libm::floor(d) as u64)
                }
            }
        }
    }
}

fn piecewise_loss(boundaries: &[f64], exponents: &[f64], ref_loss_db: f64, d: f64) -> f64 {
    let mut loss = ref_loss_db;
    for (k, (&b, &n)) in boundaries.iter().zip(exponents).enumerate() {
        if d < b {
            break;
        }
        let seg_end = boundaries.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let upto = if d < seg_end { d } else { seg_end };
        loss += 10.0 * n * libm::log10(upto / b);
    }
    loss
}

/// Standard normal draw keyed by `(seed, quantum)` via Box-Muller over a
/// SplitMix64 hash.
fn frozen_normal(seed: u64, quantum: u64) -> f64 {
    let h1 = mix64(seed ^ mix64(quantum));
    let h2 = mix64(h1);
    // (0, 1] so ln is finite
    let u1 = ((h1 >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (h2 >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(TAU * u2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub cs_threshold_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub capture_margin_db: f64,
    pub noise_floor_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_dbm: 20.0,
            cs_threshold_dbm: -94.0,
            rx_sensitivity_dbm: -91.0,
            capture_margin_db: 10.0,
            noise_floor_dbm: -99.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let all_finite = [
            self.tx_power_dbm,
            self.cs_threshold_dbm,
            self.rx_sensitivity_dbm,
            self.capture_margin_db,
            self.noise_floor_dbm,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(ChannelError::InvalidRadio("values must be finite"));
        }
        if self.rx_sensitivity_dbm < self.cs_threshold_dbm {
            return Err(ChannelError::InvalidRadio("rx_sensitivity must be >= cs_threshold"));
        }
        if self.capture_margin_db < 0.0 {
            return Err(ChannelError::InvalidRadio("capture_margin must be >= 0"));
        }
        Ok(())
    }
}

/// A path-loss model together with the radio thresholds evaluated against it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Channel {
    pub model: PathLossModel,
    pub radio: RadioConfig,
}

impl Channel {
    pub fn new(model: PathLossModel, radio: RadioConfig) -> Result<Self, ChannelError> {
        model.validate()?;
        radio.validate()?;
        Ok(Channel { model, radio })
    }

    pub fn rss_dbm(&self, d: f64) -> Result<f64, ChannelError> {
        rss_dbm(&self.radio, &self.model, d)
    }

    pub fn rss_between(&self, a: &Position, b: &Position) -> f64 {
        self.radio.tx_power_dbm - self.model.loss_unchecked(a.distance_to(b))
    }

    pub fn is_hidden(&self, a: &Position, b: &Position) -> bool {
        self.rss_between(a, b) < self.radio.cs_threshold_dbm
    }
}

pub fn path_loss_db(model: &PathLossModel, d: f64) -> Result<f64, ChannelError> {
    model.path_loss_db(d)
}

pub fn rss_dbm(radio: &RadioConfig, model: &PathLossModel, d: f64) -> Result<f64, ChannelError> {
    Ok(radio.tx_power_dbm - model.path_loss_db(d)?)
}

/// `true` when B cannot carrier-sense A's transmission. Depends on distance
/// only, so it is symmetric.
pub fn is_hidden(radio: &RadioConfig, model: &PathLossModel, a: &Position, b: &Position) -> bool {
    radio.tx_power_dbm - model.loss_unchecked(a.distance_to(b)) < radio.cs_threshold_dbm
}

/// Picks the packet that survives a set of temporally overlapping arrivals.
///
/// Returns the index of the winner: the strongest arrival, provided it is
/// decodable and clears the second strongest (the noise floor when alone) by
/// the capture margin. Exact ties in the strongest RSS have no winner.
pub fn resolve_capture<T>(radio: &RadioConfig, arrivals: &[(T, f64)]) -> Result<Option<usize>, ChannelError> {
    if arrivals.is_empty() {
        return Err(ChannelError::NoArrivals);
    }
    let mut best = 0;
    let mut second = f64::NEG_INFINITY;
    for (i, (_, rss)) in arrivals.iter().enumerate().skip(1) {
        let top = arrivals[best].1;
        if *rss > top {
            second = top;
            best = i;
        } else if *rss > second {
            second = *rss;
        }
    }
    let s1 = arrivals[best].1;
    let s2 = if arrivals.len() == 1 { radio.noise_floor_dbm } else { second };
    if s1 == s2 && arrivals.len() > 1 {
        return Ok(None);
    }
    if s1 >= radio.rx_sensitivity_dbm && s1 - s2 >= radio.capture_margin_db {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn t_model(ref_loss: f64) -> PathLossModel {
        PathLossModel::ThreeLogDistance { d0_m: 1.0, d1_m: 200.0, d2_m: 500.0, n0: 1.9, n1: 3.8, n2: 3.8, ref_loss_db: ref_loss }
    }

    #[test]
    fn loss_at_reference_distance() {
        assert_eq!(t_model(46.67).path_loss_db(1.0).unwrap(), 46.67);
        assert_eq!(t_model(46.67).path_loss_db(0.0).unwrap(), 46.67);
    }

    #[test]
    fn loss_in_first_slope_region() {
        // 46.67 + 10 * 1.9 * log10(100) = 46.67 + 38
        let l = t_model(46.67).path_loss_db(100.0).unwrap();
        assert!((l - 84.67).abs() < 1e-9, "{l}");
    }

    #[test]
    fn continuous_at_breakpoints() {
        let m = PathLossModel::three_log_distance_default();
        for b in [1.0, 200.0, 500.0] {
            let lo = m.path_loss_db(b - 1e-9).unwrap();
            let hi = m.path_loss_db(b + 1e-9).unwrap();
            assert!((hi - lo).abs() < 1e-6, "jump at {b}: {lo} vs {hi}");
        }
    }

    #[test]
    fn negative_distance_rejected() {
        assert!(matches!(t_model(1.0).path_loss_db(-1.0), Err(ChannelError::NegativeDistance(_))));
        assert!(t_model(1.0).path_loss_db(f64::NAN).is_err());
    }

    #[test]
    fn rss_is_tx_minus_loss() {
        let r = RadioConfig::default();
        let v = rss_dbm(&r, &t_model(46.67), 1.0).unwrap();
        assert!((v - -26.67).abs() < 1e-12);
    }

    #[test]
    fn lossless_model_is_identity() {
        let m = PathLossModel::ThreeLogDistance { d0_m: 1.0, d1_m: 2.0, d2_m: 3.0, n0: 0.0, n1: 0.0, n2: 0.0, ref_loss_db: 0.0 };
        let r = RadioConfig::default();
        for d in [0.0, 1.0, 10.0, 1e4] {
            assert_eq!(rss_dbm(&r, &m, d).unwrap(), 20.0);
        }
    }

    #[test]
    fn coincident_positions_not_hidden() {
        let ch = Channel::default();
        assert!(!ch.is_hidden(&Position::ORIGIN, &Position::ORIGIN));
        assert!(ch.is_hidden(&Position::ORIGIN, &Position::new(5000.0, 0.0)));
    }

    /// Closed-form inverse of the piecewise curve: distance where loss
    /// reaches `target`.
    fn invert_three_log(target: f64) -> f64 {
        let (b, n) = ([1.0, 200.0, 500.0], [1.9, 3.8, 3.8]);
        let l0 = 46.6777;
        let at = |k: usize| -> f64 {
            let mut l = l0;
            for j in 0..k {
                l += 10.0 * n[j] * libm::log10(b[j + 1] / b[j]);
            }
            l
        };
        let k = (0..3).rev().find(|&k| at(k) <= target).unwrap();
        b[k] * libm::pow(10.0, (target - at(k)) / (10.0 * n[k]))
    }

    #[test]
    fn hidden_boundary_matches_analytic_inversion() {
        let ch = Channel::default();
        // hidden iff loss > tx - cs = 114 dB
        let analytic = invert_three_log(20.0 - -94.0);
        let (mut lo, mut hi) = (1.0, 5000.0);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if ch.rss_dbm(mid).unwrap() < -94.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((lo - analytic).abs() <= 1e-6, "bisection {lo} analytic {analytic}");
        let a = Position::ORIGIN;
        assert!(!ch.is_hidden(&a, &Position::new(analytic - 1e-6, 0.0)));
        assert!(ch.is_hidden(&a, &Position::new(analytic + 1e-6, 0.0)));
    }

    #[test]
    fn capture_single_arrival() {
        let r = RadioConfig::default();
        assert_eq!(resolve_capture(&r, &[("a", -80.0)]).unwrap(), Some(0));
        assert_eq!(resolve_capture(&r, &[("a", -92.0)]).unwrap(), None);
    }

    #[test]
    fn capture_tie_destroys_both() {
        let r = RadioConfig::default();
        assert_eq!(resolve_capture(&r, &[("a", -70.0), ("b", -70.0)]).unwrap(), None);
        let zero_margin = RadioConfig { capture_margin_db: 0.0, ..r };
        assert_eq!(resolve_capture(&zero_margin, &[("a", -70.0), ("b", -70.0)]).unwrap(), None);
    }

    #[test]
    fn capture_with_margin() {
        let r = RadioConfig::default();
        // -60 - (-75) = 15 dB >= 10 dB
        assert_eq!(resolve_capture(&r, &[("far", -75.0), ("near", -60.0)]).unwrap(), Some(1));
        // 5 dB gap is not enough
        assert_eq!(resolve_capture(&r, &[("a", -60.0), ("b", -65.0)]).unwrap(), None);
    }

    #[test]
    fn capture_needs_arrivals() {
        let r = RadioConfig::default();
        let none: [((), f64); 0] = [];
        assert_eq!(resolve_capture(&r, &none), Err(ChannelError::NoArrivals));
    }

    #[test]
    fn shadowing_is_frozen_per_meter() {
        let m = PathLossModel::fowlerville_default();
        let a = m.path_loss_db(250.1).unwrap();
        let b = m.path_loss_db(250.9).unwrap();
        assert_eq!(m.path_loss_db(250.1).unwrap(), a);
        // same quantum: difference is only the deterministic curve
        let PathLossModel::Fowlerville { boundaries_m, exponents, ref_loss_db, .. } = &m else { unreachable!() };
        let base = |d| piecewise_loss(boundaries_m, exponents, *ref_loss_db, d);
        assert!(((a - base(250.1)) - (b - base(250.9))).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(PathLossModel::three_log_distance_default().validate().is_ok());
        assert!(PathLossModel::fowlerville_default().validate().is_ok());
        let bad = PathLossModel::ThreeLogDistance { d0_m: 10.0, d1_m: 5.0, d2_m: 20.0, n0: 2.0, n1: 2.0, n2: 2.0, ref_loss_db: 40.0 };
        assert!(bad.validate().is_err());
        let bad_f = PathLossModel::Fowlerville {
            boundaries_m: vec![1.0, 10.0],
            exponents: vec![2.0],
            ref_loss_db: 40.0,
            shadowing_sigma_db: 0.0,
            shadowing_seed: 0,
        };
        assert!(bad_f.validate().is_err());
        let bad_r = RadioConfig { rx_sensitivity_dbm: -100.0, ..RadioConfig::default() };
        assert!(bad_r.validate().is_err());
    }

    fn arb_model() -> impl Strategy<Value = PathLossModel> {
        (0.5f64..10.0, 1.0f64..300.0, 1.0f64..700.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..80.0).prop_map(
            |(d0, g1, g2, n0, n1, n2, l)| PathLossModel::ThreeLogDistance {
                d0_m: d0,
                d1_m: d0 + g1,
                d2_m: d0 + g1 + g2,
                n0,
                n1,
                n2,
                ref_loss_db: l,
            },
        )
    }

    proptest! {
        #[test]
        fn loss_is_monotone(m in arb_model(), a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.path_loss_db(lo).unwrap() <= m.path_loss_db(hi).unwrap() + 1e-9);
        }

        #[test]
        fn hidden_is_symmetric(ax in -2000.0f64..2000.0, ay in -2000.0f64..2000.0, bx in -2000.0f64..2000.0, by in -2000.0f64..2000.0) {
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            for ch in [Channel::default(), Channel { model: PathLossModel::fowlerville_default(), radio: RadioConfig::default() }] {
                prop_assert_eq!(ch.is_hidden(&a, &b), ch.is_hidden(&b, &a));
            }
        }

        #[test]
        fn capture_winner_is_strict_max(rss in proptest::collection::vec(-100.0f64..-40.0, 1..8)) {
            let arrivals: Vec<(usize, f64)> = rss.iter().copied().enumerate().collect();
            if let Some(w) = resolve_capture(&RadioConfig::default(), &arrivals).unwrap() {
                for (i, r) in rss.iter().enumerate() {
                    if i != w {
                        prop_assert!(rss[w] > *r);
                    }
                }
            }
        }
    }
}
