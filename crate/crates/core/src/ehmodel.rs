//! Harvest-then-transmit power model: the three energy-harvesting schemes,
//! the underlay interference cap and the per-hop SINR.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::channel::ChannelDraw;
use crate::scenario::{Constants, LinearPowers, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EhError {
    #[error("n_e = {n_e} must be below m = {m}")]
    HarvestSplit { n_e: u32, m: u32 },
    #[error("negative or non-finite power {0}")]
    Power(f64),
    #[error("interference threshold must be positive, got {0}")]
    Threshold(f64),
    #[error("primary receiver gain vector is empty")]
    NoReceivers,
    #[error("hop {hop} out of range for K = {hops}")]
    Hop { hop: usize, hops: usize },
    #[error("SINR undefined: zero interference (h = {h})")]
    UndefinedSinr { h: f64 },
    #[error("noise power must be positive, got {0}")]
    Noise(f64),
    #[error("unknown EH scheme {0:?} (expected PT, Max or Sum)")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EhScheme {
    /// Harvest from the primary transmitters only.
    Pt,
    /// Use the stronger of beacon and primary-transmitter energy.
    Max,
    /// Combine both sources.
    #[default]
    Sum,
}

impl EhScheme {
    pub const ALL: [EhScheme; 3] = [EhScheme::Pt, EhScheme::Max, EhScheme::Sum];

    /// Transmit power from the two harvested components, before the κ factor.
    #[inline]
    pub fn combine(self, beacon: f64, primary: f64) -> f64 {
        match self {
            EhScheme::Pt => primary,
            EhScheme::Max => beacon.max(primary),
            EhScheme::Sum => beacon + primary,
        }
    }
}

impl fmt::Display for EhScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EhScheme::Pt => "PT",
            EhScheme::Max => "Max",
            EhScheme::Sum => "Sum",
        })
    }
}

impl FromStr for EhScheme {
    type Err = EhError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pt" => Ok(EhScheme::Pt),
            "max" => Ok(EhScheme::Max),
            "sum" => Ok(EhScheme::Sum),
            _ => Err(EhError::UnknownScheme(s.to_string())),
        }
    }
}

/// Transmit power of one node before and after the interference cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopPower {
    pub uncapped: f64,
    pub capped: f64,
    pub kappa: f64,
}

/// Harvest-to-transmit conversion factor `K eta n_E / (m - n_E)`.
pub fn kappa(scenario: &Scenario, constants: &Constants) -> Result<f64, EhError> {
    if scenario.n_e >= constants.m {
        return Err(EhError::HarvestSplit { n_e: scenario.n_e, m: constants.m });
    }
    Ok(scenario.hops as f64 * constants.eta * scenario.n_e as f64
        / (constants.m - scenario.n_e) as f64)
}

/// Uncapped transmit power of the transmitter of `hop` (0-based). The
/// beacon uses maximal-ratio transmission, so its delivered power gain is
/// the sum of the per-antenna gains.
pub fn harvested_power(
    scheme: EhScheme,
    hop: usize,
    draw: &ChannelDraw,
    powers: &LinearPowers,
    kappa: f64,
) -> Result<f64, EhError> {
    let hops = draw.dims().hops;
    if hop >= hops {
        return Err(EhError::Hop { hop, hops });
    }
    for p in [powers.p_pb, powers.p_pt, kappa] {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(EhError::Power(p));
        }
    }
    let beacon = powers.p_pb * draw.g_row(hop).iter().sum::<f64>();
    let primary = powers.p_pt * draw.v_tx(hop).iter().sum::<f64>();
    Ok(kappa * scheme.combine(beacon, primary))
}

/// Clips `uncapped` to the interference budget `i_th / max_n f_n`.
pub fn cap_power(uncapped: f64, i_th: f64, f_row: &[f64]) -> Result<f64, EhError> {
    if !(i_th > 0.0) {
        return Err(EhError::Threshold(i_th));
    }
    if !(uncapped >= 0.0) {
        return Err(EhError::Power(uncapped));
    }
    let worst = f_row.iter().copied().reduce(f64::max).ok_or(EhError::NoReceivers)?;
    if worst <= 0.0 {
        return Ok(uncapped);
    }
    Ok(uncapped.min(i_th / worst))
}

/// Received SINR `(P / sigma2) * h / I` with I the primary interference.
#[inline]
pub fn hop_sinr(capped_power: f64, h_gain: f64, interference: f64, sigma2: f64) -> Result<f64, EhError> {
    if !(sigma2 > 0.0) {
        return Err(EhError::Noise(sigma2));
    }
    if !(interference > 0.0) {
        return Err(EhError::UndefinedSinr { h: h_gain });
    }
    if h_gain == 0.0 {
        return Ok(0.0);
    }
    Ok(capped_power / sigma2 * h_gain / interference)
}

/// Power and SINR of `hop` under `scheme` for one realization.
pub fn hop_power(
    scheme: EhScheme,
    hop: usize,
    draw: &ChannelDraw,
    powers: &LinearPowers,
    kappa: f64,
) -> Result<HopPower, EhError> {
    let uncapped = harvested_power(scheme, hop, draw, powers, kappa)?;
    let capped = cap_power(uncapped, powers.i_th, draw.f_row(hop))?;
    Ok(HopPower { uncapped, capped, kappa })
}

/// SINR at the receiver of `hop`.
pub fn realization_sinr(
    scheme: EhScheme,
    hop: usize,
    draw: &ChannelDraw,
    powers: &LinearPowers,
    kappa: f64,
    sigma2: f64,
) -> Result<f64, EhError> {
    let p = hop_power(scheme, hop, draw, powers, kappa)?;
    let interference = powers.p_pt * draw.v_rx(hop).iter().sum::<f64>();
    hop_sinr(p.capped, draw.h(hop), interference, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelModel, Fading, RngStream};
    use crate::scenario::build_geometry;
    use proptest::prelude::*;

    #[test]
    fn kappa_examples() {
        let s = Scenario { hops: 4, n_e: 500, ..Scenario::default() };
        let c = Constants { eta: 0.8, m: 1500, ..Constants::default() };
        assert!((kappa(&s, &c).unwrap() - 1.6).abs() < 1e-15);

        let s = Scenario { hops: 1, n_e: 750, ..Scenario::default() };
        let c = Constants { eta: 1.0, m: 1500, ..Constants::default() };
        assert_eq!(kappa(&s, &c).unwrap(), 1.0);

        let s = Scenario { hops: 2, n_e: 100, ..Scenario::default() };
        let c = Constants { eta: 0.5, m: 1500, ..Constants::default() };
        assert!((kappa(&s, &c).unwrap() - 1.0 / 14.0).abs() < 1e-16);

        let s = Scenario { n_e: 1500, ..Scenario::default() };
        assert!(kappa(&s, &Constants::default()).is_err());
    }

    #[test]
    fn scheme_arithmetic() {
        assert_eq!(EhScheme::Pt.combine(3.0, 2.0), 2.0);
        assert_eq!(EhScheme::Max.combine(3.0, 2.0), 3.0);
        assert_eq!(EhScheme::Sum.combine(3.0, 2.0), 5.0);
        for scheme in EhScheme::ALL {
            assert_eq!(scheme.combine(0.0, 2.0), 2.0, "{scheme}");
        }
        assert_eq!("sum".parse::<EhScheme>().unwrap(), EhScheme::Sum);
        assert_eq!("PT".parse::<EhScheme>().unwrap(), EhScheme::Pt);
        assert!("both".parse::<EhScheme>().is_err());
    }

    #[test]
    fn cap_examples() {
        assert_eq!(cap_power(10.0, 4.0, &[2.0]).unwrap(), 2.0);
        assert_eq!(cap_power(1.0, 100.0, &[1.0]).unwrap(), 1.0);
        assert_eq!(cap_power(10.0, 1.0, &[0.1, 0.5, 0.2]).unwrap(), 2.0);
        assert_eq!(cap_power(10.0, 1.0, &[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(cap_power(10.0, f64::INFINITY, &[0.3]).unwrap(), 10.0);
        assert!(matches!(cap_power(1.0, 1.0, &[]), Err(EhError::NoReceivers)));
        assert!(cap_power(1.0, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(hop_sinr(2.0, 3.0, 6.0, 1.0).unwrap(), 1.0);
        assert_eq!(hop_sinr(2.0, 0.0, 6.0, 1.0).unwrap(), 0.0);
        assert!((hop_sinr(5.0, 1.0, 4.0, 2.0).unwrap() - 0.625).abs() < 1e-15);
        assert!(matches!(hop_sinr(1.0, 0.0, 0.0, 1.0), Err(EhError::UndefinedSinr { .. })));
        assert!(matches!(hop_sinr(1.0, 2.0, 0.0, 1.0), Err(EhError::UndefinedSinr { .. })));
    }

    #[test]
    fn harvest_on_fixed_draw() {
        let s = Scenario { hops: 1, antennas: 1, primary_tx: 1, primary_rx: 1, ..Scenario::default() };
        let c = Constants::default();
        let model = ChannelModel::new(&s, &build_geometry(&s).unwrap(), &c, Fading::PointMass).unwrap();
        let mut d = model.new_draw();
        model.draw_into(&RngStream::new(0), &mut d).unwrap();
        let powers = LinearPowers { p_pb: 3.0 / d.g_row(0)[0], p_pt: 2.0 / d.v_tx(0)[0], i_th: 1.0 };
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(harvested_power(EhScheme::Pt, 0, &d, &powers, 1.0).unwrap(), 2.0));
        assert!(close(harvested_power(EhScheme::Max, 0, &d, &powers, 1.0).unwrap(), 3.0));
        assert!(close(harvested_power(EhScheme::Sum, 0, &d, &powers, 1.0).unwrap(), 5.0));
        assert!(harvested_power(EhScheme::Sum, 1, &d, &powers, 1.0).is_err());
        let neg = LinearPowers { p_pb: -1.0, ..powers };
        assert!(harvested_power(EhScheme::Sum, 0, &d, &neg, 1.0).is_err());
    }

    #[test]
    fn scheme_dominance_over_random_draws() {
        let s = Scenario::default();
        let c = Constants::default();
        let model = ChannelModel::new(&s, &build_geometry(&s).unwrap(), &c, Fading::Rayleigh).unwrap();
        let powers = s.linear_powers().unwrap();
        let kap = kappa(&s, &c).unwrap();
        let mut d = model.new_draw();
        let root = RngStream::new(99);
        for i in 0..100_000u64 {
            model.draw_into(&root.substream(i), &mut d).unwrap();
            let hop = (i % 4) as usize;
            let p = |sch| hop_power(sch, hop, &d, &powers, kap).unwrap();
            let (pt, max, sum) = (p(EhScheme::Pt), p(EhScheme::Max), p(EhScheme::Sum));
            assert!(sum.uncapped >= max.uncapped && max.uncapped >= pt.uncapped);
            assert!(sum.capped >= max.capped && max.capped >= pt.capped);
            let beacon = kap * powers.p_pb * d.g_row(hop).iter().sum::<f64>();
            assert!(max.uncapped >= beacon);
        }
    }

    proptest! {
        #[test]
        fn cap_never_exceeds_budget(
            uncapped in 0.0f64..1e6,
            i_th in 1e-6f64..1e6,
            f in proptest::collection::vec(1e-9f64..10.0, 1..6),
        ) {
            let worst = f.iter().copied().fold(0.0, f64::max);
            let capped = cap_power(uncapped, i_th, &f).unwrap();
            prop_assert!(capped <= i_th / worst * (1.0 + 1e-12));
            prop_assert!(capped <= uncapped);
        }

        #[test]
        fn sinr_monotone(p in 1e-6f64..1e3, h in 1e-6f64..1e3, i in 1e-6f64..1e3, bump in 1.001f64..2.0) {
            let base = hop_sinr(p, h, i, 1.0).unwrap();
            prop_assert!(hop_sinr(p * bump, h, i, 1.0).unwrap() > base);
            prop_assert!(hop_sinr(p, h * bump, i, 1.0).unwrap() > base);
            prop_assert!(hop_sinr(p, h, i * bump, 1.0).unwrap() < base);
        }
    }
}
