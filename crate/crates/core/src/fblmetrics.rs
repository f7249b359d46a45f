//! Finite-blocklength error kernel (normal approximation) and the
//! end-to-end metrics derived from per-hop block error rates.
//!
//! The Gaussian tail is computed as `Q(x) = erfc(x / sqrt 2) / 2` with the
//! `libm` port of the FreeBSD `erfc`; against 40-digit references its
//! relative error stays below 1e-13 for |x| <= 37.5, which covers every tail
//! value representable in f64.

use std::f64::consts::{FRAC_1_SQRT_2, LOG2_E};

use thiserror::Error;

use crate::scenario::{Constants, Scenario};

/// `(log2 e)^2`, the high-SINR limit of the channel dispersion.
pub const DISPERSION_LIMIT: f64 = LOG2_E * LOG2_E;

/// The normal approximation is only trusted above this blocklength.
pub const MIN_BLOCKLENGTH: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FblError {
    #[error("SINR must be non-negative, got {0}")]
    NegativeSinr(f64),
    #[error("blocklength n_D = {0} must exceed 100 channel uses")]
    ShortBlock(f64),
    #[error("rate must be positive, got {0}")]
    Rate(f64),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("latency undefined: end-to-end BLER is 1")]
    LatencyUndefined,
    #[error("n_e = {n_e} must be below m = {m}")]
    HarvestSplit { n_e: u32, m: u32 },
}

/// Per-hop blocklength and coding rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FblParams {
    /// Channel uses per hop, `(m - n_E) / K`.
    pub n_d: f64,
    /// Coding rate `b / n_D`, bits per channel use.
    pub rate: f64,
}

impl FblParams {
    pub fn new(scenario: &Scenario, constants: &Constants) -> Result<Self, FblError> {
        Self::with_message_bits(scenario, constants, constants.b as f64)
    }

    pub fn with_message_bits(scenario: &Scenario, constants: &Constants, bits: f64) -> Result<Self, FblError> {
        if scenario.n_e >= constants.m {
            return Err(FblError::HarvestSplit { n_e: scenario.n_e, m: constants.m });
        }
        let n_d = (constants.m - scenario.n_e) as f64 / scenario.hops as f64;
        Self::from_parts(n_d, bits / n_d)
    }

    pub fn from_parts(n_d: f64, rate: f64) -> Result<Self, FblError> {
        if !(n_d > MIN_BLOCKLENGTH) {
            return Err(FblError::ShortBlock(n_d));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(FblError::Rate(rate));
        }
        Ok(Self { n_d, rate })
    }
}

/// Gaussian tail probability.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Shannon capacity `log2(1 + gamma)`.
pub fn shannon_c(gamma: f64) -> Result<f64, FblError> {
    if !(gamma >= 0.0) {
        return Err(FblError::NegativeSinr(gamma));
    }
    Ok(gamma.ln_1p() * LOG2_E)
}

/// Channel dispersion `(1 - 1/(1+gamma)^2) (log2 e)^2`.
pub fn dispersion_v(gamma: f64) -> Result<f64, FblError> {
    if !(gamma >= 0.0) {
        return Err(FblError::NegativeSinr(gamma));
    }
    Ok(dispersion_fraction(gamma) * DISPERSION_LIMIT)
}

#[inline]
fn dispersion_fraction(gamma: f64) -> f64 {
    // gamma (2 + gamma) / (1 + gamma)^2 avoids the cancellation of
    // 1 - 1/(1+gamma)^2 near zero; the square overflows past ~1e154.
    if gamma > 1e150 {
        return 1.0;
    }
    let d = 1.0 + gamma;
    gamma * (2.0 + gamma) / (d * d)
}

/// Instantaneous block error probability at SINR `gamma`.
///
/// At `gamma = 0` the Q argument is `-r / 0`, returned as its limit 1.
/// `gamma` must be non-negative.
#[inline]
pub fn inst_bler(gamma: f64, fbl: &FblParams) -> f64 {
    debug_assert!(gamma >= 0.0, "negative SINR {gamma}");
    if !(gamma > 0.0) {
        return 1.0;
    }
    let c = gamma.ln_1p() * LOG2_E;
    let v = dispersion_fraction(gamma) * DISPERSION_LIMIT;
    let arg = (c - fbl.rate) * (fbl.n_d / v).sqrt();
    q_function(arg).clamp(0.0, 1.0)
}

/// `1 - prod(1 - eps_k)`.
pub fn e2e_bler(per_hop: &[f64]) -> Result<f64, FblError> {
    let mut survive = 1.0;
    for &e in per_hop {
        if !(0.0..=1.0).contains(&e) {
            return Err(FblError::Probability(e));
        }
        survive *= 1.0 - e;
    }
    Ok(1.0 - survive)
}

fn check_prob(p: f64) -> Result<(), FblError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(FblError::Probability(p))
    }
}

/// Delay-limited throughput `R_th (m - n_E)(1 - eps) / (m K)`.
pub fn throughput(e2e: f64, scenario: &Scenario, constants: &Constants) -> Result<f64, FblError> {
    check_prob(e2e)?;
    if scenario.n_e >= constants.m {
        return Err(FblError::HarvestSplit { n_e: scenario.n_e, m: constants.m });
    }
    let m = constants.m as f64;
    Ok(scenario.r_th * (m - scenario.n_e as f64) * (1.0 - e2e) / (m * scenario.hops as f64))
}

/// Reliability in percent and latency in seconds.
pub fn reliability_latency(e2e: f64, scenario: &Scenario, constants: &Constants) -> Result<(f64, f64), FblError> {
    check_prob(e2e)?;
    if e2e == 1.0 {
        return Err(FblError::LatencyUndefined);
    }
    Ok((reliability(e2e), latency(e2e, scenario, constants)))
}

fn reliability(e2e: f64) -> f64 {
    (1.0 - e2e) * 100.0
}

fn latency(e2e: f64, scenario: &Scenario, constants: &Constants) -> f64 {
    (constants.m - scenario.n_e) as f64 * constants.big_t / (1.0 - e2e)
}

/// Averaged performance of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfEstimate {
    pub per_hop_bler: Vec<f64>,
    pub e2e_bler: f64,
    /// Bits per channel use.
    pub throughput: f64,
    /// Percent.
    pub reliability: f64,
    /// Seconds; `None` when every block fails.
    pub latency: Option<f64>,
    /// 95% half-widths of the per-hop estimates.
    pub ci_halfwidth: Vec<f64>,
    pub n_realizations: u64,
}

impl PerfEstimate {
    /// Combines per-hop BLERs into the end-to-end metrics.
    pub fn from_per_hop(
        per_hop_bler: Vec<f64>,
        ci_halfwidth: Vec<f64>,
        n_realizations: u64,
        scenario: &Scenario,
        constants: &Constants,
    ) -> Result<Self, FblError> {
        let e2e = e2e_bler(&per_hop_bler)?;
        let latency = match reliability_latency(e2e, scenario, constants) {
            Ok((_, l)) => Some(l),
            Err(FblError::LatencyUndefined) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            throughput: throughput(e2e, scenario, constants)?,
            reliability: reliability(e2e),
            latency,
            e2e_bler: e2e,
            per_hop_bler,
            ci_halfwidth,
            n_realizations,
        })
    }
}
