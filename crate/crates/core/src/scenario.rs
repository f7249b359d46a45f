//! System configuration: the 15-feature scenario, fixed physical constants,
//! relay-chain geometry and the uniform scenario sampler used for datasets.
//!
//! Powers are carried in dB relative to unit noise power and converted once
//! with [`db_to_linear`]; everything downstream works on linear scale.

use rand::Rng;
use thiserror::Error;

use crate::channel::RngStream;

/// Length of the source-destination line, meters.
pub const CHAIN_SPAN: f64 = 25.0;

/// Sampled n_E values are multiples of this many channel uses.
pub const N_E_UNIT: u32 = 100;

/// Number of scalar features in the surrogate input vector.
pub const N_FEATURES: usize = 15;

/// Feature names in input-vector order (also the dataset CSV header).
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "L", "K", "M", "N", "x_PT", "y_PT", "x_PR", "y_PR", "x_PB", "y_PB", "P_PB", "I_th", "P_PT",
    "n_E", "R_th",
];

/// Indices of the integer-valued features.
pub const INTEGER_FEATURES: [usize; 5] = [0, 1, 2, 3, 13];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("{field} must be at least 1, got {value}")]
    ZeroCount { field: &'static str, value: u32 },
    #[error("n_e = {n_e} must satisfy 0 < n_e < m = {m}")]
    HarvestSplit { n_e: u32, m: u32 },
    #[error("invalid constant {field}: {reason}")]
    Constant { field: &'static str, reason: &'static str },
    #[error("r_th must be positive, got {0}")]
    Rate(f64),
    #[error("malformed bounds for {field}: lo {lo} > hi {hi}")]
    Bounds { field: &'static str, lo: f64, hi: f64 },
    #[error("feature {index} ({name}) must be a positive integer, got {value}")]
    NotInteger { index: usize, name: &'static str, value: f64 },
}

/// Converts a decibel ratio to linear scale.
pub fn db_to_linear(x_db: f64) -> Result<f64, ScenarioError> {
    if !x_db.is_finite() {
        return Err(ScenarioError::NonFinite("x_db"));
    }
    Ok(10f64.powf(x_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One network configuration. All M primary transmitters share `pt_pos`,
/// all N primary receivers share `pr_pos`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// L, antennas at the power beacon.
    pub antennas: u32,
    /// K, number of hops.
    pub hops: u32,
    /// M, primary transmitters.
    pub primary_tx: u32,
    /// N, primary receivers.
    pub primary_rx: u32,
    pub pt_pos: Point,
    pub pr_pos: Point,
    pub pb_pos: Point,
    pub p_pb_db: f64,
    pub p_pt_db: f64,
    /// Interference threshold; `+inf` disables the cap.
    pub i_th_db: f64,
    /// Channel uses spent harvesting.
    pub n_e: u32,
    /// Target rate for throughput, bits per channel use.
    pub r_th: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            antennas: 4,
            hops: 4,
            primary_tx: 4,
            primary_rx: 3,
            pt_pos: Point::new(19.0, 29.0),
            pr_pos: Point::new(19.0, 19.0),
            pb_pos: Point::new(10.0, 10.0),
            p_pb_db: 10.0,
            p_pt_db: 12.0,
            i_th_db: 20.0,
            n_e: 500,
            r_th: 1.0,
        }
    }
}

impl Scenario {
    pub fn validate(&self, constants: &Constants) -> Result<(), ScenarioError> {
        for (field, value) in [
            ("L", self.antennas),
            ("K", self.hops),
            ("M", self.primary_tx),
            ("N", self.primary_rx),
        ] {
            if value == 0 {
                return Err(ScenarioError::ZeroCount { field, value });
            }
        }
        if self.n_e == 0 || self.n_e >= constants.m {
            return Err(ScenarioError::HarvestSplit { n_e: self.n_e, m: constants.m });
        }
        if !(self.r_th > 0.0 && self.r_th.is_finite()) {
            return Err(ScenarioError::Rate(self.r_th));
        }
        for (name, p) in [("pt_pos", self.pt_pos), ("pr_pos", self.pr_pos), ("pb_pos", self.pb_pos)] {
            if !p.is_finite() {
                return Err(ScenarioError::NonFinite(name));
            }
        }
        if !self.p_pb_db.is_finite() {
            return Err(ScenarioError::NonFinite("p_pb_db"));
        }
        if !self.p_pt_db.is_finite() {
            return Err(ScenarioError::NonFinite("p_pt_db"));
        }
        if self.i_th_db.is_nan() || self.i_th_db == f64::NEG_INFINITY {
            return Err(ScenarioError::NonFinite("i_th_db"));
        }
        Ok(())
    }

    /// Linear beacon, primary-transmitter and interference-threshold powers.
    pub fn linear_powers(&self) -> Result<LinearPowers, ScenarioError> {
        let i_th = if self.i_th_db == f64::INFINITY {
            f64::INFINITY
        } else {
            db_to_linear(self.i_th_db)?
        };
        Ok(LinearPowers { p_pb: db_to_linear(self.p_pb_db)?, p_pt: db_to_linear(self.p_pt_db)?, i_th })
    }

    /// The surrogate input vector, in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.antennas as f64,
            self.hops as f64,
            self.primary_tx as f64,
            self.primary_rx as f64,
            self.pt_pos.x,
            self.pt_pos.y,
            self.pr_pos.x,
            self.pr_pos.y,
            self.pb_pos.x,
            self.pb_pos.y,
            self.p_pb_db,
            self.i_th_db,
            self.p_pt_db,
            self.n_e as f64,
            self.r_th,
        ]
    }

    pub fn from_features(x: &[f64; N_FEATURES]) -> Result<Self, ScenarioError> {
        let int = |index: usize| -> Result<u32, ScenarioError> {
            let value = x[index];
            if value.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&value) {
                return Err(ScenarioError::NotInteger { index, name: FEATURE_NAMES[index], value });
            }
            Ok(value as u32)
        };
        Ok(Self {
            antennas: int(0)?,
            hops: int(1)?,
            primary_tx: int(2)?,
            primary_rx: int(3)?,
            pt_pos: Point::new(x[4], x[5]),
            pr_pos: Point::new(x[6], x[7]),
            pb_pos: Point::new(x[8], x[9]),
            p_pb_db: x[10],
            i_th_db: x[11],
            p_pt_db: x[12],
            n_e: int(13)?,
            r_th: x[14],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPowers {
    pub p_pb: f64,
    pub p_pt: f64,
    pub i_th: f64,
}

/// Physical constants shared by every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    /// Energy conversion efficiency.
    pub eta: f64,
    /// Total channel uses per block.
    pub m: u32,
    /// Message size, bits.
    pub b: u32,
    /// Duration of one channel use, seconds.
    pub big_t: f64,
    /// Noise power, linear.
    pub sigma2: f64,
    /// Path-loss exponent.
    pub pl_exp: f64,
    /// Attenuation at the reference distance, dB.
    pub sigma_pl_db: f64,
    /// Reference distance, meters.
    pub d0: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            eta: 0.8,
            m: 1500,
            b: 256,
            big_t: 3e-6,
            sigma2: 1.0,
            pl_exp: 2.6,
            sigma_pl_db: -30.0,
            d0: 1.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |field, reason| Err(ScenarioError::Constant { field, reason });
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta", "must lie in (0, 1]");
        }
        if self.m < 2 {
            return bad("m", "must be at least 2");
        }
        if self.b == 0 {
            return bad("b", "must be at least 1 bit");
        }
        if !(self.big_t > 0.0 && self.big_t.is_finite()) {
            return bad("big_t", "must be positive");
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("sigma2", "must be positive");
        }
        if !self.pl_exp.is_finite() {
            return bad("pl_exp", "must be finite");
        }
        if !self.sigma_pl_db.is_finite() {
            return bad("sigma_pl_db", "must be finite");
        }
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return bad("d0", "must be positive");
        }
        Ok(())
    }
}

/// Relay chain positions R_0..R_K.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub node_pos: Vec<Point>,
}

impl Geometry {
    pub fn hops(&self) -> usize {
        self.node_pos.len() - 1
    }

    pub fn hop_length(&self, hop: usize) -> f64 {
        self.node_pos[hop].distance(&self.node_pos[hop + 1])
    }
}

/// Places R_k at (25 k / K, 0), equal spacing over the source-destination line.
pub fn build_geometry(scenario: &Scenario) -> Result<Geometry, ScenarioError> {
    let k = scenario.hops;
    if k == 0 {
        return Err(ScenarioError::ZeroCount { field: "K", value: 0 });
    }
    let node_pos = (0..=k)
        .map(|i| {
            // Pin the endpoint exactly.
            let x = if i == k { CHAIN_SPAN } else { CHAIN_SPAN * i as f64 / k as f64 };
            Point::new(x, 0.0)
        })
        .collect();
    Ok(Geometry { node_pos })
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange {
    pub lo: u32,
    pub hi: u32,
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRange {
    pub lo: f64,
    pub hi: f64,
}

impl IntRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }
}

impl RealRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// Sampling ranges for every scenario feature. `n_e_hundreds` is in units of
/// [`N_E_UNIT`] channel uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBounds {
    pub antennas: IntRange,
    pub hops: IntRange,
    pub primary_tx: IntRange,
    pub primary_rx: IntRange,
    pub x_pt: RealRange,
    pub y_pt: RealRange,
    pub x_pr: RealRange,
    pub y_pr: RealRange,
    pub x_pb: RealRange,
    pub y_pb: RealRange,
    pub p_pb_db: RealRange,
    pub i_th_db: RealRange,
    pub p_pt_db: RealRange,
    pub n_e_hundreds: IntRange,
    pub r_th: RealRange,
}

impl ScenarioBounds {
    /// The published input ranges.
    pub fn dataset_ranges() -> Self {
        Self {
            antennas: IntRange::new(1, 6),
            hops: IntRange::new(1, 6),
            primary_tx: IntRange::new(1, 6),
            primary_rx: IntRange::new(1, 6),
            x_pt: RealRange::new(18.0, 20.0),
            y_pt: RealRange::new(28.0, 30.0),
            x_pr: RealRange::new(18.0, 20.0),
            y_pr: RealRange::new(18.0, 20.0),
            x_pb: RealRange::new(8.0, 10.0),
            y_pb: RealRange::new(8.0, 10.0),
            p_pb_db: RealRange::new(0.0, 30.0),
            i_th_db: RealRange::new(0.0, 30.0),
            p_pt_db: RealRange::new(0.0, 40.0),
            n_e_hundreds: IntRange::new(1, 6),
            r_th: RealRange::new(1.0, 2.0),
        }
    }

    fn int_ranges(&self) -> [(&'static str, IntRange); 5] {
        [
            ("L", self.antennas),
            ("K", self.hops),
            ("M", self.primary_tx),
            ("N", self.primary_rx),
            ("n_E", self.n_e_hundreds),
        ]
    }

    fn real_ranges(&self) -> [(&'static str, RealRange); 10] {
        [
            ("x_PT", self.x_pt),
            ("y_PT", self.y_pt),
            ("x_PR", self.x_pr),
            ("y_PR", self.y_pr),
            ("x_PB", self.x_pb),
            ("y_PB", self.y_pb),
            ("P_PB", self.p_pb_db),
            ("I_th", self.i_th_db),
            ("P_PT", self.p_pt_db),
            ("R_th", self.r_th),
        ]
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (field, r) in self.int_ranges() {
            if r.lo > r.hi {
                return Err(ScenarioError::Bounds { field, lo: r.lo as f64, hi: r.hi as f64 });
            }
            if r.lo == 0 {
                return Err(ScenarioError::ZeroCount { field, value: 0 });
            }
        }
        for (field, r) in self.real_ranges() {
            if !(r.lo.is_finite() && r.hi.is_finite()) {
                return Err(ScenarioError::NonFinite(field));
            }
            if r.lo > r.hi {
                return Err(ScenarioError::Bounds { field, lo: r.lo, hi: r.hi });
            }
        }
        if !(self.r_th.lo > 0.0) {
            return Err(ScenarioError::Rate(self.r_th.lo));
        }
        Ok(())
    }

    /// Per-feature bounds in input-vector order, n_E in channel uses.
    pub fn feature_bounds(&self) -> FeatureBounds {
        let i = |r: IntRange| (r.lo as f64, r.hi as f64);
        let f = |r: RealRange| (r.lo, r.hi);
        let unit = N_E_UNIT as f64;
        let pairs = [
            i(self.antennas),
            i(self.hops),
            i(self.primary_tx),
            i(self.primary_rx),
            f(self.x_pt),
            f(self.y_pt),
            f(self.x_pr),
            f(self.y_pr),
            f(self.x_pb),
            f(self.y_pb),
            f(self.p_pb_db),
            f(self.i_th_db),
            f(self.p_pt_db),
            (self.n_e_hundreds.lo as f64 * unit, self.n_e_hundreds.hi as f64 * unit),
            f(self.r_th),
        ];
        FeatureBounds { lo: pairs.map(|p| p.0), hi: pairs.map(|p| p.1) }
    }
}

/// Per-feature min/max used for input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBounds {
    pub lo: [f64; N_FEATURES],
    pub hi: [f64; N_FEATURES],
}

impl FeatureBounds {
    /// Indices of features of `x` outside `[lo, hi]`.
    pub fn out_of_bounds(&self, x: &[f64; N_FEATURES]) -> Vec<usize> {
        (0..N_FEATURES).filter(|&i| !(x[i] >= self.lo[i] && x[i] <= self.hi[i])).collect()
    }
}

/// Draws one scenario. Integer features are uniform-inclusive, continuous
/// ones uniform on their closed interval; n_E is drawn in hundreds.
pub fn sample_scenario(
    stream: &mut RngStream,
    bounds: &ScenarioBounds,
) -> Result<Scenario, ScenarioError> {
    bounds.validate()?;
    let mut int = |r: IntRange| stream.gen_range(r.lo..=r.hi);
    let antennas = int(bounds.antennas);
    let hops = int(bounds.hops);
    let primary_tx = int(bounds.primary_tx);
    let primary_rx = int(bounds.primary_rx);
    let n_e = int(bounds.n_e_hundreds) * N_E_UNIT;
    let mut real = |r: RealRange| if r.lo == r.hi { r.lo } else { stream.gen_range(r.lo..=r.hi) };
    Ok(Scenario {
        antennas,
        hops,
        primary_tx,
        primary_rx,
        pt_pos: Point::new(real(bounds.x_pt), real(bounds.y_pt)),
        pr_pos: Point::new(real(bounds.x_pr), real(bounds.y_pr)),
        pb_pos: Point::new(real(bounds.x_pb), real(bounds.y_pb)),
        p_pb_db: real(bounds.p_pb_db),
        i_th_db: real(bounds.i_th_db),
        p_pt_db: real(bounds.p_pt_db),
        n_e,
        r_th: real(bounds.r_th),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn db_conversion_examples() {
        assert_eq!(db_to_linear(0.0).unwrap(), 1.0);
        assert!((db_to_linear(30.0).unwrap() - 1000.0).abs() < 1e-9);
        // 10^1.2 to 50 digits: 15.848931924611134852...
        let v = db_to_linear(12.0).unwrap();
        assert!((v - 15.848_931_924_611_135).abs() / v < 1e-15);
        assert!(db_to_linear(f64::NAN).is_err());
        assert!(db_to_linear(f64::INFINITY).is_err());
    }

    #[test]
    fn geometry_examples() {
        let mut s = Scenario { hops: 1, ..Scenario::default() };
        let g = build_geometry(&s).unwrap();
        assert_eq!(g.node_pos, vec![Point::new(0.0, 0.0), Point::new(25.0, 0.0)]);

        s.hops = 4;
        let xs: Vec<f64> = build_geometry(&s).unwrap().node_pos.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 6.25, 12.5, 18.75, 25.0]);

        s.hops = 5;
        let g = build_geometry(&s).unwrap();
        for h in 0..5 {
            assert!((g.hop_length(h) - 5.0).abs() < 1e-12);
        }

        s.hops = 0;
        assert!(build_geometry(&s).is_err());
    }

    #[test]
    fn degenerate_bounds_pin_the_value() {
        let mut bounds = ScenarioBounds::dataset_ranges();
        bounds.hops = IntRange::new(4, 4);
        let mut stream = RngStream::new(3);
        for _ in 0..200 {
            assert_eq!(sample_scenario(&mut stream, &bounds).unwrap().hops, 4);
        }
    }

    #[test]
    fn malformed_bounds_rejected() {
        let mut bounds = ScenarioBounds::dataset_ranges();
        bounds.p_pt_db = RealRange::new(40.0, 0.0);
        assert!(matches!(
            sample_scenario(&mut RngStream::new(1), &bounds),
            Err(ScenarioError::Bounds { field: "P_PT", .. })
        ));
    }

    #[test]
    fn sampled_scenarios_always_valid() {
        let bounds = ScenarioBounds::dataset_ranges();
        let fb = bounds.feature_bounds();
        let constants = Constants::default();
        let mut stream = RngStream::new(11);
        for _ in 0..10_000 {
            let s = sample_scenario(&mut stream, &bounds).unwrap();
            s.validate(&constants).unwrap();
            assert!((1..=6).contains(&s.antennas));
            assert!((0.0..=40.0).contains(&s.p_pt_db));
            assert_eq!(s.n_e % 100, 0);
            assert!(fb.out_of_bounds(&s.features()).is_empty());
        }
    }

    #[test]
    fn feature_round_trip() {
        let s = Scenario::default();
        assert_eq!(Scenario::from_features(&s.features()).unwrap(), s);
        let mut x = s.features();
        x[1] = 2.5;
        assert!(matches!(Scenario::from_features(&x), Err(ScenarioError::NotInteger { index: 1, .. })));
    }

    #[test]
    fn invariant_violations() {
        let c = Constants::default();
        let s = Scenario { n_e: 1500, ..Scenario::default() };
        assert!(matches!(s.validate(&c), Err(ScenarioError::HarvestSplit { .. })));
        let s = Scenario { primary_tx: 0, ..Scenario::default() };
        assert!(matches!(s.validate(&c), Err(ScenarioError::ZeroCount { field: "M", .. })));
        let s = Scenario { p_pb_db: f64::NAN, ..Scenario::default() };
        assert!(s.validate(&c).is_err());
        let s = Scenario { i_th_db: f64::INFINITY, ..Scenario::default() };
        assert!(s.validate(&c).is_ok());
        assert!(Constants { eta: 1.2, ..c.clone() }.validate().is_err());
        assert!(Constants { sigma2: 0.0, ..c }.validate().is_err());
    }

    proptest! {
        #[test]
        fn db_sum_is_linear_product(a in -60.0f64..60.0, b in -60.0f64..60.0) {
            let lhs = db_to_linear(a + b).unwrap();
            let rhs = db_to_linear(a).unwrap() * db_to_linear(b).unwrap();
            prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        }

        #[test]
        fn hop_lengths_sum_to_span(k in 1u32..64) {
            let g = build_geometry(&Scenario { hops: k, ..Scenario::default() }).unwrap();
            let total: f64 = (0..g.hops()).map(|h| g.hop_length(h)).sum();
            prop_assert!((total - CHAIN_SPAN).abs() < 1e-12);
            prop_assert!(g.node_pos.windows(2).all(|w| w[1].x > w[0].x));
        }
    }
}
