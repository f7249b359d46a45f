//! Monte-Carlo estimation of per-hop and end-to-end performance.
//!
//! Realization `i` always draws its gains from the stream
//! `seed / i / class / node`, for every scheme and parameter value. Reusing a
//! seed across compared configurations therefore gives common random
//! numbers: orderings that hold per realization hold for the averages too.
//!
//! Realizations are processed in fixed chunks of [`CHUNK`]; chunk sums are
//! pairwise trees and are combined in chunk order, so results are bitwise
//! identical for any worker count.

mod oracle;
mod quadrature;

pub use oracle::{quadrature_oracle, single_hop_oracle, OracleOptions, OracleResult};
pub use quadrature::{integrate, Integral};

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{mix64, ChannelDraw, ChannelError, ChannelModel, Fading, RngStream};
use crate::config::{ConfigError, SimConfig};
use crate::ehmodel::{self, EhError, EhScheme};
use crate::fblmetrics::{inst_bler, FblError, FblParams, PerfEstimate};
use crate::scenario::{build_geometry, Constants, LinearPowers, Scenario, ScenarioError};

/// Realizations per aggregation chunk.
pub const CHUNK: u64 = 1024;

/// Realizations per point for publication-grade runs.
pub const PAPER_REALIZATIONS: u64 = 500_000;

/// Default realizations per point.
pub const DESK_REALIZATIONS: u64 = 10_000;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte-Carlo configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Eh(#[from] EhError),
    #[error(transparent)]
    Fbl(#[from] FblError),
    #[error(transparent)]
    Setting(#[from] ConfigError),
    #[error("SINR undefined at realization {realization}, hop {hop}: {source}")]
    UndefinedSinr { realization: u64, hop: usize, source: EhError },
    #[error("unknown sweep axis {0:?}")]
    UnknownAxis(String),
    #[error("oracle: {0}")]
    Oracle(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_realizations: u64,
    pub seed: u64,
    pub scheme: EhScheme,
    /// Reuse the same seed across compared configurations.
    pub crn: bool,
    pub fading: Fading,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_realizations: DESK_REALIZATIONS,
            seed: 1,
            scheme: EhScheme::Sum,
            crn: true,
            fading: Fading::Rayleigh,
        }
    }
}

/// Per-realization SINR evaluation for one scenario.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    model: ChannelModel,
    powers: LinearPowers,
    kappa: f64,
    sigma2: f64,
    root: RngStream,
}

impl LinkSimulator {
    pub fn new(scenario: &Scenario, constants: &Constants, seed: u64, fading: Fading) -> Result<Self, McError> {
        constants.validate()?;
        scenario.validate(constants)?;
        let geometry = build_geometry(scenario)?;
        Ok(Self {
            model: ChannelModel::new(scenario, &geometry, constants, fading)?,
            powers: scenario.linear_powers()?,
            kappa: ehmodel::kappa(scenario, constants)?,
            sigma2: constants.sigma2,
            root: RngStream::new(seed),
        })
    }

    pub fn hops(&self) -> usize {
        self.model.dims().hops
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn new_draw(&self) -> ChannelDraw {
        self.model.new_draw()
    }

    /// Draws realization `index` into `draw`.
    pub fn draw(&self, index: u64, draw: &mut ChannelDraw) -> Result<(), McError> {
        Ok(self.model.draw_into(&self.root.substream(index), draw)?)
    }

    /// Per-hop SINRs of an already drawn block.
    pub fn sinrs(&self, scheme: EhScheme, index: u64, draw: &ChannelDraw, out: &mut [f64]) -> Result<(), McError> {
        for (hop, slot) in out.iter_mut().enumerate() {
            *slot = ehmodel::realization_sinr(scheme, hop, draw, &self.powers, self.kappa, self.sigma2)
                .map_err(|source| match source {
                    EhError::UndefinedSinr { .. } => McError::UndefinedSinr { realization: index, hop, source },
                    other => McError::Eh(other),
                })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct HopChunk {
    n: u64,
    sum: f64,
    m2: f64,
}

/// Sum with a fixed pairwise tree; the tree depends only on `xs.len()`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().fold(0.0, |a, &x| a + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn chunk_stats(
    sim: &LinkSimulator,
    scheme: EhScheme,
    fbl: &FblParams,
    chunk: u64,
    n_total: u64,
) -> Result<Vec<HopChunk>, McError> {
    let hops = sim.hops();
    let start = chunk * CHUNK;
    let len = (n_total - start).min(CHUNK) as usize;
    let mut values = vec![0.0; hops * len];
    let mut draw = sim.new_draw();
    let mut gammas = vec![0.0; hops];
    for i in 0..len {
        let index = start + i as u64;
        sim.draw(index, &mut draw)?;
        sim.sinrs(scheme, index, &draw, &mut gammas)?;
        for (hop, &g) in gammas.iter().enumerate() {
            values[hop * len + i] = inst_bler(g, fbl);
        }
    }
    Ok(values
        .chunks(len)
        .map(|xs| {
            let sum = pairwise_sum(xs);
            let mean = sum / len as f64;
            let m2 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            HopChunk { n: len as u64, sum, m2 }
        })
        .collect())
}

/// Pairwise sum of chunk sums and Chan's merge of the second moments, both
/// in chunk order.
fn combine(chunks: &[HopChunk]) -> (f64, f64, u64) {
    let sums: Vec<f64> = chunks.iter().map(|c| c.sum).collect();
    let total = pairwise_sum(&sums);
    let mut acc = HopChunk::default();
    for c in chunks {
        if acc.n == 0 {
            acc = *c;
            continue;
        }
        let n = acc.n + c.n;
        let delta = c.sum / c.n as f64 - acc.sum / acc.n as f64;
        acc.m2 += c.m2 + delta * delta * (acc.n as f64) * (c.n as f64) / n as f64;
        acc.sum += c.sum;
        acc.n = n;
    }
    (total, acc.m2, acc.n)
}

/// Averages the instantaneous BLER of every hop over `mc.n_realizations`
/// blocks, then derives end-to-end metrics from the per-hop means.
///
/// Runs on the current rayon pool.
pub fn estimate(scenario: &Scenario, constants: &Constants, mc: &McConfig) -> Result<PerfEstimate, McError> {
    if mc.n_realizations == 0 {
        return Err(McError::Config("n_realizations must be at least 1".into()));
    }
    let sim = LinkSimulator::new(scenario, constants, mc.seed, mc.fading)?;
    let fbl = FblParams::new(scenario, constants)?;
    let n = mc.n_realizations;
    let n_chunks = n.div_ceil(CHUNK);
    let chunks = (0..n_chunks)
        .into_par_iter()
        .map(|c| chunk_stats(&sim, mc.scheme, &fbl, c, n))
        .collect::<Result<Vec<_>, _>>()?;

    let hops = sim.hops();
    let mut per_hop = Vec::with_capacity(hops);
    let mut ci = Vec::with_capacity(hops);
    for hop in 0..hops {
        let column: Vec<HopChunk> = chunks.iter().map(|c| c[hop]).collect();
        let (sum, m2, count) = combine(&column);
        per_hop.push((sum / count as f64).clamp(0.0, 1.0));
        ci.push(if count > 1 {
            Z95 * (m2 / (count - 1) as f64).max(0.0).sqrt() / (count as f64).sqrt()
        } else {
            f64::INFINITY
        });
    }
    Ok(PerfEstimate::from_per_hop(per_hop, ci, n, scenario, constants)?)
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub scheme: EhScheme,
    pub estimate: PerfEstimate,
    pub wall_s: f64,
}

/// Seed used for grid point `index` of a sweep.
pub fn point_seed(mc: &McConfig, index: usize) -> u64 {
    if mc.crn {
        mc.seed
    } else {
        mix64(mc.seed ^ mix64(index as u64 + 1))
    }
}

/// Re-estimates `base` with `axis` set to each grid value. `axis` is any
/// config key (including `scheme`). With `mc.crn` every point reuses
/// `mc.seed`.
pub fn sweep(axis: &str, grid: &[String], base: &SimConfig, mc: &McConfig) -> Result<Vec<SweepRow>, McError> {
    if !SimConfig::is_key(axis) {
        return Err(McError::UnknownAxis(axis.to_string()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (i, value) in grid.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.scheme = mc.scheme;
        cfg.set(axis, value)?;
        cfg.validate()?;
        let point = McConfig { seed: point_seed(mc, i), scheme: cfg.scheme, ..mc.clone() };
        let started = Instant::now();
        let estimate = estimate(&cfg.scenario, &cfg.constants, &point)?;
        rows.push(SweepRow {
            value: value.clone(),
            scheme: cfg.scheme,
            estimate,
            wall_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str =
    "axis,value,scheme,e2e_bler,throughput,reliability,latency,per_hop_bler,ci_halfwidth,n_realizations,wall_s";

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes sweep rows as CSV. Per-hop columns are `;`-separated lists; an
/// undefined latency is an empty field.
pub fn write_sweep_csv<W: Write>(out: &mut W, axis: &str, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        let e = &r.estimate;
        writeln!(
            out,
            "{axis},{},{},{},{},{},{},{},{},{},{}",
            r.value,
            r.scheme,
            e.e2e_bler,
            e.throughput,
            e.reliability,
            e.latency.map(|l| l.to_string()).unwrap_or_default(),
            join(&e.per_hop_bler),
            join(&e.ci_halfwidth),
            e.n_realizations,
            r.wall_s,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> Constants {
        Constants { sigma2: 1e-6, ..Constants::default() }
    }

    fn pool(n: usize) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
    }

    #[test]
    fn single_realization_equals_inst_bler() {
        let s = Scenario::default();
        let c = quiet();
        let mc = McConfig { n_realizations: 1, seed: 4, ..McConfig::default() };
        let est = estimate(&s, &c, &mc).unwrap();
        let sim = LinkSimulator::new(&s, &c, 4, Fading::Rayleigh).unwrap();
        let mut d = sim.new_draw();
        sim.draw(0, &mut d).unwrap();
        let mut g = vec![0.0; 4];
        sim.sinrs(EhScheme::Sum, 0, &d, &mut g).unwrap();
        let fbl = FblParams::new(&s, &c).unwrap();
        for hop in 0..4 {
            assert_eq!(est.per_hop_bler[hop], inst_bler(g[hop], &fbl));
        }
        assert!(est.ci_halfwidth.iter().all(|c| c.is_infinite()));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = Scenario::default();
        let c = quiet();
        let mc = McConfig { n_realizations: 20_000, seed: 8, ..McConfig::default() };
        let one = pool(1).install(|| estimate(&s, &c, &mc)).unwrap();
        let eight = pool(8).install(|| estimate(&s, &c, &mc)).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one.per_hop_bler.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   eight.per_hop_bler.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn draws_identical_across_pools() {
        let s = Scenario::default();
        let sim = LinkSimulator::new(&s, &Constants::default(), 5, Fading::Rayleigh).unwrap();
        let collect = |threads| {
            pool(threads).install(|| {
                (0..256u64)
                    .into_par_iter()
                    .map(|i| {
                        let mut d = sim.new_draw();
                        sim.draw(i, &mut d).unwrap();
                        d
                    })
                    .collect::<Vec<_>>()
            })
        };
        assert_eq!(collect(1), collect(8));
    }

    #[test]
    fn estimate_consistent_with_eqs() {
        let s = Scenario::default();
        let c = quiet();
        let est = estimate(&s, &c, &McConfig { n_realizations: 4096, ..McConfig::default() }).unwrap();
        let survive: f64 = est.per_hop_bler.iter().map(|e| 1.0 - e).product();
        assert!((est.e2e_bler - (1.0 - survive)).abs() < 1e-12);
        let t = s.r_th * 1000.0 * (1.0 - est.e2e_bler) / (1500.0 * 4.0);
        assert!((est.throughput - t).abs() < 1e-12);
    }

    #[test]
    fn ci_shrinks_with_more_realizations() {
        let s = Scenario::default();
        let c = quiet();
        let at = |n| estimate(&s, &c, &McConfig { n_realizations: n, seed: 3, ..McConfig::default() }).unwrap();
        let small = at(10_000);
        let big = at(40_000);
        for hop in 0..4 {
            let ratio = small.ci_halfwidth[hop] / big.ci_halfwidth[hop];
            assert!((ratio - 2.0).abs() < 0.4, "hop {hop}: ratio {ratio}");
        }
    }

    #[test]
    fn sweep_grid_of_one_matches_estimate() {
        let base = SimConfig { constants: quiet(), ..SimConfig::default() };
        let mc = McConfig { n_realizations: 2000, ..McConfig::default() };
        let rows = sweep("i_th_db", &["20".to_string()], &base, &mc).unwrap();
        let direct = estimate(&base.scenario, &base.constants, &mc).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].estimate, direct);
        assert!(matches!(sweep("bogus", &["1".into()], &base, &mc), Err(McError::UnknownAxis(_))));
    }

    #[test]
    fn sweep_over_schemes_is_ordered_under_crn() {
        let base = SimConfig { constants: quiet(), ..SimConfig::default() };
        let mc = McConfig { n_realizations: 3000, ..McConfig::default() };
        let grid: Vec<String> = ["PT", "Max", "Sum"].iter().map(|s| s.to_string()).collect();
        let rows = sweep("scheme", &grid, &base, &mc).unwrap();
        let e: Vec<f64> = rows.iter().map(|r| r.estimate.e2e_bler).collect();
        assert!(e[2] <= e[1] && e[1] <= e[0], "{e:?}");
        for hop in 0..4 {
            let h: Vec<f64> = rows.iter().map(|r| r.estimate.per_hop_bler[hop]).collect();
            assert!(h[2] <= h[1] && h[1] <= h[0]);
        }
    }

    #[test]
    fn throughput_nondecreasing_in_threshold_under_crn() {
        // Thresholds low enough for the cap to bind.
        let base = SimConfig { constants: quiet(), ..SimConfig::default() };
        let mc = McConfig { n_realizations: 3000, ..McConfig::default() };
        let grid: Vec<String> = (0..=8).map(|i| format!("{}", -110 + 5 * i)).collect();
        let rows = sweep("i_th_db", &grid, &base, &mc).unwrap();
        let t: Vec<f64> = rows.iter().map(|r| r.estimate.throughput).collect();
        assert!(t.windows(2).all(|w| w[1] >= w[0]), "{t:?}");
        assert!(t.last().unwrap() > t.first().unwrap());
    }

    #[test]
    fn zero_realizations_rejected() {
        let mc = McConfig { n_realizations: 0, ..McConfig::default() };
        assert!(matches!(estimate(&Scenario::default(), &quiet(), &mc), Err(McError::Config(_))));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 249_750.0);
    }

    #[test]
    fn sweep_csv_shape() {
        let base = SimConfig { constants: quiet(), ..SimConfig::default() };
        let mc = McConfig { n_realizations: 100, ..McConfig::default() };
        let rows = sweep("K", &["1".into(), "2".into()], &base, &mc).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, "K", &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
    }
}
