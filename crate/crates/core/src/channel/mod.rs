//! Large-scale path loss, Rayleigh block fading and per-block channel
//! realizations.
//!
//! Small-scale power gains are unit-mean exponentials; every gain carries
//! the path loss of its link as its mean. Randomness for a block is keyed on
//! `(block stream, channel class, node, element)`, so draws never depend on
//! scheduling.
//!
//! Hops are 0-based here: hop `j` runs from transmitter `R_j` to receiver
//! `R_{j+1}`.

mod rng;

pub use rng::RngStream;
pub(crate) use rng::mix64;

use std::io::Write;

use thiserror::Error;

use crate::scenario::{db_to_linear, Constants, Geometry, Scenario, ScenarioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    Distance(f64),
    #[error("exponential mean must be positive and finite, got {0}")]
    Mean(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Sub-stream index of each channel class within a block stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum ChannelClass {
    /// Beacon antenna to transmitting node.
    Beacon = 0,
    /// Primary transmitter to any chain node.
    Primary = 1,
    /// Hop link R_j to R_{j+1}.
    Hop = 2,
    /// Transmitting node to primary receiver.
    Interference = 3,
}

/// Small-scale fading law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    #[default]
    Rayleigh,
    /// Every gain equals its mean. Used to check expectations of constants.
    PointMass,
}

/// Large-scale gain `sigma_pl * (d / d0)^(-pl_exp)`.
pub fn path_loss(d: f64, constants: &Constants) -> Result<f64, ChannelError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(ChannelError::Distance(d));
    }
    let sigma = db_to_linear(constants.sigma_pl_db)?;
    Ok(sigma * (d / constants.d0).powf(-constants.pl_exp))
}

/// One exponential draw with the given mean, by inversion.
#[inline]
pub fn draw_exponential_gain(stream: &mut RngStream, mean: f64) -> Result<f64, ChannelError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(ChannelError::Mean(mean));
    }
    Ok(-mean * stream.next_open01().ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelDims {
    pub hops: usize,
    pub antennas: usize,
    pub primary_tx: usize,
    pub primary_rx: usize,
}

impl ChannelDims {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            hops: scenario.hops as usize,
            antennas: scenario.antennas as usize,
            primary_tx: scenario.primary_tx as usize,
            primary_rx: scenario.primary_rx as usize,
        }
    }
}

/// All fading power gains of one coherence block, path loss included.
///
/// PT gains are stored per chain node: the PT->R_j channel feeds R_j's
/// harvester as a transmitter and is the interference seen by R_j as a
/// receiver on the previous hop.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    dims: ChannelDims,
    g: Vec<f64>,
    v: Vec<f64>,
    h: Vec<f64>,
    f: Vec<f64>,
}

impl ChannelDraw {
    pub fn zeros(dims: ChannelDims) -> Self {
        Self {
            dims,
            g: vec![0.0; dims.hops * dims.antennas],
            v: vec![0.0; (dims.hops + 1) * dims.primary_tx],
            h: vec![0.0; dims.hops],
            f: vec![0.0; dims.hops * dims.primary_rx],
        }
    }

    pub fn dims(&self) -> ChannelDims {
        self.dims
    }

    /// Beacon gains `g_{l}` towards the transmitter of `hop`.
    pub fn g_row(&self, hop: usize) -> &[f64] {
        let l = self.dims.antennas;
        &self.g[hop * l..(hop + 1) * l]
    }

    /// PT gains at the transmitter of `hop` (energy source).
    pub fn v_tx(&self, hop: usize) -> &[f64] {
        self.v_node(hop)
    }

    /// PT gains at the receiver of `hop` (interference).
    pub fn v_rx(&self, hop: usize) -> &[f64] {
        self.v_node(hop + 1)
    }

    fn v_node(&self, node: usize) -> &[f64] {
        let m = self.dims.primary_tx;
        &self.v[node * m..(node + 1) * m]
    }

    pub fn h(&self, hop: usize) -> f64 {
        self.h[hop]
    }

    /// Gains from the transmitter of `hop` to each primary receiver.
    pub fn f_row(&self, hop: usize) -> &[f64] {
        let n = self.dims.primary_rx;
        &self.f[hop * n..(hop + 1) * n]
    }

    fn all(&self) -> impl Iterator<Item = &f64> {
        self.g.iter().chain(&self.v).chain(&self.h).chain(&self.f)
    }

    /// Writes long-format CSV rows `realization,class,node,element,gain`.
    pub fn write_csv_rows<W: Write>(&self, realization: u64, out: &mut W) -> std::io::Result<()> {
        let d = self.dims;
        for hop in 0..d.hops {
            for (e, x) in self.g_row(hop).iter().enumerate() {
                writeln!(out, "{realization},g,{hop},{e},{x:.17e}")?;
            }
        }
        for node in 0..=d.hops {
            for (e, x) in self.v_node(node).iter().enumerate() {
                writeln!(out, "{realization},v,{node},{e},{x:.17e}")?;
            }
        }
        for hop in 0..d.hops {
            writeln!(out, "{realization},h,{hop},0,{:.17e}", self.h[hop])?;
        }
        for hop in 0..d.hops {
            for (e, x) in self.f_row(hop).iter().enumerate() {
                writeln!(out, "{realization},f,{hop},{e},{x:.17e}")?;
            }
        }
        Ok(())
    }
}

pub const DRAW_CSV_HEADER: &str = "realization,class,node,element,gain";

/// Per-link mean gains for a fixed scenario, computed once and reused for
/// every block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    dims: ChannelDims,
    fading: Fading,
    /// Beacon -> R_j, j = 0..K-1.
    mean_g: Vec<f64>,
    /// PT -> R_j, j = 0..K.
    mean_v: Vec<f64>,
    /// R_j -> R_{j+1}.
    mean_h: Vec<f64>,
    /// R_j -> PR, j = 0..K-1.
    mean_f: Vec<f64>,
}

impl ChannelModel {
    pub fn new(
        scenario: &Scenario,
        geometry: &Geometry,
        constants: &Constants,
        fading: Fading,
    ) -> Result<Self, ChannelError> {
        let dims = ChannelDims::of(scenario);
        if geometry.hops() != dims.hops {
            return Err(ChannelError::Dimension(format!(
                "geometry has {} hops, scenario has K = {}",
                geometry.hops(),
                dims.hops
            )));
        }
        if dims.hops == 0 || dims.antennas == 0 || dims.primary_tx == 0 || dims.primary_rx == 0 {
            return Err(ChannelError::Dimension(format!("empty dimension in {dims:?}")));
        }
        let nodes = &geometry.node_pos;
        let tx = &nodes[..dims.hops];
        let pl = |d: f64| path_loss(d, constants);
        Ok(Self {
            dims,
            fading,
            mean_g: tx.iter().map(|p| pl(p.distance(&scenario.pb_pos))).collect::<Result<_, _>>()?,
            mean_v: nodes.iter().map(|p| pl(p.distance(&scenario.pt_pos))).collect::<Result<_, _>>()?,
            mean_h: (0..dims.hops).map(|j| pl(geometry.hop_length(j))).collect::<Result<_, _>>()?,
            mean_f: tx.iter().map(|p| pl(p.distance(&scenario.pr_pos))).collect::<Result<_, _>>()?,
        })
    }

    pub fn dims(&self) -> ChannelDims {
        self.dims
    }

    pub fn fading(&self) -> Fading {
        self.fading
    }

    pub fn mean_g(&self) -> &[f64] {
        &self.mean_g
    }

    pub fn mean_v(&self) -> &[f64] {
        &self.mean_v
    }

    pub fn mean_h(&self) -> &[f64] {
        &self.mean_h
    }

    pub fn mean_f(&self) -> &[f64] {
        &self.mean_f
    }

    pub fn new_draw(&self) -> ChannelDraw {
        ChannelDraw::zeros(self.dims)
    }

    /// Fills `draw` with the realization keyed by `block`.
    pub fn draw_into(&self, block: &RngStream, draw: &mut ChannelDraw) -> Result<(), ChannelError> {
        if draw.dims != self.dims {
            return Err(ChannelError::Dimension(format!(
                "draw buffer {:?} does not match model {:?}",
                draw.dims, self.dims
            )));
        }
        let d = self.dims;
        let fading = self.fading;
        let fill = |class: ChannelClass, node: usize, mean: f64, out: &mut [f64]| {
            match fading {
                Fading::Rayleigh => {
                    let mut s = block.substream(class as u64).substream(node as u64);
                    for x in out.iter_mut() {
                        *x = -mean * s.next_open01().ln();
                    }
                }
                Fading::PointMass => out.fill(mean),
            }
        };
        for j in 0..d.hops {
            fill(ChannelClass::Beacon, j, self.mean_g[j], &mut draw.g[j * d.antennas..(j + 1) * d.antennas]);
            fill(ChannelClass::Hop, j, self.mean_h[j], &mut draw.h[j..j + 1]);
            fill(
                ChannelClass::Interference,
                j,
                self.mean_f[j],
                &mut draw.f[j * d.primary_rx..(j + 1) * d.primary_rx],
            );
        }
        for node in 0..=d.hops {
            fill(
                ChannelClass::Primary,
                node,
                self.mean_v[node],
                &mut draw.v[node * d.primary_tx..(node + 1) * d.primary_tx],
            );
        }
        debug_assert!(draw.all().all(|x| x.is_finite() && *x >= 0.0));
        Ok(())
    }
}

/// Draws one block of Rayleigh-faded gains keyed by `stream`.
pub fn draw_block(
    stream: &RngStream,
    scenario: &Scenario,
    geometry: &Geometry,
    constants: &Constants,
) -> Result<ChannelDraw, ChannelError> {
    let model = ChannelModel::new(scenario, geometry, constants, Fading::Rayleigh)?;
    let mut draw = model.new_draw();
    model.draw_into(stream, &mut draw)?;
    Ok(draw)
}
