//! Simulator, dataset pipeline and surrogate inference for energy-harvesting
//! short-packet communications in multi-hop cognitive IoT networks.
//!
//! The pipeline runs bottom-up:
//! [`scenario`] -> [`channel`] -> [`ehmodel`] -> [`fblmetrics`] ->
//! [`montecarlo`] -> [`dataset`] -> [`surrogate`], driven from [`cli`].

pub mod channel;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod ehmodel;
pub mod fblmetrics;
pub mod montecarlo;
pub mod scenario;
pub mod surrogate;
