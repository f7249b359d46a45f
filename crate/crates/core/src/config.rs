//! Flat `key = value` text configuration for scenarios and constants.
//!
//! One assignment per line, `#` starts a comment, keys are case-sensitive
//! and match the field names (`L`, `K`, `M`, `N`, `pt_pos`, `p_pb_db`, ...,
//! `eta`, `m`, `b`, ...). Positions are written `x, y`; the single
//! coordinates are also addressable as `x_pt`, `y_pt`, `x_pr`, ... so they
//! can be swept.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::ehmodel::EhScheme;
use crate::scenario::{Constants, Point, Scenario, ScenarioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
}

/// Every settable key, in canonical output order.
pub const KEYS: &[&str] = &[
    "L", "K", "M", "N", "pt_pos", "pr_pos", "pb_pos", "p_pb_db", "p_pt_db", "i_th_db", "n_e", "r_th",
    "eta", "m", "b", "big_t", "sigma2", "pl_exp", "sigma_pl_db", "d0", "scheme",
];

const COORD_KEYS: &[&str] = &["x_pt", "y_pt", "x_pr", "y_pr", "x_pb", "y_pb"];

/// A complete simulation setup.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub constants: Constants,
    pub scheme: EhScheme,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_point(key: &str, value: &str) -> Result<Point, ConfigError> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 2 {
        return Err(ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected `x, y`".to_string(),
        });
    }
    Ok(Point::new(parse(key, parts[0])?, parse(key, parts[1])?))
}

impl SimConfig {
    pub fn is_key(key: &str) -> bool {
        KEYS.contains(&key) || COORD_KEYS.contains(&key)
    }

    /// Sets one field from its text form. Does not validate cross-field
    /// invariants; call [`SimConfig::validate`] once all keys are applied.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.scenario;
        let c = &mut self.constants;
        match key {
            "L" => s.antennas = parse(key, value)?,
            "K" => s.hops = parse(key, value)?,
            "M" => s.primary_tx = parse(key, value)?,
            "N" => s.primary_rx = parse(key, value)?,
            "pt_pos" => s.pt_pos = parse_point(key, value)?,
            "pr_pos" => s.pr_pos = parse_point(key, value)?,
            "pb_pos" => s.pb_pos = parse_point(key, value)?,
            "x_pt" => s.pt_pos.x = parse(key, value)?,
            "y_pt" => s.pt_pos.y = parse(key, value)?,
            "x_pr" => s.pr_pos.x = parse(key, value)?,
            "y_pr" => s.pr_pos.y = parse(key, value)?,
            "x_pb" => s.pb_pos.x = parse(key, value)?,
            "y_pb" => s.pb_pos.y = parse(key, value)?,
            "p_pb_db" => s.p_pb_db = parse(key, value)?,
            "p_pt_db" => s.p_pt_db = parse(key, value)?,
            "i_th_db" => s.i_th_db = parse(key, value)?,
            "n_e" => s.n_e = parse(key, value)?,
            "r_th" => s.r_th = parse(key, value)?,
            "eta" => c.eta = parse(key, value)?,
            "m" => c.m = parse(key, value)?,
            "b" => c.b = parse(key, value)?,
            "big_t" => c.big_t = parse(key, value)?,
            "sigma2" => c.sigma2 = parse(key, value)?,
            "pl_exp" => c.pl_exp = parse(key, value)?,
            "sigma_pl_db" => c.sigma_pl_db = parse(key, value)?,
            "d0" => c.d0 = parse(key, value)?,
            "scheme" => {
                self.scheme = value.trim().parse().map_err(|e: crate::ehmodel::EhError| ConfigError::Value {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: e.to_string(),
                })?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = split_assignment(assignment).ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.constants.validate()?;
        self.scenario.validate(&self.constants)?;
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Canonical text form; `parse_text(to_text())` restores every field.
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let c = &self.constants;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("L", s.antennas.to_string());
        put("K", s.hops.to_string());
        put("M", s.primary_tx.to_string());
        put("N", s.primary_rx.to_string());
        put("pt_pos", format!("{}, {}", s.pt_pos.x, s.pt_pos.y));
        put("pr_pos", format!("{}, {}", s.pr_pos.x, s.pr_pos.y));
        put("pb_pos", format!("{}, {}", s.pb_pos.x, s.pb_pos.y));
        put("p_pb_db", s.p_pb_db.to_string());
        put("p_pt_db", s.p_pt_db.to_string());
        put("i_th_db", s.i_th_db.to_string());
        put("n_e", s.n_e.to_string());
        put("r_th", s.r_th.to_string());
        put("eta", c.eta.to_string());
        put("m", c.m.to_string());
        put("b", c.b.to_string());
        put("big_t", c.big_t.to_string());
        put("sigma2", c.sigma2.to_string());
        put("pl_exp", c.pl_exp.to_string());
        put("sigma_pl_db", c.sigma_pl_db.to_string());
        put("d0", c.d0.to_string());
        put("scheme", self.scheme.to_string());
        out
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k, v.trim()))
}

/// Splits a flat key-value body into trimmed pairs, skipping blank lines and
/// `#` comments. Values may be wrapped in double quotes.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_assignment(line).ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let v = v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v);
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}
