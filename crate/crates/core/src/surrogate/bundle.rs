//! Versioned JSON model bundle.
//!
//! ```text
//! {
//!   "format": "ehspc-model-bundle",
//!   "version": 1,
//!   "architecture": "chi_cnn",
//!   "input_width": 15,
//!   "output_labels": ["bler", "throughput"],
//!   "norm_lo": [15 numbers], "norm_hi": [15 numbers],
//!   "layers": [ {"kind": "conv1d", "name": "stem.conv", ...}, ... ]
//! }
//! ```
//!
//! Feature maps are channel-major `[channel][position]`. Weight arrays are
//! flat and row-major: conv1d `[out][in][k]`, conv1x1 and fully_connected
//! `[out][in]`. `flatten` orders a map as `channel * width + position`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LABEL_NAMES;
use crate::scenario::N_FEATURES;

pub const BUNDLE_FORMAT: &str = "ehspc-model-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bundle parse error: {0}")]
    Parse(String),
    #[error("not a model bundle: {0}")]
    Format(String),
    #[error("unsupported bundle version {found} (supported: {BUNDLE_VERSION})")]
    Version { found: u64 },
    #[error("shape mismatch in layer {layer:?}: {message}")]
    Shape { layer: String, message: String },
    #[error("non-finite value in layer {layer:?}, field {field}[{index}]")]
    NonFinite { layer: String, field: &'static str, index: usize },
    #[error("batchnorm layer {layer:?} has non-positive running variance {value} at channel {channel}")]
    Variance { layer: String, channel: usize, value: f64 },
    #[error("bundle header: {0}")]
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        padding: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Conv1x1 {
        name: String,
        in_channels: usize,
        out_channels: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Batchnorm {
        name: String,
        channels: usize,
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        eps: f64,
    },
    Relu {
        name: String,
    },
    /// Mean over positions: `[C][W] -> [C][1]`.
    Gap {
        name: String,
    },
    /// `x * sigmoid(x)`, elementwise.
    SigmoidGateMul {
        name: String,
    },
    FullyConnected {
        name: String,
        in_features: usize,
        out_features: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Flatten {
        name: String,
    },
    /// `out[c][w] = gate(x)[c] * main(x)[c][w]`; `gate` must end in a
    /// `[C][1]` map and `main` in a `[C][W]` map.
    BroadcastMul {
        name: String,
        gate: Vec<Layer>,
        main: Vec<Layer>,
    },
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv1d { name, .. }
            | Layer::Conv1x1 { name, .. }
            | Layer::Batchnorm { name, .. }
            | Layer::Relu { name }
            | Layer::Gap { name }
            | Layer::SigmoidGateMul { name }
            | Layer::FullyConnected { name, .. }
            | Layer::Flatten { name }
            | Layer::BroadcastMul { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d { .. } => "conv1d",
            Layer::Conv1x1 { .. } => "conv1x1",
            Layer::Batchnorm { .. } => "batchnorm",
            Layer::Relu { .. } => "relu",
            Layer::Gap { .. } => "gap",
            Layer::SigmoidGateMul { .. } => "sigmoid_gate_mul",
            Layer::FullyConnected { .. } => "fully_connected",
            Layer::Flatten { .. } => "flatten",
            Layer::BroadcastMul { .. } => "broadcast_mul",
        }
    }

    /// Output `(channels, width)` for an input of `shape`, after checking
    /// every parameter array of the layer.
    pub fn output_shape(&self, shape: (usize, usize)) -> Result<(usize, usize), BundleError> {
        let (c, w) = shape;
        let shape_err = |message: String| BundleError::Shape { layer: self.name().to_string(), message };
        let expect_len = |field: &str, v: &[f64], n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(shape_err(format!("{field} has {} values, expected {n}", v.len())))
            }
        };
        match self {
            Layer::Conv1d { in_channels, out_channels, kernel_size, padding, weight, bias, .. } => {
                if *in_channels != c {
                    return Err(shape_err(format!("expects {in_channels} input channels, got {c}")));
                }
                if *kernel_size == 0 {
                    return Err(shape_err("kernel_size must be positive".into()));
                }
                expect_len("weight", weight, out_channels * in_channels * kernel_size)?;
                expect_len("bias", bias, *out_channels)?;
                let out_w = (w + 2 * padding).checked_sub(kernel_size - 1).unwrap_or(0);
                if out_w != w {
                    return Err(shape_err(format!("output width {out_w} differs from input width {w}")));
                }
                Ok((*out_channels, w))
            }
            Layer::Conv1x1 { in_channels, out_channels, weight, bias, .. } => {
                if *in_channels != c {
                    return Err(shape_err(format!("expects {in_channels} input channels, got {c}")));
                }
                expect_len("weight", weight, out_channels * in_channels)?;
                expect_len("bias", bias, *out_channels)?;
                Ok((*out_channels, w))
            }
            Layer::Batchnorm { channels, gamma, beta, running_mean, running_var, eps, .. } => {
                if *channels != c {
                    return Err(shape_err(format!("expects {channels} channels, got {c}")));
                }
                for (field, v) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
                    expect_len(field, v, c)?;
                }
                if !(eps.is_finite() && *eps >= 0.0) {
                    return Err(shape_err(format!("eps must be finite and non-negative, got {eps}")));
                }
                Ok(shape)
            }
            Layer::Relu { .. } | Layer::SigmoidGateMul { .. } => Ok(shape),
            Layer::Gap { .. } => Ok((c, 1)),
            Layer::Flatten { .. } => Ok((c * w, 1)),
            Layer::FullyConnected { in_features, out_features, weight, bias, .. } => {
                if *in_features != c * w {
                    return Err(shape_err(format!("expects {in_features} inputs, got {}", c * w)));
                }
                expect_len("weight", weight, out_features * in_features)?;
                expect_len("bias", bias, *out_features)?;
                Ok((*out_features, 1))
            }
            Layer::BroadcastMul { gate, main, .. } => {
                let g = chain_shape(gate, shape)?;
                let m = chain_shape(main, shape)?;
                if g != (m.0, 1) {
                    return Err(shape_err(format!("gate output {g:?} cannot scale main output {m:?}")));
                }
                Ok(m)
            }
        }
    }

    /// First non-finite parameter, or a non-positive running variance.
    fn check_values(&self) -> Result<(), BundleError> {
        let name = || self.name().to_string();
        let finite = |field: &'static str, v: &[f64]| match v.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(BundleError::NonFinite { layer: name(), field, index }),
            None => Ok(()),
        };
        match self {
            Layer::Conv1d { weight, bias, .. }
            | Layer::Conv1x1 { weight, bias, .. }
            | Layer::FullyConnected { weight, bias, .. } => {
                finite("weight", weight)?;
                finite("bias", bias)
            }
            Layer::Batchnorm { gamma, beta, running_mean, running_var, .. } => {
                finite("gamma", gamma)?;
                finite("beta", beta)?;
                finite("running_mean", running_mean)?;
                finite("running_var", running_var)?;
                match running_var.iter().position(|&v| !(v > 0.0)) {
                    Some(channel) => Err(BundleError::Variance { layer: name(), channel, value: running_var[channel] }),
                    None => Ok(()),
                }
            }
            Layer::BroadcastMul { gate, main, .. } => {
                gate.iter().chain(main).try_for_each(Layer::check_values)
            }
            _ => Ok(()),
        }
    }
}

/// Shape after applying `layers` in order.
pub fn chain_shape(layers: &[Layer], shape: (usize, usize)) -> Result<(usize, usize), BundleError> {
    layers.iter().try_fold(shape, |s, l| l.output_shape(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    /// Free-form tag, e.g. `chi_cnn` or `dnn`.
    pub architecture: String,
    pub input_width: usize,
    pub output_labels: Vec<String>,
    pub norm_lo: Vec<f64>,
    pub norm_hi: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl ModelBundle {
    pub fn new(architecture: &str, norm_lo: [f64; N_FEATURES], norm_hi: [f64; N_FEATURES], layers: Vec<Layer>) -> Self {
        Self {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            architecture: architecture.to_string(),
            input_width: N_FEATURES,
            output_labels: LABEL_NAMES.iter().map(|s| s.to_string()).collect(),
            norm_lo: norm_lo.to_vec(),
            norm_hi: norm_hi.to_vec(),
            layers,
        }
    }

    /// Checks the header, every parameter and the layer chain from
    /// `[1][15]` to two outputs.
    pub fn validate(&self) -> Result<(), BundleError> {
        if self.format != BUNDLE_FORMAT {
            return Err(BundleError::Format(format!("format tag {:?}", self.format)));
        }
        if self.version != BUNDLE_VERSION {
            return Err(BundleError::Version { found: self.version as u64 });
        }
        if self.input_width != N_FEATURES {
            return Err(BundleError::Header(format!("input_width {} (expected {N_FEATURES})", self.input_width)));
        }
        if self.output_labels != LABEL_NAMES {
            return Err(BundleError::Header(format!("output_labels {:?} (expected {LABEL_NAMES:?})", self.output_labels)));
        }
        if self.norm_lo.len() != N_FEATURES || self.norm_hi.len() != N_FEATURES {
            return Err(BundleError::Header(format!("normalization bounds need {N_FEATURES} entries")));
        }
        for i in 0..N_FEATURES {
            let (lo, hi) = (self.norm_lo[i], self.norm_hi[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(BundleError::Header(format!("bad normalization bounds [{lo}, {hi}] at feature {i}")));
            }
        }
        for layer in &self.layers {
            layer.check_values()?;
        }
        let mut shape = (1, N_FEATURES);
        for layer in &self.layers {
            shape = layer.output_shape(shape)?;
        }
        if shape.0 * shape.1 != LABEL_NAMES.len() {
            let last = self.layers.last().map(|l| l.name().to_string()).unwrap_or_else(|| "<input>".into());
            return Err(BundleError::Shape { layer: last, message: format!("final output {shape:?} is not 2 values") });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("bundle serializes");
        text.push('\n');
        text
    }

    /// Parses and validates bundle text. The header is checked before the
    /// layer list so that version and format errors are reported as such.
    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| BundleError::Parse(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| BundleError::Format("top level is not an object".into()))?;
        match obj.get("format").and_then(|v| v.as_str()) {
            Some(BUNDLE_FORMAT) => {}
            other => return Err(BundleError::Format(format!("format tag {other:?}"))),
        }
        match obj.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == BUNDLE_VERSION as u64 => {}
            Some(v) => return Err(BundleError::Version { found: v }),
            None => return Err(BundleError::Format("missing version".into())),
        }
        let bundle: ModelBundle = serde_json::from_value(value).map_err(|e| BundleError::Parse(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let text = fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.to_path_buf(), source })?;
    ModelBundle::from_json(&text)
}

pub fn save_bundle(path: &Path, bundle: &ModelBundle) -> Result<(), BundleError> {
    bundle.validate()?;
    fs::write(path, bundle.to_json()).map_err(|source| BundleError::Io { path: path.to_path_buf(), source })
}
