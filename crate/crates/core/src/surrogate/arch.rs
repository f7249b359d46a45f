//! Randomly initialized reference architectures, for tests, benchmarks and
//! as a template for exported bundles.

use rand::Rng;

use super::bundle::{Layer, ModelBundle};
use crate::channel::RngStream;
use crate::scenario::{FeatureBounds, N_FEATURES};

/// Channels per conv layer and neurons in the first fully connected layer.
pub const CNN_WIDTH: usize = 64;
pub const CHI_BLOCKS: usize = 4;
pub const STEM_KERNEL: usize = 5;
pub const DNN_HIDDEN: usize = 120;
pub const DNN_LAYERS: usize = 5;
pub const BN_EPS: f64 = 1e-5;

struct Init(RngStream);

impl Init {
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    fn uniform(&mut self, n: usize, fan_in: usize) -> Vec<f64> {
        let a = 1.0 / (fan_in as f64).sqrt();
        (0..n).map(|_| self.0.gen_range(-a..a)).collect()
    }

    fn range(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.0.gen_range(lo..hi)).collect()
    }

    fn conv1x1(&mut self, name: String, c_in: usize, c_out: usize) -> Layer {
        Layer::Conv1x1 {
            name,
            in_channels: c_in,
            out_channels: c_out,
            weight: self.uniform(c_in * c_out, c_in),
            bias: self.uniform(c_out, c_in),
        }
    }

    fn fc(&mut self, name: String, n_in: usize, n_out: usize) -> Layer {
        Layer::FullyConnected {
            name,
            in_features: n_in,
            out_features: n_out,
            weight: self.uniform(n_in * n_out, n_in),
            bias: self.uniform(n_out, n_in),
        }
    }

    fn batchnorm(&mut self, name: String, c: usize) -> Layer {
        Layer::Batchnorm {
            name,
            channels: c,
            gamma: self.range(c, 0.8, 1.2),
            beta: self.range(c, -0.1, 0.1),
            running_mean: self.range(c, -0.1, 0.1),
            running_var: self.range(c, 0.5, 1.5),
            eps: BN_EPS,
        }
    }
}

/// One channel-attention block: gap -> `gate_conv` -> gate -> `gate_fc` ->
/// gate on one branch, `main` on the other.
pub fn chi_block(prefix: &str, gate_conv: Layer, gate_fc: Layer, main: [Layer; 4]) -> Layer {
    Layer::BroadcastMul {
        name: prefix.to_string(),
        gate: vec![
            Layer::Gap { name: format!("{prefix}.gap") },
            gate_conv,
            Layer::SigmoidGateMul { name: format!("{prefix}.gate1") },
            gate_fc,
            Layer::SigmoidGateMul { name: format!("{prefix}.gate2") },
        ],
        main: main.into(),
    }
}

/// Stem conv (kernel 5, zero padding) -> batchnorm -> relu, `CHI_BLOCKS`
/// channel-attention blocks, flatten, fc1 -> relu -> fc2.
pub fn chi_cnn(seed: u64, channels: usize, bounds: &FeatureBounds) -> ModelBundle {
    let mut init = Init(RngStream::new(seed));
    let c = channels;
    let mut layers = vec![
        Layer::Conv1d {
            name: "stem.conv".into(),
            in_channels: 1,
            out_channels: c,
            kernel_size: STEM_KERNEL,
            padding: STEM_KERNEL / 2,
            weight: init.uniform(c * STEM_KERNEL, STEM_KERNEL),
            bias: init.uniform(c, STEM_KERNEL),
        },
        init.batchnorm("stem.bn".into(), c),
        Layer::Relu { name: "stem.relu".into() },
    ];
    for b in 0..CHI_BLOCKS {
        let p = format!("block{b}");
        let gate_conv = init.conv1x1(format!("{p}.gate_conv"), c, c);
        let gate_fc = init.fc(format!("{p}.gate_fc"), c, c);
        let main = [
            init.conv1x1(format!("{p}.conv_a"), c, c),
            init.batchnorm(format!("{p}.bn_a"), c),
            init.conv1x1(format!("{p}.conv_b"), c, c),
            init.batchnorm(format!("{p}.bn_b"), c),
        ];
        layers.push(chi_block(&p, gate_conv, gate_fc, main));
    }
    layers.push(Layer::Flatten { name: "flatten".into() });
    layers.push(init.fc("fc1".into(), c * N_FEATURES, CNN_WIDTH));
    layers.push(Layer::Relu { name: "fc1.relu".into() });
    layers.push(init.fc("fc2".into(), CNN_WIDTH, 2));
    ModelBundle::new("chi_cnn", bounds.lo, bounds.hi, layers)
}

/// Fully connected baseline: `DNN_LAYERS` hidden layers of `DNN_HIDDEN`
/// ReLU units.
pub fn dnn(seed: u64, bounds: &FeatureBounds) -> ModelBundle {
    let mut init = Init(RngStream::new(seed));
    let mut layers = vec![Layer::Flatten { name: "flatten".into() }];
    let mut width = N_FEATURES;
    for i in 0..DNN_LAYERS {
        layers.push(init.fc(format!("hidden{i}"), width, DNN_HIDDEN));
        layers.push(Layer::Relu { name: format!("hidden{i}.relu") });
        width = DNN_HIDDEN;
    }
    layers.push(init.fc("out".into(), width, 2));
    ModelBundle::new("dnn", bounds.lo, bounds.hi, layers)
}

/// Pre-activation that saturates every gate of [`identity_micro`].
pub const MICRO_GATE_BIAS: f64 = 40.0;
pub const MICRO_OUT_WEIGHT: [f64; 2] = [2.0, -0.5];
pub const MICRO_OUT_BIAS: [f64; 2] = [0.25, 1.0];

/// One-channel network with identity main paths and constant gates. With
/// `z` the normalized input and `g = gate_mul(MICRO_GATE_BIAS)^4`, output
/// `k` is `MICRO_OUT_WEIGHT[k] * g * mean(z) + MICRO_OUT_BIAS[k]` for
/// in-bounds inputs.
pub fn identity_micro(bounds: &FeatureBounds) -> ModelBundle {
    let unit_conv = |name: String, bias: f64| Layer::Conv1x1 {
        name,
        in_channels: 1,
        out_channels: 1,
        weight: vec![if bias == 0.0 { 1.0 } else { 0.0 }],
        bias: vec![bias],
    };
    let identity_bn = |name: String| Layer::Batchnorm {
        name,
        channels: 1,
        gamma: vec![1.0],
        beta: vec![0.0],
        running_mean: vec![0.0],
        running_var: vec![1.0],
        eps: 0.0,
    };
    let mut layers = vec![
        Layer::Conv1d {
            name: "stem.conv".into(),
            in_channels: 1,
            out_channels: 1,
            kernel_size: STEM_KERNEL,
            padding: STEM_KERNEL / 2,
            weight: vec![0.0, 0.0, 1.0, 0.0, 0.0],
            bias: vec![0.0],
        },
        identity_bn("stem.bn".into()),
        Layer::Relu { name: "stem.relu".into() },
    ];
    for b in 0..CHI_BLOCKS {
        let p = format!("block{b}");
        layers.push(chi_block(
            &p,
            unit_conv(format!("{p}.gate_conv"), MICRO_GATE_BIAS),
            Layer::FullyConnected {
                name: format!("{p}.gate_fc"),
                in_features: 1,
                out_features: 1,
                weight: vec![0.0],
                bias: vec![MICRO_GATE_BIAS],
            },
            [
                unit_conv(format!("{p}.conv_a"), 0.0),
                identity_bn(format!("{p}.bn_a")),
                unit_conv(format!("{p}.conv_b"), 0.0),
                identity_bn(format!("{p}.bn_b")),
            ],
        ));
    }
    layers.push(Layer::Flatten { name: "flatten".into() });
    layers.push(Layer::FullyConnected {
        name: "fc1".into(),
        in_features: N_FEATURES,
        out_features: 1,
        weight: vec![1.0 / N_FEATURES as f64; N_FEATURES],
        bias: vec![0.0],
    });
    layers.push(Layer::Relu { name: "fc1.relu".into() });
    layers.push(Layer::FullyConnected {
        name: "fc2".into(),
        in_features: 1,
        out_features: 2,
        weight: MICRO_OUT_WEIGHT.to_vec(),
        bias: MICRO_OUT_BIAS.to_vec(),
    });
    ModelBundle::new("micro", bounds.lo, bounds.hi, layers)
}
