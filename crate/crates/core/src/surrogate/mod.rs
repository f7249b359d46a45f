//! Surrogate inference: model bundles, the forward pass, RMSE and
//! simulation-vs-inference timing.

pub mod arch;
pub mod bundle;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

pub use bundle::{load_bundle, save_bundle, BundleError, Layer, ModelBundle};

use crate::montecarlo::{estimate, McConfig, McError};
use crate::scenario::{Constants, Scenario, N_FEATURES};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("shape mismatch at {layer:?}: {message}")]
    Shape { layer: String, message: String },
    #[error("length mismatch: {0} vs {1} rows")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Channel-major feature map: `data[c * width + w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * width, "feature map size");
        Self { channels, width, data }
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.width..(c + 1) * self.width]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x * sigmoid(x)`.
#[inline]
pub fn gate_mul(x: f64) -> f64 {
    x * sigmoid(x)
}

fn shape_err(layer: &Layer, message: String) -> SurrogateError {
    SurrogateError::Shape { layer: layer.name().to_string(), message }
}

/// Applies one layer. Parameter lengths are assumed validated; only the
/// incoming shape is checked.
pub fn apply_layer(layer: &Layer, x: &FeatureMap) -> Result<FeatureMap, SurrogateError> {
    let (c, w) = (x.channels, x.width);
    let expected = layer
        .output_shape((c, w))
        .map_err(|e| shape_err(layer, e.to_string()))?;
    let out = match layer {
        Layer::Conv1d { out_channels, kernel_size, padding, weight, bias, .. } => {
            let k = *kernel_size;
            let mut data = vec![0.0; out_channels * w];
            for o in 0..*out_channels {
                for pos in 0..w {
                    let mut acc = bias[o];
                    for i in 0..c {
                        let wrow = &weight[(o * c + i) * k..(o * c + i + 1) * k];
                        let xrow = x.row(i);
                        for (t, &wt) in wrow.iter().enumerate() {
                            // Zero padding outside [0, w).
                            let src = pos as isize + t as isize - *padding as isize;
                            if src >= 0 && (src as usize) < w {
                                acc += wt * xrow[src as usize];
                            }
                        }
                    }
                    data[o * w + pos] = acc;
                }
            }
            FeatureMap::new(*out_channels, w, data)
        }
        Layer::Conv1x1 { out_channels, weight, bias, .. } => {
            let mut data = vec![0.0; out_channels * w];
            for o in 0..*out_channels {
                let out_row = &mut data[o * w..(o + 1) * w];
                out_row.fill(bias[o]);
                for i in 0..c {
                    let wt = weight[o * c + i];
                    for (acc, &v) in out_row.iter_mut().zip(x.row(i)) {
                        *acc += wt * v;
                    }
                }
            }
            FeatureMap::new(*out_channels, w, data)
        }
        Layer::Batchnorm { gamma, beta, running_mean, running_var, eps, .. } => {
            let mut data = x.data.clone();
            for ch in 0..c {
                let scale = gamma[ch] / (running_var[ch] + eps).sqrt();
                for v in &mut data[ch * w..(ch + 1) * w] {
                    *v = (*v - running_mean[ch]) * scale + beta[ch];
                }
            }
            FeatureMap::new(c, w, data)
        }
        Layer::Relu { .. } => FeatureMap::new(c, w, x.data.iter().map(|&v| v.max(0.0)).collect()),
        Layer::SigmoidGateMul { .. } => FeatureMap::new(c, w, x.data.iter().map(|&v| gate_mul(v)).collect()),
        Layer::Gap { .. } => FeatureMap::new(c, 1, (0..c).map(|ch| x.row(ch).iter().sum::<f64>() / w as f64).collect()),
        Layer::Flatten { .. } => FeatureMap::new(c * w, 1, x.data.clone()),
        Layer::FullyConnected { in_features, out_features, weight, bias, .. } => {
            let data = (0..*out_features)
                .map(|o| {
                    let wrow = &weight[o * in_features..(o + 1) * in_features];
                    bias[o] + wrow.iter().zip(&x.data).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            FeatureMap::new(*out_features, 1, data)
        }
        Layer::BroadcastMul { gate, main, .. } => {
            let g = apply_chain(gate, x)?;
            let mut m = apply_chain(main, x)?;
            let mw = m.width;
            for ch in 0..m.channels {
                for v in &mut m.data[ch * mw..(ch + 1) * mw] {
                    *v *= g.data[ch];
                }
            }
            m
        }
    };
    debug_assert_eq!((out.channels, out.width), expected);
    Ok(out)
}

pub fn apply_chain(layers: &[Layer], x: &FeatureMap) -> Result<FeatureMap, SurrogateError> {
    let mut cur = x.clone();
    for layer in layers {
        cur = apply_layer(layer, &cur)?;
    }
    Ok(cur)
}

/// Forward pass of one channel-attention block (a `broadcast_mul` layer).
pub fn chi_block_forward(f_in: &FeatureMap, block: &Layer) -> Result<FeatureMap, SurrogateError> {
    match block {
        Layer::BroadcastMul { .. } => apply_layer(block, f_in),
        other => Err(shape_err(other, format!("expected a broadcast_mul block, got {}", other.kind()))),
    }
}

/// Output shape of every top-level layer for a width-15 input.
pub fn trace_shapes(bundle: &ModelBundle) -> Result<Vec<(String, &'static str, (usize, usize))>, BundleError> {
    let mut shape = (1, N_FEATURES);
    let mut out = Vec::new();
    for layer in &bundle.layers {
        shape = layer.output_shape(shape)?;
        out.push((layer.name().to_string(), layer.kind(), shape));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[e2e BLER, throughput]`.
    pub y_hat: [f64; 2],
    pub elapsed: Duration,
    /// Features outside the bundle's normalization bounds. They are still
    /// evaluated.
    pub extrapolated: Vec<usize>,
}

/// Min-max normalizes `x` with the bundle bounds; out-of-range features are
/// extrapolated linearly and reported.
pub fn normalize_input(bundle: &ModelBundle, x: &[f64; N_FEATURES]) -> ([f64; N_FEATURES], Vec<usize>) {
    let mut flagged = Vec::new();
    let z = std::array::from_fn(|i| {
        let (lo, hi) = (bundle.norm_lo[i], bundle.norm_hi[i]);
        if !(x[i] >= lo && x[i] <= hi) {
            flagged.push(i);
        }
        if hi > lo { (x[i] - lo) / (hi - lo) } else { 0.0 }
    });
    (z, flagged)
}

pub fn forward(bundle: &ModelBundle, x: &[f64; N_FEATURES]) -> Result<Prediction, SurrogateError> {
    let started = Instant::now();
    let (z, extrapolated) = normalize_input(bundle, x);
    let out = apply_chain(&bundle.layers, &FeatureMap::new(1, N_FEATURES, z.to_vec()))?;
    if out.data.len() != 2 {
        return Err(SurrogateError::Shape { layer: "<output>".into(), message: format!("{} outputs", out.data.len()) });
    }
    Ok(Prediction { y_hat: [out.data[0], out.data[1]], elapsed: started.elapsed(), extrapolated })
}

/// Forward pass over many inputs on the current rayon pool, in input order.
pub fn predict_batch(bundle: &ModelBundle, xs: &[[f64; N_FEATURES]]) -> Result<Vec<Prediction>, SurrogateError> {
    xs.par_iter().map(|x| forward(bundle, x)).collect()
}

/// `sqrt(mean((y - y_hat)^2))` over all `2n` entries.
pub fn rmse(y: &[[f64; 2]], y_hat: &[[f64; 2]]) -> Result<f64, SurrogateError> {
    if y.len() != y_hat.len() {
        return Err(SurrogateError::Length(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(SurrogateError::Empty);
    }
    let sum: f64 = y.iter().zip(y_hat).flat_map(|(a, b)| [(a[0] - b[0]).powi(2), (a[1] - b[1]).powi(2)]).sum();
    Ok((sum / (2 * y.len()) as f64).sqrt())
}

/// One timing row: simulation of a scenario vs inference of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub sim_s: f64,
    /// Wall time of `batch` forward passes.
    pub cnn_s: f64,
    pub batch: usize,
    /// RMSE between the simulated and predicted `[BLER, throughput]`.
    pub rmse: f64,
    pub n_realizations: u64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.sim_s / self.cnn_s
    }
}

/// `{K,L,M,N}` label.
pub fn scenario_label(s: &Scenario) -> String {
    format!("{{{},{},{},{}}}", s.hops, s.antennas, s.primary_tx, s.primary_rx)
}

/// For each scenario: one Monte-Carlo estimate, then `batch` forward passes
/// of the same scenario. Both run on the current rayon pool.
pub fn bench(
    bundle: &ModelBundle,
    scenarios: &[Scenario],
    constants: &Constants,
    mc: &McConfig,
    batch: usize,
) -> Result<Vec<BenchRow>, SurrogateError> {
    if scenarios.is_empty() || batch == 0 {
        return Err(SurrogateError::Empty);
    }
    let mut rows = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let t = Instant::now();
        let est = estimate(s, constants, mc)?;
        let sim_s = t.elapsed().as_secs_f64();
        let xs = vec![s.features(); batch];
        let t = Instant::now();
        let preds = predict_batch(bundle, &xs)?;
        let cnn_s = t.elapsed().as_secs_f64();
        let truth = [est.e2e_bler, est.throughput];
        rows.push(BenchRow {
            label: scenario_label(s),
            sim_s,
            cnn_s,
            batch,
            rmse: rmse(&[truth], &[preds[0].y_hat])?,
            n_realizations: mc.n_realizations,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::arch::{chi_block, chi_cnn, dnn, identity_micro, CNN_WIDTH, MICRO_GATE_BIAS, MICRO_OUT_BIAS, MICRO_OUT_WEIGHT};
    use super::*;
    use crate::scenario::ScenarioBounds;

    fn conv1x1(name: &str, w: f64, b: f64) -> Layer {
        Layer::Conv1x1 { name: name.into(), in_channels: 1, out_channels: 1, weight: vec![w], bias: vec![b] }
    }

    fn fc(name: &str, n_in: usize, n_out: usize, w: f64, b: f64) -> Layer {
        Layer::FullyConnected {
            name: name.into(),
            in_features: n_in,
            out_features: n_out,
            weight: vec![w; n_in * n_out],
            bias: vec![b; n_out],
        }
    }

    fn bn(name: &str, gamma: f64, beta: f64, mean: f64, var: f64, eps: f64) -> Layer {
        Layer::Batchnorm {
            name: name.into(),
            channels: 1,
            gamma: vec![gamma],
            beta: vec![beta],
            running_mean: vec![mean],
            running_var: vec![var],
            eps,
        }
    }

    #[test]
    fn hand_trace_w3_c1() {
        let block = chi_block(
            "b",
            conv1x1("g1", 0.5, -0.25),
            fc("g2", 1, 1, 2.0, 0.1),
            [conv1x1("a", 1.5, 0.5), bn("bna", 2.0, 0.3, 0.1, 4.0, 0.0), conv1x1("c", -1.0, 0.2), bn("bnb", 1.0, -0.5, 0.0, 0.25, 0.0)],
        );
        let x = [1.0, -2.0, 0.5];
        let out = chi_block_forward(&FeatureMap::new(1, 3, x.to_vec()), &block).unwrap();

        // Step-by-step scalar evaluation.
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let p = (1.0 - 2.0 + 0.5) / 3.0;
        let f1 = 0.5 * p - 0.25;
        let fp = f1 * sig(f1);
        let ffc = 2.0 * fp + 0.1;
        let fpp = ffc * sig(ffc);
        for (i, &xi) in x.iter().enumerate() {
            let a = 1.5 * xi + 0.5;
            let a = (a - 0.1) * 2.0 / 4.0f64.sqrt() + 0.3;
            let c = -a + 0.2;
            let c = (c - 0.0) * 1.0 / 0.25f64.sqrt() - 0.5;
            assert!((out.data[i] - fpp * c).abs() < 1e-15, "{i}: {} vs {}", out.data[i], fpp * c);
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let zero = |name: &str| conv1x1(name, 0.0, 0.0);
        let block = chi_block(
            "z",
            zero("g1"),
            fc("g2", 1, 1, 0.0, 0.0),
            [zero("a"), bn("bna", 0.0, 0.0, 0.0, 1.0, 1e-5), zero("c"), bn("bnb", 0.0, 0.0, 0.0, 1.0, 1e-5)],
        );
        let out = chi_block_forward(&FeatureMap::new(1, 4, vec![3.0, -1.0, 7.0, 0.5]), &block).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!(gate_mul(0.0), 0.0);
    }

    #[test]
    fn identity_bundle_is_affine_in_input_mean() {
        let b = identity_micro(&ScenarioBounds::dataset_ranges().feature_bounds());
        b.validate().unwrap();
        let gain = gate_mul(MICRO_GATE_BIAS).powi(4);
        let fb = ScenarioBounds::dataset_ranges().feature_bounds();
        for s in 0..20u64 {
            let x = crate::dataset::sample_row_scenario(s, 0, &ScenarioBounds::dataset_ranges()).unwrap().features();
            let z = crate::dataset::normalize(&x, &fb).unwrap();
            let mean = z.iter().sum::<f64>() / N_FEATURES as f64;
            let p = forward(&b, &x).unwrap();
            let expect: [f64; 2] = std::array::from_fn(|k| MICRO_OUT_WEIGHT[k] * gain * mean + MICRO_OUT_BIAS[k]);
            for k in 0..2 {
                assert!((p.y_hat[k] - expect[k]).abs() < 1e-12 * (1.0 + expect[k].abs()));
            }
            assert!(p.extrapolated.is_empty());
        }
    }

    #[test]
    fn full_cnn_shapes_and_finiteness() {
        let fb = ScenarioBounds::dataset_ranges().feature_bounds();
        let b = chi_cnn(7, CNN_WIDTH, &fb);
        b.validate().unwrap();
        let shapes = trace_shapes(&b).unwrap();
        for (name, kind, shape) in &shapes {
            if kind.starts_with("conv") || *kind == "broadcast_mul" || *kind == "batchnorm" {
                assert_eq!(shape.1, N_FEATURES, "{name}");
            }
        }
        assert_eq!(shapes.iter().find(|s| s.0 == "flatten").unwrap().2, (CNN_WIDTH * N_FEATURES, 1));
        for s in 0..10u64 {
            let x = crate::dataset::sample_row_scenario(s, 0, &ScenarioBounds::dataset_ranges()).unwrap().features();
            let p = forward(&b, &x).unwrap();
            assert!(p.y_hat.iter().all(|v| v.is_finite()));
            assert_eq!(forward(&b, &x).unwrap().y_hat.map(f64::to_bits), p.y_hat.map(f64::to_bits));
        }
        let d = dnn(2, &fb);
        assert!(forward(&d, &fb.hi).unwrap().y_hat.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn extrapolation_is_flagged_not_rejected() {
        let b = identity_micro(&ScenarioBounds::dataset_ranges().feature_bounds());
        let mut x = ScenarioBounds::dataset_ranges().feature_bounds().hi;
        x[1] = 8.0;
        let p = forward(&b, &x).unwrap();
        assert_eq!(p.extrapolated, vec![1]);
        assert!(p.y_hat.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gate_bounds() {
        for &v in &[-30.0, -2.0, -1e-3, 0.0, 0.7, 5.0, 40.0] {
            let s = sigmoid(v);
            assert!(s > 0.0 && s < 1.0 || v.abs() > 30.0);
            assert!(gate_mul(v).abs() <= v.abs());
        }
    }

    #[test]
    fn rmse_examples() {
        let y = [[0.1, 0.2], [0.3, 0.4]];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let off = [[1.1, 1.2], [1.3, 1.4]];
        assert!((rmse(&y, &off).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(rmse(&y, &off[..1]), Err(SurrogateError::Length(2, 1))));
        assert!(matches!(rmse(&[], &[]), Err(SurrogateError::Empty)));
    }

    #[test]
    fn bench_row_shape() {
        let b = identity_micro(&ScenarioBounds::dataset_ranges().feature_bounds());
        let s = Scenario { hops: 2, antennas: 3, primary_tx: 4, primary_rx: 3, ..Scenario::default() };
        let rows = bench(&b, &[s], &Constants::default(), &McConfig { n_realizations: 500, ..McConfig::default() }, 10).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, "{2,3,4,3}");
        assert!(rows[0].sim_s > 0.0 && rows[0].cnn_s > 0.0 && rows[0].rmse.is_finite());
    }
}
