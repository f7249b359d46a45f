//! Labeled scenario datasets: generation, CSV persistence, normalization and
//! hold-out splits.
//!
//! Row `i` of a dataset generated with seed `s` draws its scenario from
//! stream `s / 0 / i` and its label from a Monte-Carlo run seeded by
//! [`label_seed`]`(s, i)`, so any row can be regenerated on its own.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{mix64, RngStream};
use crate::config::parse_pairs;
use crate::ehmodel::EhScheme;
use crate::montecarlo::{estimate, McConfig, McError};
use crate::scenario::{
    sample_scenario, Constants, FeatureBounds, IntRange, RealRange, Scenario, ScenarioBounds, ScenarioError,
    FEATURE_NAMES, INTEGER_FEATURES, N_E_UNIT, N_FEATURES,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const LABEL_NAMES: [&str; 2] = ["bler", "throughput"];
pub const DATASET_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

const SCENARIO_BRANCH: u64 = 0;
const SPLIT_BRANCH: u64 = 1;
const LABEL_SALT: u64 = 0x6c61_6265_6c73_0001;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: header must be {expected:?}, found {found:?}")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path}: manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("feature {index} ({name}) = {value} outside [{lo}, {hi}]")]
    OutOfBounds { index: usize, name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("dataset is empty")]
    Empty,
    #[error("invalid split fractions ({train}, {test}): must be in [0, 1] and sum to 1")]
    Fractions { train: f64, test: f64 },
    #[error("invalid dataset request: {0}")]
    Request(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Mc(#[from] McError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// One labeled scenario: features in input-vector order and
/// `[e2e BLER, throughput]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: [f64; N_FEATURES],
    pub y: [f64; 2],
}

/// Every parameter needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub scheme: EhScheme,
    pub n_realizations: u64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub constants: Constants,
    pub bounds: FeatureBounds,
    /// Mean and maximum 95% half-width of the end-to-end BLER labels,
    /// propagated from the per-hop half-widths.
    pub bler_ci_mean: f64,
    pub bler_ci_max: f64,
}

/// A generated dataset and its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub manifest: DatasetManifest,
}

/// Monte-Carlo seed of row `index`.
pub fn label_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index ^ LABEL_SALT))
}

/// Scenario of row `index`.
pub fn sample_row_scenario(seed: u64, index: u64, bounds: &ScenarioBounds) -> Result<Scenario, ScenarioError> {
    sample_scenario(&mut RngStream::at_path(seed, &[SCENARIO_BRANCH, index]), bounds)
}

/// Recovers sampling bounds from per-feature bounds (n_E in channel uses).
pub fn scenario_bounds(fb: &FeatureBounds) -> Result<ScenarioBounds, DatasetError> {
    let int = |i: usize| -> Result<IntRange, DatasetError> {
        let (lo, hi) = (fb.lo[i], fb.hi[i]);
        if lo.fract() != 0.0 || hi.fract() != 0.0 || lo < 0.0 || hi > u32::MAX as f64 {
            return Err(DatasetError::Request(format!("{} bounds must be integers", FEATURE_NAMES[i])));
        }
        Ok(IntRange::new(lo as u32, hi as u32))
    };
    let real = |i: usize| RealRange::new(fb.lo[i], fb.hi[i]);
    let n_e = int(13)?;
    if n_e.lo % N_E_UNIT != 0 || n_e.hi % N_E_UNIT != 0 {
        return Err(DatasetError::Request(format!("n_E bounds must be multiples of {N_E_UNIT}")));
    }
    let bounds = ScenarioBounds {
        antennas: int(0)?,
        hops: int(1)?,
        primary_tx: int(2)?,
        primary_rx: int(3)?,
        x_pt: real(4),
        y_pt: real(5),
        x_pr: real(6),
        y_pr: real(7),
        x_pb: real(8),
        y_pb: real(9),
        p_pb_db: real(10),
        i_th_db: real(11),
        p_pt_db: real(12),
        n_e_hundreds: IntRange::new(n_e.lo / N_E_UNIT, n_e.hi / N_E_UNIT),
        r_th: real(14),
    };
    bounds.validate()?;
    Ok(bounds)
}

fn label_row(
    index: u64,
    seed: u64,
    bounds: &ScenarioBounds,
    constants: &Constants,
    mc: &McConfig,
) -> Result<(Sample, f64), DatasetError> {
    let scenario = sample_row_scenario(seed, index, bounds)?;
    let row_mc = McConfig { seed: label_seed(seed, index), crn: false, ..mc.clone() };
    let est = estimate(&scenario, constants, &row_mc)?;
    // Delta-method bound: d(e2e)/d(eps_k) <= 1.
    let ci = est.ci_halfwidth.iter().sum::<f64>();
    Ok((Sample { x: scenario.features(), y: [est.e2e_bler, est.throughput] }, ci))
}

/// Generates `n` labeled rows. `mc.seed` seeds both the scenarios and the
/// labels; rows are computed in parallel and returned in index order.
pub fn generate(
    n: usize,
    mc: &McConfig,
    bounds: &ScenarioBounds,
    constants: &Constants,
    train_fraction: f64,
) -> Result<Dataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Request("n must be at least 1".into()));
    }
    check_fractions(train_fraction, 1.0 - train_fraction)?;
    bounds.validate()?;
    constants.validate()?;
    let rows = (0..n as u64)
        .into_par_iter()
        .map(|i| label_row(i, mc.seed, bounds, constants, mc))
        .collect::<Result<Vec<_>, _>>()?;
    let cis: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let finite: Vec<f64> = cis.iter().copied().filter(|c| c.is_finite()).collect();
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        n_samples: n,
        seed: mc.seed,
        scheme: mc.scheme,
        n_realizations: mc.n_realizations,
        train_fraction,
        test_fraction: 1.0 - train_fraction,
        constants: constants.clone(),
        bounds: bounds.feature_bounds(),
        bler_ci_mean: if finite.len() == cis.len() {
            crate::montecarlo::pairwise_sum(&cis) / n as f64
        } else {
            f64::INFINITY
        },
        bler_ci_max: cis.iter().copied().fold(0.0, f64::max),
    };
    Ok(Dataset { samples: rows.into_iter().map(|r| r.0).collect(), manifest })
}

/// Regenerates row `index` from a manifest.
pub fn regenerate_row(manifest: &DatasetManifest, index: u64) -> Result<Sample, DatasetError> {
    let bounds = scenario_bounds(&manifest.bounds)?;
    let mc = McConfig {
        n_realizations: manifest.n_realizations,
        seed: manifest.seed,
        scheme: manifest.scheme,
        ..McConfig::default()
    };
    Ok(label_row(index, manifest.seed, &bounds, &manifest.constants, &mc)?.0)
}

/// Header line of every dataset CSV.
pub fn csv_header() -> String {
    FEATURE_NAMES.iter().chain(LABEL_NAMES.iter()).copied().collect::<Vec<_>>().join(",")
}

fn format_value(index: usize, v: f64) -> String {
    if INTEGER_FEATURES.contains(&index) && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // 17 significant digits round-trip every f64.
        format!("{v:.16e}")
    }
}

/// Writes rows with the fixed header. Integer features are written as
/// integers, everything else with 17 significant digits.
pub fn write_csv<W: Write>(out: W, samples: &[Sample]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(FEATURE_NAMES.iter().chain(LABEL_NAMES.iter()))?;
    for s in samples {
        let record: Vec<String> = s
            .x
            .iter()
            .enumerate()
            .map(|(i, &v)| format_value(i, v))
            .chain(s.y.iter().map(|v| format!("{v:.16e}")))
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, samples: &[Sample]) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_csv(std::io::BufWriter::new(file), samples)
        .map_err(|e| DatasetError::Csv { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_csv_file(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text, path)
}

/// Parses a dataset CSV; `path` only labels errors.
pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let csv_err = |message: String| DatasetError::Csv { path: path.to_path_buf(), message };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| csv_err(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    let expected = csv_header();
    if found != expected {
        return Err(DatasetError::Header { path: path.to_path_buf(), expected, found });
    }
    let mut samples = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let mut values = [0.0; N_FEATURES + 2];
        for (slot, field) in values.iter_mut().zip(record.iter()) {
            *slot = field
                .trim()
                .parse()
                .map_err(|e| csv_err(format!("row {}: {field:?}: {e}", row + 1)))?;
        }
        let mut x = [0.0; N_FEATURES];
        x.copy_from_slice(&values[..N_FEATURES]);
        samples.push(Sample { x, y: [values[N_FEATURES], values[N_FEATURES + 1]] });
    }
    Ok(samples)
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let c = &self.constants;
        let mut lines = vec![
            format!("schema_version = {}", self.schema_version),
            format!("dataset_file = \"{DATASET_FILE}\""),
            format!("n_samples = {}", self.n_samples),
            format!("seed = {}", self.seed),
            format!("scheme = \"{}\"", self.scheme),
            format!("n_realizations = {}", self.n_realizations),
            format!("train_fraction = {:?}", self.train_fraction),
            format!("test_fraction = {:?}", self.test_fraction),
            format!("eta = {:?}", c.eta),
            format!("m = {}", c.m),
            format!("b = {}", c.b),
            format!("big_t = {:?}", c.big_t),
            format!("sigma2 = {:?}", c.sigma2),
            format!("pl_exp = {:?}", c.pl_exp),
            format!("sigma_pl_db = {:?}", c.sigma_pl_db),
            format!("d0 = {:?}", c.d0),
            format!("bler_ci_mean = {}", toml_float(self.bler_ci_mean)),
            format!("bler_ci_max = {}", toml_float(self.bler_ci_max)),
        ];
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            lines.push(format!("norm_lo_{name} = {:?}", self.bounds.lo[i]));
            lines.push(format!("norm_hi_{name} = {:?}", self.bounds.hi[i]));
        }
        lines.join("\n") + "\n"
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self, DatasetError> {
        let bad = |message: String| DatasetError::Manifest { path: path.to_path_buf(), message };
        let pairs = parse_pairs(text).map_err(|e| bad(e.to_string()))?;
        let get = |key: &str| -> Result<&str, DatasetError> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| bad(format!("missing key {key}")))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str, path: &Path) -> Result<T, DatasetError> {
            v.parse().map_err(|_| DatasetError::Manifest {
                path: path.to_path_buf(),
                message: format!("bad value {v:?} for {key}"),
            })
        }
        let field = |key: &str| -> Result<f64, DatasetError> { num(key, get(key)?, path) };
        let version: u32 = num("schema_version", get("schema_version")?, path)?;
        if version != SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {version}")));
        }
        let mut lo = [0.0; N_FEATURES];
        let mut hi = [0.0; N_FEATURES];
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            lo[i] = field(&format!("norm_lo_{name}"))?;
            hi[i] = field(&format!("norm_hi_{name}"))?;
        }
        let manifest = Self {
            schema_version: version,
            n_samples: num("n_samples", get("n_samples")?, path)?,
            seed: num("seed", get("seed")?, path)?,
            scheme: get("scheme")?.parse().map_err(|e: crate::ehmodel::EhError| bad(e.to_string()))?,
            n_realizations: num("n_realizations", get("n_realizations")?, path)?,
            train_fraction: field("train_fraction")?,
            test_fraction: field("test_fraction")?,
            constants: Constants {
                eta: field("eta")?,
                m: num("m", get("m")?, path)?,
                b: num("b", get("b")?, path)?,
                big_t: field("big_t")?,
                sigma2: field("sigma2")?,
                pl_exp: field("pl_exp")?,
                sigma_pl_db: field("sigma_pl_db")?,
                d0: field("d0")?,
            },
            bounds: FeatureBounds { lo, hi },
            bler_ci_mean: field("bler_ci_mean")?,
            bler_ci_max: field("bler_ci_max")?,
        };
        manifest.validate().map_err(|e| bad(e.to_string()))?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        check_fractions(self.train_fraction, self.test_fraction)?;
        for i in 0..N_FEATURES {
            let (lo, hi) = (self.bounds.lo[i], self.bounds.hi[i]);
            let ok = if INTEGER_FEATURES.contains(&i) { lo <= hi } else { lo < hi };
            if !ok {
                return Err(DatasetError::Request(format!(
                    "bounds for {} must satisfy lo < hi, got [{lo}, {hi}]",
                    FEATURE_NAMES[i]
                )));
            }
        }
        Ok(())
    }
}

fn toml_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

/// Writes `dataset.csv`, `manifest.toml`, `train.csv` and `test.csv` into
/// `dir`, creating it if needed.
pub fn write_dataset_dir(dir: &Path, data: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv_file(&dir.join(DATASET_FILE), &data.samples)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, data.manifest.to_text()).map_err(io_err(&manifest_path))?;
    let (train, test) = split(&data.samples, data.manifest.train_fraction, data.manifest.seed)?;
    write_csv_file(&dir.join(TRAIN_FILE), &train)?;
    write_csv_file(&dir.join(TEST_FILE), &test)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    DatasetManifest::parse_text(&text, path)
}

/// Min-max scaling onto `[0, 1]`. Degenerate integer ranges map to 0.
pub fn normalize(x: &[f64; N_FEATURES], bounds: &FeatureBounds) -> Result<[f64; N_FEATURES], DatasetError> {
    let mut out = [0.0; N_FEATURES];
    for i in 0..N_FEATURES {
        let (lo, hi) = (bounds.lo[i], bounds.hi[i]);
        if !(x[i] >= lo && x[i] <= hi) {
            return Err(DatasetError::OutOfBounds { index: i, name: FEATURE_NAMES[i], value: x[i], lo, hi });
        }
        out[i] = if hi > lo { (x[i] - lo) / (hi - lo) } else { 0.0 };
    }
    Ok(out)
}

/// Inverse of [`normalize`].
pub fn denormalize(z: &[f64; N_FEATURES], bounds: &FeatureBounds) -> [f64; N_FEATURES] {
    std::array::from_fn(|i| bounds.lo[i] + z[i] * (bounds.hi[i] - bounds.lo[i]))
}

fn check_fractions(train: f64, test: f64) -> Result<(), DatasetError> {
    let valid = (0.0..=1.0).contains(&train) && (0.0..=1.0).contains(&test) && (train + test - 1.0).abs() < 1e-12;
    if valid {
        Ok(())
    } else {
        Err(DatasetError::Fractions { train, test })
    }
}

/// Seeded shuffle then hold-out split; `round(n * train_fraction)` rows go
/// to the training side.
pub fn split(samples: &[Sample], train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>), DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    check_fractions(train_fraction, 1.0 - train_fraction)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut RngStream::at_path(seed, &[SPLIT_BRANCH]));
    let n_train = (samples.len() as f64 * train_fraction).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
