//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid configuration or input data,
//! 4 missing or unreadable file, 5 computation failure. Failures print one
//! line to stderr: `error: code=<kind> message=<text>`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{Fading, DRAW_CSV_HEADER};
use crate::config::{ConfigError, SimConfig};
use crate::dataset::{self, DatasetError};
use crate::montecarlo::{self, estimate, sweep, LinkSimulator, McConfig, McError, SweepRow, DESK_REALIZATIONS, PAPER_REALIZATIONS};
use crate::scenario::{ScenarioBounds, ScenarioError, FEATURE_NAMES, N_FEATURES};
use crate::surrogate::{self, arch, load_bundle, BundleError, ModelBundle, SurrogateError};

pub const WORKERS_ENV: &str = "EHSPC_WORKERS";
pub const DEFAULT_SEED: u64 = 1;
/// Realizations written by `--dump-draws`.
pub const MAX_DUMPED_DRAWS: u64 = 1000;

#[derive(Debug, Parser)]
#[command(name = "ehspc", version, about = "Energy-harvesting short-packet multi-hop simulator and surrogate inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one configuration.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write per-realization channel gains of the first realizations.
        #[arg(long, value_name = "PATH")]
        dump_draws: Option<PathBuf>,
    },
    /// Re-estimate over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Config key to vary (e.g. i_th_db, m, b, K, scheme).
        #[arg(long)]
        axis: String,
        /// `start:stop:step` (stop included when reachable) or a comma list.
        #[arg(long)]
        grid: String,
        /// Repeat the sweep for each listed scheme (comma list).
        #[arg(long)]
        schemes: Option<String>,
    },
    /// Generate a labeled dataset directory.
    GenDataset {
        #[command(flatten)]
        common: Common,
        #[arg(long, short = 'n')]
        samples: usize,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Predict with a model bundle.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        /// Scenario CSV with the 15 feature columns; `-` reads stdin.
        #[arg(long, default_value = "-")]
        input: String,
    },
    /// RMSE of a bundle on a labeled dataset CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Simulation vs inference timing per scenario.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Bundle to time; defaults to a randomly initialized full-size CNN.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// CSV with columns K,L,M,N (other fields from the config).
        #[arg(long)]
        scenarios: PathBuf,
        /// Forward passes per scenario.
        #[arg(long, default_value_t = 100)]
        batch: usize,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Realizations per estimate (default 10000; bench default 500000).
    #[arg(long)]
    pub realizations: Option<u64>,
    /// Worker threads; defaults to the environment variable, then all cores.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Use independent seeds per grid point instead of common random numbers.
    #[arg(long, conflicts_with = "crn")]
    pub no_crn: bool,
    /// Common random numbers across grid points (default).
    #[arg(long)]
    pub crn: bool,
    /// Message size in bytes (sets b = 8 * bytes).
    #[arg(long)]
    pub bytes: Option<u32>,
    /// Deterministic unit-gain channels instead of Rayleigh fading.
    #[arg(long)]
    pub point_mass: bool,
    /// Output file (directory for gen-dataset); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Io,
    Compute,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Config => 3,
            ErrorKind::Io => 4,
            ErrorKind::Compute => 5,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Compute => "compute",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    /// Single-line machine-readable form.
    pub fn line(&self) -> String {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: code={} message={}", self.kind.tag(), flat)
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(ErrorKind::Config, e.to_string())
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::new(ErrorKind::Config, e.to_string())
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        let kind = match e {
            McError::Config(_) | McError::Scenario(_) | McError::Setting(_) | McError::UnknownAxis(_) => ErrorKind::Config,
            _ => ErrorKind::Compute,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::new(ErrorKind::Io, e.to_string()),
            DatasetError::Mc(inner) => inner.into(),
            other => CliError::new(ErrorKind::Config, other.to_string()),
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        let kind = if matches!(e, BundleError::Io { .. }) { ErrorKind::Io } else { ErrorKind::Config };
        CliError::new(kind, e.to_string())
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Bundle(b) => b.into(),
            SurrogateError::Mc(m) => m.into(),
            other => CliError::new(ErrorKind::Compute, other.to_string()),
        }
    }
}

/// Parses a grid: `start:stop:step` or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<String>, CliError> {
    let bad = |why: &str| CliError::new(ErrorKind::Usage, format!("bad grid {text:?}: {why}"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        let items: Vec<String> = text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(bad("empty"));
        }
        return Ok(items);
    }
    if parts.len() != 3 {
        return Err(bad("expected start:stop:step"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("not a number"));
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad("need step > 0 and stop >= start"));
    }
    let decimals = |s: &str| s.split_once('.').map(|(_, f)| f.len()).unwrap_or(0);
    let places = decimals(parts[0]).max(decimals(parts[2]));
    let span = (stop - start) / step;
    let count = (span + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(bad("too many points"));
    }
    Ok((0..count).map(|i| format!("{:.*}", places, start + i as f64 * step)).collect())
}

fn load_config(common: &Common) -> Result<SimConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            SimConfig::parse_text(&text)?
        }
        None => SimConfig::default(),
    };
    for assignment in &common.set {
        cfg.apply_override(assignment)?;
    }
    if let Some(bytes) = common.bytes {
        cfg.constants.b = bytes
            .checked_mul(8)
            .ok_or_else(|| CliError::new(ErrorKind::Config, format!("--bytes {bytes} overflows")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mc_config(common: &Common, cfg: &SimConfig, default_n: u64) -> McConfig {
    McConfig {
        n_realizations: common.realizations.unwrap_or(default_n),
        seed: common.seed,
        scheme: cfg.scheme,
        crn: !common.no_crn,
        fading: if common.point_mass { Fading::PointMass } else { Fading::Rayleigh },
    }
}

/// Invocation echoed into output headers, without the worker count.
fn invocation(args: &[String]) -> String {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--workers" {
            skip = true;
            continue;
        }
        if a.starts_with("--workers=") {
            continue;
        }
        out.push(a.as_str());
    }
    out.join(" ")
}

fn header_lines(args: &[String], common: &Common) -> String {
    format!("# invocation: {}\n# seed: {}\n# version: {}\n", invocation(args), common.seed, env!("CARGO_PKG_VERSION"))
}

/// Output sink: the `--out` file or the given writer.
fn with_output<W: Write>(
    out_path: Option<&Path>,
    stdout: &mut W,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), CliError> {
    match out_path {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            let mut w = BufWriter::new(file);
            body(&mut w).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
        }
        None => body(stdout).map_err(|e| CliError::new(ErrorKind::Io, format!("stdout: {e}"))),
    }
}

fn run_simulate<W: Write>(args: &[String], common: &Common, dump: Option<&Path>, stdout: &mut W) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mc = mc_config(common, &cfg, DESK_REALIZATIONS);
    let started = std::time::Instant::now();
    let est = estimate(&cfg.scenario, &cfg.constants, &mc)?;
    let wall_s = started.elapsed().as_secs_f64();
    if let Some(path) = dump {
        let sim = LinkSimulator::new(&cfg.scenario, &cfg.constants, mc.seed, mc.fading)?;
        let mut draw = sim.new_draw();
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> Result<(), CliError> {
            w.write_all(header_lines(args, common).as_bytes()).map_err(|e| io_error(path, e))?;
            writeln!(w, "{DRAW_CSV_HEADER}").map_err(|e| io_error(path, e))?;
            for i in 0..mc.n_realizations.min(MAX_DUMPED_DRAWS) {
                sim.draw(i, &mut draw)?;
                draw.write_csv_rows(i, &mut w).map_err(|e| io_error(path, e))?;
            }
            w.flush().map_err(|e| io_error(path, e))
        };
        write()?;
    }
    let hops: Vec<String> = est.per_hop_bler.iter().map(|v| v.to_string()).collect();
    let cis: Vec<String> = est.ci_halfwidth.iter().map(|v| v.to_string()).collect();
    let body = |w: &mut dyn Write| -> io::Result<()> {
        w.write_all(header_lines(args, common).as_bytes())?;
        writeln!(w, "scheme = {}", mc.scheme)?;
        writeln!(w, "e2e_bler = {}", est.e2e_bler)?;
        writeln!(w, "throughput = {}", est.throughput)?;
        writeln!(w, "reliability = {}", est.reliability)?;
        match est.latency {
            Some(l) => writeln!(w, "latency = {l}")?,
            None => writeln!(w, "latency = undefined")?,
        }
        writeln!(w, "per_hop_bler = {}", hops.join(";"))?;
        writeln!(w, "ci_halfwidth = {}", cis.join(";"))?;
        writeln!(w, "n_realizations = {}", est.n_realizations)?;
        writeln!(w, "wall_s = {wall_s}")
    };
    with_output(common.out.as_deref(), stdout, body)
}

fn run_sweep<W: Write>(
    args: &[String],
    common: &Common,
    axis: &str,
    grid: &str,
    schemes: Option<&str>,
    stdout: &mut W,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let grid = parse_grid(grid)?;
    let mc = mc_config(common, &cfg, DESK_REALIZATIONS);
    let scheme_list = match schemes {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().map_err(|e: crate::ehmodel::EhError| CliError::new(ErrorKind::Config, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![cfg.scheme],
    };
    let mut rows: Vec<SweepRow> = Vec::new();
    for scheme in scheme_list {
        let point = McConfig { scheme, ..mc.clone() };
        rows.extend(sweep(axis, &grid, &cfg, &point)?);
    }
    with_output(common.out.as_deref(), stdout, |w| {
        w.write_all(header_lines(args, common).as_bytes())?;
        writeln!(w, "# crn: {}", mc.crn)?;
        montecarlo::write_sweep_csv(&mut &mut *w, axis, &rows)
    })
}

fn run_gen_dataset<W: Write>(
    args: &[String],
    common: &Common,
    samples: usize,
    train_fraction: f64,
    stdout: &mut W,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mc = mc_config(common, &cfg, DESK_REALIZATIONS);
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::new(ErrorKind::Usage, "gen-dataset needs --out DIR"))?;
    let data = dataset::generate(samples, &mc, &ScenarioBounds::dataset_ranges(), &cfg.constants, train_fraction)?;
    dataset::write_dataset_dir(dir, &data)?;
    let manifest_path = dir.join(dataset::MANIFEST_FILE);
    let mut text = data.manifest.to_text();
    text.push_str(&format!("invocation = \"{}\"\n", invocation(args).replace('"', "'")));
    fs::write(&manifest_path, text).map_err(|e| io_error(&manifest_path, e))?;
    writeln!(stdout, "wrote {} rows to {}", samples, dir.display()).map_err(|e| io_error(Path::new("stdout"), e))
}

fn read_input(source: &str) -> Result<String, CliError> {
    if source == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| io_error(Path::new("stdin"), e))?;
        Ok(s)
    } else {
        let path = Path::new(source);
        fs::read_to_string(path).map_err(|e| io_error(path, e))
    }
}

/// Reads the 15 feature columns (by name, any order, extra columns ignored)
/// from a CSV that may carry `#` comment lines.
pub fn read_feature_rows(text: &str, source: &str) -> Result<Vec<[f64; N_FEATURES]>, CliError> {
    let bad = |m: String| CliError::new(ErrorKind::Config, format!("{source}: {m}"));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|name| headers.iter().position(|h| h == *name).ok_or_else(|| bad(format!("missing column {name}"))))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut x = [0.0; N_FEATURES];
        for (slot, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            x[slot] = field.parse().map_err(|_| bad(format!("row {}: bad value {field:?} for {}", line + 1, FEATURE_NAMES[slot])))?;
        }
        rows.push(x);
    }
    Ok(rows)
}

fn run_predict<W: Write>(args: &[String], common: &Common, bundle: &Path, input: &str, stdout: &mut W) -> Result<(), CliError> {
    let model = load_bundle(bundle)?;
    let rows = read_feature_rows(&read_input(input)?, input)?;
    let preds = surrogate::predict_batch(&model, &rows)?;
    with_output(common.out.as_deref(), stdout, |w| {
        w.write_all(header_lines(args, common).as_bytes())?;
        writeln!(w, "{},bler_hat,throughput_hat,extrapolated", FEATURE_NAMES.join(","))?;
        for (x, p) in rows.iter().zip(&preds) {
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            let flags: Vec<String> = p.extrapolated.iter().map(|i| FEATURE_NAMES[*i].to_string()).collect();
            writeln!(w, "{},{},{},{}", xs.join(","), p.y_hat[0], p.y_hat[1], flags.join(";"))?;
        }
        Ok(())
    })?;
    let extrapolated = preds.iter().filter(|p| !p.extrapolated.is_empty()).count();
    if extrapolated > 0 {
        eprintln!("warning: {extrapolated} row(s) outside the bundle's normalization bounds were extrapolated");
    }
    Ok(())
}

fn run_evaluate<W: Write>(args: &[String], common: &Common, bundle: &Path, data: &Path, stdout: &mut W) -> Result<(), CliError> {
    let model = load_bundle(bundle)?;
    let samples = dataset::read_csv_file(data)?;
    let xs: Vec<[f64; N_FEATURES]> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<[f64; 2]> = samples.iter().map(|s| s.y).collect();
    let preds = surrogate::predict_batch(&model, &xs)?;
    let yh: Vec<[f64; 2]> = preds.iter().map(|p| p.y_hat).collect();
    let total = surrogate::rmse(&ys, &yh)?;
    let column = |k: usize| {
        let sq: f64 = ys.iter().zip(&yh).map(|(a, b)| (a[k] - b[k]).powi(2)).sum();
        (sq / ys.len() as f64).sqrt()
    };
    let extrapolated = preds.iter().filter(|p| !p.extrapolated.is_empty()).count();
    with_output(common.out.as_deref(), stdout, |w| {
        w.write_all(header_lines(args, common).as_bytes())?;
        writeln!(w, "n = {}", ys.len())?;
        writeln!(w, "rmse = {total}")?;
        writeln!(w, "rmse_bler = {}", column(0))?;
        writeln!(w, "rmse_throughput = {}", column(1))?;
        writeln!(w, "extrapolated_rows = {extrapolated}")
    })
}

/// Scenarios for `bench`: columns `K,L,M,N` over the config defaults.
pub fn read_bench_scenarios(text: &str, source: &str, base: &SimConfig) -> Result<Vec<crate::scenario::Scenario>, CliError> {
    let bad = |m: String| CliError::new(ErrorKind::Config, format!("{source}: {m}"));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut cfg = base.clone();
        for (key, value) in headers.iter().zip(rec.iter()) {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        out.push(cfg.scenario);
    }
    if out.is_empty() {
        return Err(bad("no scenarios".into()));
    }
    Ok(out)
}

fn run_bench<W: Write>(
    args: &[String],
    common: &Common,
    bundle: Option<&Path>,
    scenarios: &Path,
    batch: usize,
    stdout: &mut W,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mc = mc_config(common, &cfg, PAPER_REALIZATIONS);
    let model: ModelBundle = match bundle {
        Some(p) => load_bundle(p)?,
        None => arch::chi_cnn(common.seed, arch::CNN_WIDTH, &ScenarioBounds::dataset_ranges().feature_bounds()),
    };
    let text = fs::read_to_string(scenarios).map_err(|e| io_error(scenarios, e))?;
    let list = read_bench_scenarios(&text, &scenarios.display().to_string(), &cfg)?;
    let rows = surrogate::bench(&model, &list, &cfg.constants, &mc, batch)?;
    with_output(common.out.as_deref(), stdout, |w| {
        w.write_all(header_lines(args, common).as_bytes())?;
        writeln!(w, "# bundle: {}", bundle.map(|p| p.display().to_string()).unwrap_or_else(|| "reference chi_cnn, random weights".into()))?;
        writeln!(w, "scenario,sim_s,cnn_s,speedup,rmse,n_realizations,batch")?;
        for r in &rows {
            writeln!(w, "\"{}\",{},{},{},{},{},{}", r.label, r.sim_s, r.cnn_s, r.speedup(), r.rmse, r.n_realizations, r.batch)?;
        }
        Ok(())
    })
}

fn common_of(cmd: &Command) -> &Common {
    match cmd {
        Command::Simulate { common, .. }
        | Command::Sweep { common, .. }
        | Command::GenDataset { common, .. }
        | Command::Predict { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Bench { common, .. } => common,
    }
}

/// Parses `args` (program name first) and runs the command, writing the
/// primary output to `stdout` unless `--out` is given.
pub fn run<W: Write>(args: Vec<OsString>, stdout: &mut W) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                write!(stdout, "{e}").map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
                return Ok(());
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            return Err(CliError::new(ErrorKind::Usage, first));
        }
    };
    let text_args: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let common = common_of(&cli.command);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::new(ErrorKind::Usage, "--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::new(ErrorKind::Compute, e.to_string()))?;
    let mut buffer: Vec<u8> = Vec::new();
    let sink = &mut buffer;
    let result = pool.install(|| match &cli.command {
        Command::Simulate { common, dump_draws } => run_simulate(&text_args, common, dump_draws.as_deref(), sink),
        Command::Sweep { common, axis, grid, schemes } => run_sweep(&text_args, common, axis, grid, schemes.as_deref(), sink),
        Command::GenDataset { common, samples, train_fraction } => {
            run_gen_dataset(&text_args, common, *samples, *train_fraction, sink)
        }
        Command::Predict { common, bundle, input } => run_predict(&text_args, common, bundle, input, sink),
        Command::Evaluate { common, bundle, data } => run_evaluate(&text_args, common, bundle, data, sink),
        Command::Bench { common, bundle, scenarios, batch } => {
            run_bench(&text_args, common, bundle.as_deref(), scenarios, *batch, sink)
        }
    });
    stdout.write_all(&buffer).map_err(|e| CliError::new(ErrorKind::Io, format!("stdout: {e}")))?;
    result
}

/// Process entry point; returns the exit code.
pub fn main_entry() -> i32 {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os().collect(), &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0:30:5").unwrap(), ["0", "5", "10", "15", "20", "25", "30"]);
        assert_eq!(parse_grid("0:10:4").unwrap(), ["0", "4", "8"]);
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap(), ["0.1", "0.2", "0.3"]);
        assert_eq!(parse_grid("PT, Max,Sum").unwrap(), ["PT", "Max", "Sum"]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn invocation_drops_workers() {
        let args: Vec<String> = ["ehspc", "sweep", "--workers", "8", "--axis", "K", "--workers=2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(invocation(&args), "ehspc sweep --axis K");
    }

    #[test]
    fn error_lines_are_single_line() {
        let e = CliError::new(ErrorKind::Config, "bad\nvalue  here");
        assert_eq!(e.line(), "error: code=config message=bad value here");
        assert_eq!(e.kind.exit_code(), 3);
    }

    #[test]
    fn feature_rows_by_name() {
        let fb = ScenarioBounds::dataset_ranges().feature_bounds();
        let mut text = String::from("# comment\nextra,");
        text.push_str(&FEATURE_NAMES.join(","));
        text.push('\n');
        text.push_str("9,");
        text.push_str(&fb.lo.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
        let rows = read_feature_rows(&text, "t").unwrap();
        assert_eq!(rows, vec![fb.lo]);
        assert!(read_feature_rows("L,K\n1,2\n", "t").is_err());
    }
}
