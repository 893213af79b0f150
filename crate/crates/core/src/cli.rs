//! Command-line front end behind the `conjucode` binary.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 a required scenario check failed under `scenario --check`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::decoder::{lag_grid, Dataset, Design, FeatureKind, Target, DEFAULT_RIDGE};
use crate::encoders::{simulate_grid_cells, simulate_hd_cells, simulate_theta_population, SpikeRaster};
use crate::error::{Error, Result};
use crate::experiments::report::{sha256_hex, OutputRecord};
use crate::experiments::{run_scenario, ScenarioConfig, ScenarioId, ScenarioReport};
use crate::io::{read_matrix_bin, read_matrix_csv, read_raster_bin, read_raster_csv, write_matrix_bin, write_matrix_csv, write_raster_bin, write_raster_csv};
use crate::rates::{cofiring_strided, firing_rates_strided, multi_ring_cofiring, FeatureMatrix, IntegratorConfig, PairingSpec};
use crate::trajectory::{gen_head_angle, gen_track_run, ingest_tracking_csv, HeadAngleParams, TrackRunParams, TrackingFormat, Trajectory};

pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "conjucode", version, about = "Simulate spike trains and decode position and velocity from firing and co-firing rates")]
struct Cli {
    /// Worker threads; defaults to CONJUCODE_THREADS, then the number of logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trajectory and a spike raster.
    Simulate(SimulateArgs),
    /// Integrate a raster into firing and co-firing rates.
    Rates(RatesArgs),
    /// Fit a linear read-out on one recording and score it on another.
    Decode(DecodeArgs),
    /// Run one or more scenarios and write their reports.
    Scenario(ScenarioArgs),
    /// Re-render tables and plots from a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Population {
    Hd,
    Grid,
    Theta,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    population: Population,
    /// Scenario config supplying trajectory and population parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Tracking CSV to drive the population instead of a synthetic trajectory.
    #[arg(long)]
    tracking: Option<PathBuf>,
    #[arg(long, default_value = "boom_angle")]
    tracking_format: String,
    /// Moving-average window for tracking coordinates, in tracking samples.
    #[arg(long, default_value_t = 1)]
    smooth: usize,
    /// Write the raster in the binary format instead of CSV.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Pairing {
    None,
    HdRing,
    RingPairs,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Raster file; `.bin` selects the binary reader.
    #[arg(long)]
    raster: PathBuf,
    /// Integration time constant, seconds.
    #[arg(long)]
    tau: f64,
    /// Separate chi-rate time constant, seconds; defaults to `tau`.
    #[arg(long)]
    tau_v: Option<f64>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, value_enum, default_value = "hd-ring")]
    pairing: Pairing,
    /// Cells per ring for `ring-pairs`.
    #[arg(long, default_value_t = 12)]
    ring_size: usize,
    /// Ring pairs as `a:b,c:d`; defaults to every pair.
    #[arg(long)]
    ring_pairs: Option<String>,
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Angle,
    Velocity,
    Position,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Firing,
    Cofiring,
    Combined,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Training feature matrices; several are stacked row-wise.
    #[arg(long, required = true)]
    train_features: Vec<PathBuf>,
    #[arg(long)]
    train_trajectory: PathBuf,
    #[arg(long, required = true)]
    test_features: Vec<PathBuf>,
    #[arg(long)]
    test_trajectory: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Spatial period for `position`, cm.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_enum, default_value = "combined")]
    kind: KindArg,
    /// Fixed lag, seconds; omit to sweep.
    #[arg(long)]
    lag_s: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    max_lag_s: f64,
    #[arg(long, default_value_t = 0.01)]
    lag_step_s: f64,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long, default_value_t = 1)]
    train_seed: u64,
    #[arg(long, default_value_t = 2)]
    test_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario ids (`E1,E4` or `all`); taken from `--config` when omitted.
    #[arg(long, value_delimiter = ',')]
    id: Vec<String>,
    /// Scenario config or run manifest; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    test_seed: Option<u64>,
    #[arg(long)]
    train_s: Option<f64>,
    #[arg(long)]
    test_s: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    reference_tau: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Output root; each scenario writes into `<out>/<id>`.
    #[arg(long, default_value = "conjucode-out")]
    out: PathBuf,
    /// Exit with status 4 when a required check fails.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    no_json: bool,
    #[arg(long)]
    no_csv: bool,
    #[arg(long)]
    no_svg: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A `report.json`, or a directory holding one.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_svg: bool,
}

/// Manifest written beside the outputs of `simulate`, `rates` and `decode`.
#[derive(Debug, Serialize)]
struct CommandManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: Value,
    config_sha256: String,
    seeds: Vec<u64>,
    outputs: Vec<OutputRecord>,
}

struct Outputs {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        fs::write(self.dir.join(name), &bytes)?;
        self.records.push(OutputRecord { file: name.into(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    fn finish(self, command: &'static str, config: Value, seeds: Vec<u64>) -> Result<()> {
        let text = serde_json::to_string_pretty(&config)?;
        let manifest = CommandManifest {
            tool: "conjucode",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            config_sha256: sha256_hex(text.as_bytes()),
            seeds,
            outputs: self.records,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("CONJUCODE_THREADS") {
        Ok(s) => s.trim().parse().map_err(|_| Error::Config(format!("CONJUCODE_THREADS must be a thread count, got {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| 0),
        Command::Rates(a) => rates(a).map(|_| 0),
        Command::Decode(a) => decode(a).map(|_| 0),
        Command::Scenario(a) => scenario(a),
        Command::Report(a) => report(a).map(|_| 0),
    })
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let default_id = match a.population {
        Population::Hd => ScenarioId::E1,
        Population::Grid => ScenarioId::E4,
        Population::Theta => ScenarioId::E6,
    };
    let cfg = match &a.config {
        Some(p) => ScenarioConfig::from_value(read_json(p)?)?,
        None => ScenarioConfig::defaults(default_id),
    };
    let traj = match &a.tracking {
        Some(path) => ingest_tracking_csv(path, a.tracking_format.parse::<TrackingFormat>()?, a.smooth)?,
        None => match a.population {
            Population::Hd => gen_head_angle(a.seed, &HeadAngleParams { duration_s: a.duration, ..cfg.head })?,
            Population::Grid | Population::Theta => gen_track_run(a.seed, &TrackRunParams { duration_s: a.duration, ..cfg.track })?,
        },
    };
    let raster = match a.population {
        Population::Hd => simulate_hd_cells(&traj, &cfg.hd, a.seed)?,
        Population::Grid => simulate_grid_cells(&traj, &cfg.grid, a.seed)?,
        Population::Theta => {
            let lambdas = if cfg.lambdas_cm.is_empty() { ScenarioConfig::defaults(ScenarioId::E6).lambdas_cm } else { cfg.lambdas_cm.clone() };
            let specs: Vec<_> = lambdas.iter().map(|&l| cfg.theta.ring(l)).collect();
            let rings = simulate_theta_population(&traj, &specs, a.seed)?;
            SpikeRaster::stack(&rings.iter().collect::<Vec<_>>())?
        }
    };
    let mut out = Outputs::new(&a.out)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    out.write("trajectory.csv", buf)?;
    let mut buf = Vec::new();
    if a.binary {
        write_raster_bin(&raster, &mut buf)?;
        out.write("raster.bin", buf)?;
    } else {
        write_raster_csv(&raster, &mut buf)?;
        out.write("raster.csv", buf)?;
    }
    let config = json!({
        "population": format!("{:?}", a.population).to_lowercase(),
        "duration_s": a.duration,
        "tracking": a.tracking.as_ref().map(|p| p.display().to_string()),
        "tracking_format": a.tracking_format,
        "smooth": a.smooth,
        "scenario_config": cfg,
    });
    out.finish("simulate", config, vec![a.seed])
}

fn is_bin(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn load_raster(path: &Path) -> Result<SpikeRaster> {
    let file = fs::File::open(path)?;
    if is_bin(path) {
        read_raster_bin(file)
    } else {
        read_raster_csv(file)
    }
}

fn load_matrix(path: &Path) -> Result<FeatureMatrix> {
    let file = fs::File::open(path)?;
    if is_bin(path) {
        read_matrix_bin(file)
    } else {
        read_matrix_csv(file)
    }
}

fn parse_ring_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let (a, b) = part.split_once(':').ok_or_else(|| Error::Config(format!("ring pair {part:?} is not of the form a:b")))?;
            let num = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad ring index in {part:?}")));
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn rates(a: RatesArgs) -> Result<()> {
    let raster = load_raster(&a.raster)?;
    let icfg = IntegratorConfig { tau_u: a.tau, tau_v: a.tau_v.unwrap_or(a.tau) };
    icfg.validate()?;
    if a.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let firing = firing_rates_strided(&raster, &icfg, a.stride)?;
    let cofiring = match a.pairing {
        Pairing::None => None,
        Pairing::HdRing => Some(cofiring_strided(&raster, &PairingSpec::HdRing { n: raster.n_cells() }, &icfg, a.stride)?),
        Pairing::RingPairs => {
            let p = a.ring_size;
            if p == 0 || raster.n_cells() % p != 0 {
                return Err(Error::Pairing(format!("{} cells do not split into rings of {p}", raster.n_cells())));
            }
            let n_rings = raster.n_cells() / p;
            let pairs = match &a.ring_pairs {
                Some(text) => parse_ring_pairs(text)?,
                None => (0..n_rings).flat_map(|x| (x + 1..n_rings).map(move |y| (x, y))).collect(),
            };
            let rings = (0..n_rings).map(|r| raster.select_cells(r * p..(r + 1) * p)).collect::<Result<Vec<_>>>()?;
            Some(multi_ring_cofiring(&rings.iter().collect::<Vec<_>>(), &pairs, &icfg, a.stride)?)
        }
    };
    let mut out = Outputs::new(&a.out)?;
    let ext = if a.binary { "bin" } else { "csv" };
    for (name, m) in [("firing", Some(&firing)), ("cofiring", cofiring.as_ref())] {
        if let Some(m) = m {
            let mut buf = Vec::new();
            if a.binary {
                write_matrix_bin(m, &mut buf)?;
            } else {
                write_matrix_csv(m, &mut buf)?;
            }
            out.write(&format!("{name}.{ext}"), buf)?;
        }
    }
    let config = json!({
        "raster": a.raster.display().to_string(),
        "integrator": icfg,
        "stride": a.stride,
        "pairing": format!("{:?}", a.pairing),
        "ring_size": a.ring_size,
        "ring_pairs": a.ring_pairs,
    });
    out.finish("rates", config, Vec::new())
}

fn load_features(paths: &[PathBuf]) -> Result<FeatureMatrix> {
    let parts = paths.iter().map(|p| load_matrix(p)).collect::<Result<Vec<_>>>()?;
    FeatureMatrix::stack(&parts.iter().collect::<Vec<_>>())
}

fn decode_target(traj: &Trajectory, which: TargetArg, scale: Option<f64>, stride: usize, cols: usize) -> Result<Target> {
    let pick = |x: &[f64]| -> Result<Vec<f64>> {
        let v: Vec<f64> = x.iter().step_by(stride).copied().collect();
        if v.len() != cols {
            return Err(Error::Shape(format!("trajectory gives {} target columns, features have {cols}", v.len())));
        }
        Ok(v)
    };
    Ok(match which {
        TargetArg::Angle => Target::Angle(pick(&traj.q)?),
        TargetArg::Velocity => Target::Scalar(pick(&traj.v)?),
        TargetArg::Position => {
            let scale = scale.ok_or_else(|| Error::Config("position targets need --scale".into()))?;
            Target::Angle(pick(&traj.phase_within(scale)?)?)
        }
    })
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::read_csv(fs::File::open(path)?, None)
}

fn decode(a: DecodeArgs) -> Result<()> {
    let (train_m, test_m) = (load_features(&a.train_features)?, load_features(&a.test_features)?);
    if train_m.stride != test_m.stride {
        return Err(Error::Shape("train and test features use different strides".into()));
    }
    let stride = train_m.stride;
    let (train_t, test_t) = (read_trajectory(&a.train_trajectory)?, read_trajectory(&a.test_trajectory)?);
    let kind = match a.kind {
        KindArg::Firing => FeatureKind::Firing,
        KindArg::Cofiring => FeatureKind::Cofiring,
        KindArg::Combined => FeatureKind::Combined,
    };
    let tr_target = decode_target(&train_t, a.target, a.scale, stride, train_m.cols)?;
    let te_target = decode_target(&test_t, a.target, a.scale, stride, test_m.cols)?;
    let samples = |s: f64| -> Result<usize> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config(format!("lag {s} s must be finite and non-negative")));
        }
        let n = (s / train_t.clock.dt).round() as usize;
        Ok(n / stride * stride)
    };
    let lags = match a.lag_s {
        Some(l) => vec![samples(l)?],
        None => {
            let step = samples(a.lag_step_s)?.max(stride);
            lag_grid(samples(a.max_lag_s)?, step)
        }
    };
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let train = Dataset::new(train_m, tr_target, kind, a.train_seed)?;
    let test = Dataset::new(test_m, te_target, kind, a.test_seed)?;
    let design = Design::new(&train, max_lag, a.ridge)?;
    let rows: Vec<usize> = (0..design.n_rows()).collect();
    let sweep = design.sweep(&rows, &train.target, &test, &lags, kind)?;
    let mut out = Outputs::new(&a.out)?;
    out.write("weights.json", sweep.best.to_json()?.into_bytes())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_s", "target", "decoded"])?;
    let dt = train_t.clock.dt * stride as f64;
    // target samples are reported at their own times, before the lag
    let first = test.features.cols - sweep.result.target.len() - sweep.best.lag_columns();
    for (i, (t, p)) in sweep.result.target.iter().zip(&sweep.result.predicted).enumerate() {
        w.write_record([((first + i) as f64 * dt).to_string(), t.to_string(), p.to_string()])?;
    }
    out.write("decoded.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let summary = json!({
        "best_lag_s": sweep.best_lag as f64 * train_t.clock.dt,
        "mse": sweep.result.mse,
        "chance_mse": sweep.result.chance_mse,
        "relative": sweep.result.relative(),
        "lags_s": sweep.lags.iter().map(|&l| l as f64 * train_t.clock.dt).collect::<Vec<_>>(),
        "lag_mse": sweep.mse,
    });
    out.write("summary.json", serde_json::to_string_pretty(&summary)?.into_bytes())?;
    println!("best lag {:.3} s: MSE {:.4} against chance {:.4} (relative {:.3})", sweep.best_lag as f64 * train_t.clock.dt, sweep.result.mse, sweep.result.chance_mse, sweep.result.relative());
    let config = json!({
        "train_features": a.train_features.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "test_features": a.test_features.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "train_trajectory": a.train_trajectory.display().to_string(),
        "test_trajectory": a.test_trajectory.display().to_string(),
        "target": format!("{:?}", a.target),
        "scale": a.scale,
        "kind": kind,
        "lags": lags,
        "ridge": a.ridge,
    });
    out.finish("decode", config, vec![a.train_seed, a.test_seed])
}

/// Builds the config of each requested scenario: file values first, then flags.
fn scenario_configs(a: &ScenarioArgs) -> Result<Vec<ScenarioConfig>> {
    let file = a.config.as_deref().map(read_json).transpose()?;
    let mut ids: Vec<ScenarioId> = Vec::new();
    for s in &a.id {
        if s.eq_ignore_ascii_case("all") {
            ids.extend(ScenarioId::ALL);
        } else {
            ids.push(s.parse()?);
        }
    }
    let base = file.map(|mut v| {
        if let Some(inner) = v.get("config").filter(|_| v.get("outputs").is_some()) {
            v = inner.clone();
        }
        v
    });
    if ids.is_empty() {
        let id = base.as_ref().and_then(|v| v.get("id")).and_then(Value::as_str).ok_or_else(|| Error::Config("give --id or a --config with an id".into()))?;
        ids.push(id.parse()?);
    }
    ids.sort();
    ids.dedup();
    let mut overrides = serde_json::Map::new();
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            overrides.insert(k.to_string(), v);
        }
    };
    set("train_seed", a.train_seed.map(Value::from));
    set("test_seed", a.test_seed.map(Value::from));
    set("train_s", a.train_s.map(Value::from));
    set("test_s", a.test_s.map(Value::from));
    set("taus", a.taus.clone().map(Value::from));
    set("reference_tau", a.reference_tau.map(Value::from));
    set("repetitions", a.repetitions.map(Value::from));
    ids.into_iter()
        .map(|id| {
            let mut v = match &base {
                Some(b) => {
                    let file_id = b.get("id").and_then(Value::as_str);
                    if file_id.is_some_and(|f| f.parse::<ScenarioId>().ok() != Some(id)) {
                        return Err(Error::Config(format!("config is for scenario {}, not {id}", file_id.unwrap_or_default())));
                    }
                    b.clone()
                }
                None => json!({}),
            };
            let obj = v.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
            obj.insert("id".into(), Value::from(id.to_string()));
            for (k, val) in &overrides {
                obj.insert(k.clone(), val.clone());
            }
            ScenarioConfig::from_value(v)
        })
        .collect()
}

fn print_checks(report: &ScenarioReport) {
    for c in &report.checks {
        let tag = if c.passed { "pass" } else { "FAIL" };
        let req = if c.required { "required" } else { "info" };
        println!("  [{tag}] ({req}) {}: {}", c.name, c.detail);
    }
}

fn scenario(a: ScenarioArgs) -> Result<i32> {
    // every config is validated before any simulation starts
    let configs = scenario_configs(&a)?;
    let reports: Vec<Result<ScenarioReport>> = configs.par_iter().map(run_scenario).collect();
    let mut all_passed = true;
    for (cfg, report) in configs.iter().zip(reports) {
        let report = report?;
        let dir = a.out.join(cfg.id.to_string());
        report.write(&dir, !a.no_json, !a.no_csv, !a.no_svg)?;
        let passed = report.required_passed();
        all_passed &= passed;
        println!("{} {}: {} -> {}", cfg.id, if passed { "passed" } else { "FAILED" }, cfg.id.description(), dir.display());
        print_checks(&report);
    }
    Ok(if a.check && !all_passed { EXIT_CHECK_FAILED } else { 0 })
}

fn report(a: ReportArgs) -> Result<()> {
    let path = if a.input.is_dir() { a.input.join("report.json") } else { a.input.clone() };
    let report = ScenarioReport::from_json(&fs::read_to_string(&path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    report.write(&a.out, true, true, !a.no_svg)?;
    println!("{}: {}", report.id, report.description);
    print_checks(&report);
    Ok(())
}
