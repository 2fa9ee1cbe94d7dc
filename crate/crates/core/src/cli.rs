//! Command-line front end: file estimation, benchmark sweeps, weight
//! diagnostics and a streaming demo.
//!
//! Every report starts with a config echo. JSON reports carry
//! `schema_version`; CSV reports prefix the echo as `#` comment lines.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::ensemble::{default_t_values, edge_estimate, epsilon_for, solve_weights, EnsembleConfig};
use crate::error::{Error, Result};
use crate::estimator::{base_estimate, mi_from_samples, Generator, DEFAULT_CLIP_BOUND};
use crate::graph::build_graph;
use crate::hashing::{HashOptions, StableLaw, DEFAULT_C_H};
use crate::numeric::derive_seed;
use crate::online::{EpsilonSchedule, OnlineEnsemble, StreamState};
use crate::samples::SampleBatch;
use crate::synth::{generate, oracle_mi_with, SyntheticFamily, ORACLE_MC_SAMPLES};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad flags or an infeasible configuration.
    pub const CONFIG: i32 = 64;
    /// Unreadable, malformed or empty input data.
    pub const INPUT: i32 = 65;
    /// Numerical failure during estimation.
    pub const NUMERIC: i32 = 70;
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::EmptyInput | Error::Shape(_) | Error::NonFinite { .. } | Error::Parse { .. } | Error::Decode(_) | Error::Io(_) => {
            exit::INPUT
        }
        Error::InvalidArgument(_) | Error::Infeasible { .. } | Error::Unsupported(_) => exit::CONFIG,
        Error::NonFiniteGenerator { .. } | Error::Conditioning { .. } | Error::InfiniteMi(_) => exit::NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "edge-mi", version, about = "Hash-based mutual information estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate I(X;Y) from two CSV files with one row per sample.
    Estimate {
        /// CSV file with the X samples (header row required).
        #[arg(long)]
        x: PathBuf,
        /// CSV file with the Y samples (header row required).
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Mean, variance and MSE against the true value on a synthetic family.
    BenchMse {
        #[command(flatten)]
        family: FamilyArgs,
        /// Sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000,8000")]
        n_list: Vec<usize>,
        /// Trials per sample size (at least 2).
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Also run every variant with this hashing mode.
        #[arg(long, value_enum)]
        compare_mode: Option<ModeChoice>,
        /// Monte-Carlo budget for the reference value.
        #[arg(long, default_value_t = ORACLE_MC_SAMPLES)]
        oracle_samples: usize,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Wall time of one estimate per sample size.
    BenchRuntime {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        n_list: Vec<usize>,
        /// Timed repetitions per size after one warm-up run; the median is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print ensemble weights for a t grid.
    SolveWeights {
        #[arg(long, value_delimiter = ',', required = true)]
        t_values: Vec<f64>,
        /// Number of bias terms to cancel.
        #[arg(long)]
        d: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Stream a synthetic family through the online estimator.
    StreamDemo {
        #[command(flatten)]
        family: FamilyArgs,
        /// Number of pairs to push.
        #[arg(long, default_value_t = 4096)]
        n: usize,
        /// Report every this many pushes.
        #[arg(long, default_value_t = 256)]
        every: usize,
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    Shannon,
    Alpha,
    Tv,
    Chi2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Floor,
    Pstable,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    /// X ~ N(0, I_d), Y = X + a U[0,1]^d.
    GaussNoise,
    /// X uniform on {1..k}, Y ~ N([X/2, 0, ...], I_{d_y}).
    DiscreteMix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimatorArgs {
    /// Ensemble grid; defaults to 1.5, 2.5, ... with d + 3 entries.
    #[arg(long, value_delimiter = ',')]
    pub t_values: Option<Vec<f64>>,
    /// Use a single base estimate at this bin width instead of the ensemble.
    #[arg(long, visible_alias = "single-epsilon")]
    pub epsilon: Option<f64>,
    /// Number of bias terms the ensemble cancels; defaults to d.
    #[arg(long)]
    pub bias_order: Option<usize>,
    /// f-divergence generator.
    #[arg(long, value_enum, default_value_t = GeneratorChoice::Shannon)]
    pub g: GeneratorChoice,
    /// Order for --g alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Upper clip applied to g(omega).
    #[arg(long, default_value_t = DEFAULT_CLIP_BOUND)]
    pub u_bound: f64,
    #[arg(long, value_enum, default_value_t = ModeChoice::Floor)]
    pub mode: ModeChoice,
    /// Fixed hash shift b; drawn from the seed when omitted.
    #[arg(long)]
    pub shift: Option<f64>,
    /// Bucket multiplier: F = c_H * N.
    #[arg(long, default_value_t = DEFAULT_C_H)]
    pub c_h: u64,
    #[arg(long, env = "EDGE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Report bits instead of nats.
    #[arg(long)]
    pub bits: bool,
}

impl EstimatorArgs {
    pub fn generator(&self) -> Result<Generator> {
        let g = match self.g {
            GeneratorChoice::Shannon => Generator::shannon(),
            GeneratorChoice::Alpha => {
                let alpha = self.alpha.ok_or_else(|| Error::invalid("--g alpha requires --alpha"))?;
                Generator::alpha(alpha)?
            }
            GeneratorChoice::Tv => Generator::total_variation(),
            GeneratorChoice::Chi2 => Generator::chi_square(),
        };
        g.with_clip_bound(self.u_bound)
    }

    pub fn hash(&self) -> HashOptions {
        self.hash_for(self.mode)
    }

    fn hash_for(&self, mode: ModeChoice) -> HashOptions {
        let base = match mode {
            ModeChoice::Floor => HashOptions::floor(),
            ModeChoice::Pstable => HashOptions::pstable(None, StableLaw::Gaussian),
            ModeChoice::Exact => HashOptions::exact(),
        };
        let base = base.with_c_h(self.c_h);
        match self.shift {
            Some(b) => base.with_shift(b),
            None => base,
        }
    }

    fn ensemble_config(&self, d: usize, mode: ModeChoice) -> EnsembleConfig {
        let t = self.t_values.clone().unwrap_or_else(|| default_t_values(self.bias_order.unwrap_or(d)));
        let mut cfg = EnsembleConfig::new(t).with_hash(self.hash_for(mode));
        if let Some(order) = self.bias_order {
            cfg = cfg.with_bias_order(order);
        }
        cfg
    }

    fn units(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    fn convert(&self, nats: f64) -> f64 {
        if self.bits {
            nats / std::f64::consts::LN_2
        } else {
            nats
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value_t = FamilyChoice::GaussNoise)]
    pub family: FamilyChoice,
    /// Dimension of X and Y for gauss-noise.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Noise scale for gauss-noise.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Number of atoms for discrete-mix.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Dimension of Y for discrete-mix.
    #[arg(long, default_value_t = 4)]
    pub d_y: usize,
}

impl FamilyArgs {
    pub fn family(&self) -> SyntheticFamily {
        match self.family {
            FamilyChoice::GaussNoise => SyntheticFamily::GaussNoise { d: self.d, a: self.a },
            FamilyChoice::DiscreteMix => SyntheticFamily::DiscreteGaussMix { k: self.k, d_y: self.d_y },
        }
    }

    fn joint_dim(&self) -> usize {
        let (dx, dy) = self.family().dims();
        dx + dy
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// A rendered report: config echo, result rows and timing.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    /// Deterministic for a fixed config.
    pub result: Value,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    /// Wall-clock measurements; excluded from determinism guarantees.
    pub timing: Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "result": self.result,
            "rows": rows,
            "timing": self.timing,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# schema_version={SCHEMA_VERSION}");
        let _ = writeln!(s, "# command={}", self.command);
        let _ = writeln!(s, "# config={}", self.config);
        if !self.result.is_null() {
            let _ = writeln!(s, "# result={}", self.result);
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Reads a numeric CSV matrix with a header row. Returns the row-major
/// values and the column count.
pub fn read_matrix(path: &Path) -> Result<(Vec<f64>, usize)> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text)
}

/// Parses numeric CSV text; see [`read_matrix`].
pub fn parse_matrix(text: &str) -> Result<(Vec<f64>, usize)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header_cols = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, col: 1, msg: e.to_string() })?
        .len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, col: 1, msg: e.to_string() }
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != header_cols {
            return Err(Error::Parse {
                line,
                col: record.len().min(header_cols) + 1,
                msg: format!("expected {header_cols} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, col: c + 1, msg: format!("not a number: {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, col: c + 1, msg: format!("non-finite value {field:?}") });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 || header_cols == 0 {
        return Err(Error::EmptyInput);
    }
    Ok((values, header_cols))
}

/// Loads paired X/Y files into a batch.
pub fn load_batch(x: &Path, y: &Path) -> Result<SampleBatch> {
    let (xv, dx) = read_matrix(x)?;
    let (yv, dy) = read_matrix(y)?;
    let (nx, ny) = (xv.len() / dx, yv.len() / dy);
    if nx != ny {
        return Err(Error::Shape(format!("{} has {nx} rows but {} has {ny}", x.display(), y.display())));
    }
    SampleBatch::new(xv, dx, yv, dy)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

fn estimator_echo(est: &EstimatorArgs, d: usize, generator: &Generator) -> Value {
    let mut v = to_value(est);
    if est.epsilon.is_none() {
        v["t_values"] = to_value(&est.ensemble_config(d, est.mode).t_values);
    }
    v["generator"] = Value::String(generator.name());
    v["units"] = Value::String(est.units().into());
    v
}

/// `estimate` subcommand.
pub fn cmd_estimate(x: &Path, y: &Path, est: &EstimatorArgs) -> Result<Report> {
    let g = est.generator()?;
    let samples = load_batch(x, y)?;
    let d = samples.joint_dim();
    let mut config = json!({
        "x": x.display().to_string(),
        "y": y.display().to_string(),
        "n_samples": samples.len(),
        "dim_x": samples.dim_x(),
        "dim_y": samples.dim_y(),
    });
    config["estimator"] = estimator_echo(est, d, &g);
    let start = Instant::now();
    let (result, rows) = match est.epsilon {
        Some(eps) => {
            let e = mi_from_samples(&samples, eps, &g, est.seed, &est.hash())?;
            let v = est.convert(e.value);
            (json!({ "estimate": v, "epsilon": eps }), vec![vec![json!("single"), Value::Null, json!(eps), json!(v), json!(1.0)]])
        }
        None => {
            let e = edge_estimate(&samples, &est.ensemble_config(d, est.mode), &g, est.seed)?;
            let mut rows: Vec<Vec<Value>> = e
                .members
                .iter()
                .map(|m| vec![json!("member"), json!(m.t), json!(m.epsilon), json!(est.convert(m.estimate)), json!(m.weight)])
                .collect();
            let v = est.convert(e.value);
            rows.push(vec![json!("ensemble"), Value::Null, Value::Null, json!(v), Value::Null]);
            (json!({ "estimate": v, "weights": e.weights() }), rows)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(Report {
        command: "estimate",
        config,
        result,
        columns: vec!["kind", "t", "epsilon", "estimate", "weight"],
        rows,
        timing: json!({ "seconds": elapsed }),
    })
}

/// Per-trial estimates for one sample size: the ensemble value followed by
/// each member's single-width estimate.
fn trial_values(family: &SyntheticFamily, n: usize, est: &EstimatorArgs, cfg: &EnsembleConfig, g: &Generator, seed: u64) -> Result<Vec<f64>> {
    let samples = generate(family, n, derive_seed(seed, 0))?;
    match est.epsilon {
        Some(eps) => Ok(vec![mi_from_samples(&samples, eps, g, derive_seed(seed, 1), &cfg.hash)?.value]),
        None => {
            let e = edge_estimate(&samples, cfg, g, derive_seed(seed, 1))?;
            let mut out = vec![e.value];
            out.extend(e.members.iter().map(|m| m.estimate));
            Ok(out)
        }
    }
}

/// Sample mean, unbiased variance and mean squared error against `truth`.
pub fn summarize(values: &[f64], truth: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n;
    (mean, var, mse)
}

/// `bench-mse` subcommand.
pub fn cmd_bench_mse(
    family_args: &FamilyArgs,
    n_list: &[usize],
    trials: usize,
    compare_mode: Option<ModeChoice>,
    oracle_samples: usize,
    est: &EstimatorArgs,
) -> Result<Report> {
    if trials < 2 {
        return Err(Error::invalid("--trials must be at least 2"));
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("--n-list must hold positive sizes"));
    }
    let family = family_args.family();
    let g = est.generator()?;
    let d = family_args.joint_dim();
    let oracle = oracle_mi_with(&family, oracle_samples, est.seed)?;
    let mut modes = vec![est.mode];
    if let Some(m) = compare_mode.filter(|m| *m != est.mode) {
        modes.push(m);
    }

    let start = Instant::now();
    let mut rows = Vec::new();
    for &mode in &modes {
        let cfg = est.ensemble_config(d, mode);
        solve_weights(&cfg.t_values, cfg.bias_order.unwrap_or(d))?;
        let mode_name = to_value(&mode);
        let mode_name = mode_name.as_str().unwrap_or_default();
        let variants: Vec<String> = match est.epsilon {
            Some(eps) => vec![format!("single:eps={eps}")],
            None => std::iter::once("ensemble".to_string()).chain(cfg.t_values.iter().map(|t| format!("single:t={t}"))).collect(),
        };
        for &n in n_list {
            let n_seed = derive_seed(est.seed, n as u64);
            let per_trial: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|k| trial_values(&family, n, est, &cfg, &g, derive_seed(n_seed, k as u64)))
                .collect::<Result<_>>()?;
            for (j, name) in variants.iter().enumerate() {
                let vals: Vec<f64> = per_trial.iter().map(|t| t[j]).collect();
                let (mean, var, mse) = summarize(&vals, oracle.value);
                let eps = match est.epsilon {
                    Some(e) => json!(e),
                    None if j == 0 => Value::Null,
                    None => json!(epsilon_for(cfg.t_values[j - 1], n, d)),
                };
                rows.push(vec![json!(n), json!(mode_name), json!(name), eps, json!(mean), json!(mse), json!(var), json!(oracle.value)]);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut config = json!({
        "family": family,
        "n_list": n_list,
        "trials": trials,
        "compare_mode": compare_mode,
        "oracle_samples": oracle_samples,
    });
    config["estimator"] = estimator_echo(est, d, &g);
    Ok(Report {
        command: "bench-mse",
        config,
        result: json!({ "oracle": oracle }),
        columns: vec!["n", "mode", "variant", "epsilon", "mean", "mse", "var", "oracle"],
        rows,
        timing: json!({ "seconds": elapsed }),
    })
}

/// Median wall time of `repeats` estimates on one batch, after a warm-up.
pub fn time_estimate(samples: &SampleBatch, est: &EstimatorArgs, g: &Generator, repeats: usize) -> Result<f64> {
    let d = samples.joint_dim();
    let cfg = est.ensemble_config(d, est.mode);
    let run = || -> Result<f64> {
        Ok(match est.epsilon {
            Some(eps) => mi_from_samples(samples, eps, g, est.seed, &cfg.hash)?.value,
            None => edge_estimate(samples, &cfg, g, est.seed)?.value,
        })
    };
    run()?;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(run()?);
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// `bench-runtime` subcommand.
pub fn cmd_bench_runtime(family_args: &FamilyArgs, n_list: &[usize], repeats: usize, est: &EstimatorArgs) -> Result<Report> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("--n-list must hold positive sizes"));
    }
    let family = family_args.family();
    let g = est.generator()?;
    let d = family_args.joint_dim();
    let mut rows = Vec::new();
    let mut seconds = Vec::new();
    for &n in n_list {
        let samples = generate(&family, n, derive_seed(est.seed, n as u64))?;
        let t = time_estimate(&samples, est, &g, repeats)?;
        seconds.push(t);
        rows.push(vec![json!(n), json!(d), json!(t), json!(t / n as f64 * 1e9)]);
    }
    let mut config = json!({ "family": family, "n_list": n_list, "repeats": repeats });
    config["estimator"] = estimator_echo(est, d, &g);
    Ok(Report {
        command: "bench-runtime",
        config,
        result: Value::Null,
        columns: vec!["n", "d", "seconds", "ns_per_sample"],
        rows,
        timing: json!({ "seconds": seconds }),
    })
}

/// `solve-weights` subcommand.
pub fn cmd_solve_weights(t_values: &[f64], d: usize) -> Result<Report> {
    let w = solve_weights(t_values, d)?;
    let residual = crate::ensemble::constraint_residual(t_values, d, &w);
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rows = t_values.iter().zip(&w).map(|(t, w)| vec![json!(t), json!(w)]).collect();
    Ok(Report {
        command: "solve-weights",
        config: json!({ "t_values": t_values, "d": d }),
        result: json!({ "weights": w, "residual": residual, "norm": norm }),
        columns: vec!["t", "weight"],
        rows,
        timing: Value::Null,
    })
}

enum Streamer {
    Single(Box<StreamState>),
    Ensemble(OnlineEnsemble),
}

impl Streamer {
    fn push(&mut self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Streamer::Single(s) => s.push(x, y),
            Streamer::Ensemble(e) => e.push(x, y),
        }
    }

    fn rebuilds(&self) -> u64 {
        match self {
            Streamer::Single(s) => s.rebuilds(),
            Streamer::Ensemble(e) => e.members().iter().map(StreamState::rebuilds).sum(),
        }
    }

    /// Batch estimate over the retained prefix with the hash configs in force.
    fn batch(&self, g: &Generator) -> Result<f64> {
        fn member(s: &StreamState, g: &Generator) -> Result<f64> {
            let (cx, cy) = s.hash_configs().ok_or(Error::EmptyInput)?;
            let samples = s.samples()?;
            Ok(base_estimate(&build_graph(&samples, cx, cy)?, g)?.value)
        }
        match self {
            Streamer::Single(s) => member(s, g),
            Streamer::Ensemble(e) => e.members().iter().zip(e.weights()).map(|(m, w)| Ok(w * member(m, g)?)).sum(),
        }
    }
}

/// `stream-demo` subcommand.
pub fn cmd_stream_demo(family_args: &FamilyArgs, n: usize, every: usize, est: &EstimatorArgs) -> Result<Report> {
    if n == 0 || every == 0 {
        return Err(Error::invalid("--n and --every must be positive"));
    }
    let family = family_args.family();
    let g = est.generator()?;
    let (dx, dy) = family.dims();
    let samples = generate(&family, n, derive_seed(est.seed, 0))?;
    let mut streamer = match est.epsilon {
        Some(eps) => Streamer::Single(Box::new(StreamState::new(EpsilonSchedule::Constant(eps), g.clone(), est.seed, est.hash())?)),
        None => {
            let cfg = est.ensemble_config(dx + dy, est.mode);
            Streamer::Ensemble(OnlineEnsemble::new(cfg.t_values, dx, dy, g.clone(), est.seed, est.hash())?)
        }
    };
    let mut rows = Vec::new();
    let mut latencies = Vec::new();
    let mut window = 0.0;
    for (k, (x, y)) in samples.rows().enumerate() {
        let start = Instant::now();
        let v = streamer.push(x, y)?;
        window += start.elapsed().as_secs_f64();
        let count = k + 1;
        if count % every == 0 || count == n {
            let batch = streamer.batch(&g)?;
            rows.push(vec![json!(count), json!(est.convert(v)), json!(est.convert(batch)), json!(streamer.rebuilds())]);
            latencies.push(window / every as f64 * 1e9);
            window = 0.0;
        }
    }
    let mut config = json!({ "family": family, "n": n, "every": every });
    config["estimator"] = estimator_echo(est, dx + dy, &g);
    Ok(Report {
        command: "stream-demo",
        config,
        result: Value::Null,
        columns: vec!["n", "online", "batch", "rebuilds"],
        rows,
        timing: json!({ "mean_push_ns": latencies }),
    })
}

fn write_report(report: &Report, out: &OutputArgs) -> Result<()> {
    let text = report.render(out.format);
    match &out.out {
        Some(path) => fs::write(path, text)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Runs a parsed command and writes its report.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate { x, y, est, out } => write_report(&cmd_estimate(x, y, est)?, out),
        Command::BenchMse { family, n_list, trials, compare_mode, oracle_samples, est, out } => {
            write_report(&cmd_bench_mse(family, n_list, *trials, *compare_mode, *oracle_samples, est)?, out)
        }
        Command::BenchRuntime { family, n_list, repeats, est, out } => {
            write_report(&cmd_bench_runtime(family, n_list, *repeats, est)?, out)
        }
        Command::SolveWeights { t_values, d, out } => write_report(&cmd_solve_weights(t_values, *d)?, out),
        Command::StreamDemo { family, n, every, est, out } => write_report(&cmd_stream_demo(family, *n, *every, est)?, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
