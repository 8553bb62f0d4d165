//! Command-line front end. Exit codes: 0 success, 1 runtime error, 2 parse or
//! config error, 3 solver did not converge, 4 bench failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bench::{probes_for, run_suite, BenchConfig};
use crate::expr::{builtin_family, BuiltinFamily, ExprError, SmoothingFamily};
use crate::field::{estimate_with_target, write_samples_csv, EstimatorConfig, FieldError, DEFAULT_SEED};
use crate::solver::{certify_final, smoothing_solve, write_trace_csv, InnerSolver, Schedule, SolverError, SolverStatus, DEFAULT_CERT_TOL};

pub const SCHEMA: &str = "limitfield/v1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_BENCH_FAILED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Family(ExprError),
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("output failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Family(_) | CliError::Config(_) | CliError::Read { .. } => EXIT_PARSE,
            CliError::Field(FieldError::InvalidConfig(_) | FieldError::DimensionMismatch { .. })
            | CliError::Solver(SolverError::InvalidSchedule(_) | SolverError::DimensionMismatch { .. }) => EXIT_PARSE,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "limitfield", version, about = "Smoothing methods and gradient-limit field estimation")]
pub struct Cli {
    /// RNG seed for all sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML config; flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate f_a and its derivative on a grid (one-dimensional families).
    Smooth(SmoothArgs),
    /// Estimate the limit field at a point.
    Estimate(EstimateArgs),
    /// Run the smoothing method and certify the final point.
    Solve(SolveArgs),
    /// Run the reproduction suite.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    /// Builtin name, JSON file path, or inline JSON.
    pub family: String,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub t_min: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub t_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Smoothing parameters.
    #[arg(long = "a", value_delimiter = ',', default_value = "1,0.1")]
    pub a: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Builtin name, JSON file path, or inline JSON.
    pub family: String,
    /// Query point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub at: Vec<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub merge_radius: Option<f64>,
    #[arg(long)]
    pub blow_up_threshold: Option<f64>,
    #[arg(long)]
    pub value_tol: Option<f64>,
    /// Skip the registered probe curves of builtin families.
    #[arg(long)]
    pub no_probes: bool,
    /// Dump every gradient sample as CSV.
    #[arg(long)]
    pub samples_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InnerArg {
    Armijo,
    Rk4,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Builtin name, JSON file path, or inline JSON.
    pub family: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub gamma_a: Option<f64>,
    #[arg(long)]
    pub gamma_eps: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long, value_enum, default_value_t = InnerArg::Armijo)]
    pub inner: InnerArg,
    /// Criticality tolerance on dist(0, conv D_F).
    #[arg(long, default_value_t = DEFAULT_CERT_TOL)]
    pub cert_tol: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Run only cases whose name contains this string.
    pub filter: Option<String>,
    /// Multiplies every witness tolerance.
    #[arg(long)]
    pub tolerance_scale: Option<f64>,
}

/// Contents of `--config`.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub estimator: Option<EstimatorConfig>,
    pub schedule: Option<Schedule>,
    pub tolerance_scale: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Builtin name, path to a JSON file, or inline JSON.
pub fn resolve_family(spec: &str) -> Result<(SmoothingFamily, Option<BuiltinFamily>), CliError> {
    if let Ok(b) = spec.parse::<BuiltinFamily>() {
        return Ok((builtin_family(b), Some(b)));
    }
    let trimmed = spec.trim_start();
    let text = if trimmed.starts_with('{') {
        spec.to_owned()
    } else if Path::new(spec).is_file() {
        fs::read_to_string(spec).map_err(|source| CliError::Read {
            path: spec.into(),
            source,
        })?
    } else {
        return Err(CliError::Family(ExprError::UnknownBuiltin(spec.to_owned())));
    };
    let fam = SmoothingFamily::from_json(&text).map_err(CliError::Family)?;
    Ok((fam, None))
}

fn envelope(command: &str, result: Value, metadata: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "result": result,
        "metadata": metadata,
    })
}

struct Ctx {
    seed: u64,
    file: FileConfig,
    format: Option<Format>,
}

impl Ctx {
    fn estimator(&self) -> EstimatorConfig {
        let mut e = self.file.estimator.clone().unwrap_or_default();
        e.seed = self.seed;
        e
    }

    fn schedule(&self) -> Schedule {
        self.file.schedule.clone().unwrap_or_default()
    }
}

/// Runs a parsed command, writing the payload to `out`; returns the exit code.
pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<i32, CliError> {
    let started = Instant::now();
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.workers.or(file.workers) {
        // Only the first call per process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        file,
        format: cli.format,
    };
    let meta = |extra: Value| {
        let mut m = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
            "workers": rayon::current_num_threads(),
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
            m.extend(e);
        }
        m
    };

    match cli.command {
        Command::Smooth(args) => cmd_smooth(&ctx, args, out, &meta),
        Command::Estimate(args) => cmd_estimate(&ctx, args, out, &meta),
        Command::Solve(args) => cmd_solve(&ctx, args, out, &meta),
        Command::Bench(args) => cmd_bench(&ctx, args, out, &meta),
    }
}

fn write_json<W: Write>(out: &mut W, v: &Value) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_smooth<W: Write>(ctx: &Ctx, args: SmoothArgs, out: &mut W, meta: &dyn Fn(Value) -> Value) -> Result<i32, CliError> {
    let (fam, _) = resolve_family(&args.family)?;
    if fam.dimension() != 1 {
        return Err(CliError::Config(format!("smooth needs a one-dimensional family, got dimension {}", fam.dimension())));
    }
    if args.points < 2 || args.t_max.partial_cmp(&args.t_min) != Some(std::cmp::Ordering::Greater) {
        return Err(CliError::Config("need t_max > t_min and at least 2 points".into()));
    }
    let mut rows = Vec::new();
    for &a in &args.a {
        for i in 0..args.points {
            let t = args.t_min + (args.t_max - args.t_min) * i as f64 / (args.points - 1) as f64;
            let (v, g) = fam.value_and_grad(&[t], a)?;
            rows.push((t, a, v, g[0]));
        }
    }
    match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["t", "a", "value", "deriv"])?;
            for (t, a, v, d) in rows {
                w.write_record([t.to_string(), a.to_string(), v.to_string(), d.to_string()])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<Value> = rows
                .into_iter()
                .map(|(t, a, v, d)| json!({"t": t, "a": a, "value": v, "deriv": d}))
                .collect();
            write_json(out, &envelope("smooth", json!({"family": fam.name(), "rows": rows}), meta(json!({}))))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_estimate<W: Write>(ctx: &Ctx, args: EstimateArgs, out: &mut W, meta: &dyn Fn(Value) -> Value) -> Result<i32, CliError> {
    let (fam, builtin) = resolve_family(&args.family)?;
    let mut cfg = ctx.estimator();
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    set!(levels, replicas, sigma, merge_radius, blow_up_threshold, value_tol);
    if args.a0.is_some() {
        cfg.a0 = args.a0;
    }
    if let (Some(b), false) = (builtin, args.no_probes) {
        if cfg.probes.is_empty() {
            cfg.probes = probes_for(b);
        }
    }
    if args.at.len() != fam.dimension() {
        return Err(CliError::Config(format!(
            "--at has {} coordinates, family has dimension {}",
            args.at.len(),
            fam.dimension()
        )));
    }
    let target = match fam.target_value(&args.at) {
        Some(r) => Some(r?),
        None => None,
    };
    let (est, records) = estimate_with_target(&fam, target, &args.at, &cfg)?;
    if let Some(path) = &args.samples_csv {
        write_samples_csv(&records, fam.dimension(), fs::File::create(path)?)?;
    }
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut result = serde_json::to_value(&est)?;
            result["family"] = json!(fam.name());
            write_json(out, &envelope("estimate", result, meta(json!({}))))?;
        }
        Format::Csv => {
            let d = fam.dimension();
            let mut w = csv::Writer::from_writer(&mut *out);
            let mut header: Vec<String> = (0..d).map(|i| format!("center{i}")).collect();
            header.push("weight".into());
            w.write_record(&header)?;
            for c in &est.clusters {
                let mut row: Vec<String> = c.center.iter().map(f64::to_string).collect();
                row.push(c.weight.to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_solve<W: Write>(ctx: &Ctx, args: SolveArgs, out: &mut W, meta: &dyn Fn(Value) -> Value) -> Result<i32, CliError> {
    let (fam, builtin) = resolve_family(&args.family)?;
    let mut sch = ctx.schedule();
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { sch.$f = v; } )* };
    }
    set!(a0, eps0, gamma_a, gamma_eps, max_outer, max_inner);
    let inner = match args.inner {
        InnerArg::Armijo => InnerSolver::DescentArmijo,
        InnerArg::Rk4 => InnerSolver::GradientFlowRk4,
    };
    let trace = smoothing_solve(&fam, &args.x0, &sch, inner)?;
    let mut ecfg = ctx.estimator();
    if let Some(b) = builtin {
        if ecfg.probes.is_empty() {
            ecfg.probes = probes_for(b);
        }
    }
    let cert = certify_final(&trace, &fam, &ecfg, args.cert_tol)?;
    let code = if trace.status == SolverStatus::Converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => {
            let result = json!({
                "family": fam.name(),
                "x0": args.x0,
                "schedule": sch,
                "status": trace.status,
                "final_x": trace.final_x,
                "critical": cert.critical,
                "warnings": cert.warnings,
                "trace": trace,
                "certificate": cert,
            });
            write_json(out, &envelope("solve", result, meta(json!({}))))?;
        }
        Format::Csv => write_trace_csv(&trace, &mut *out)?,
    }
    Ok(code)
}

fn cmd_bench<W: Write>(ctx: &Ctx, args: BenchArgs, out: &mut W, meta: &dyn Fn(Value) -> Value) -> Result<i32, CliError> {
    let cfg = BenchConfig {
        estimator: ctx.estimator(),
        schedule: ctx.schedule(),
        tolerance_scale: args.tolerance_scale.or(ctx.file.tolerance_scale).unwrap_or(1.0),
        ..BenchConfig::default()
    };
    if !(cfg.tolerance_scale >= 0.0 && cfg.tolerance_scale.is_finite()) {
        return Err(CliError::Config("tolerance scale must be finite and nonnegative".into()));
    }
    let report = run_suite(args.filter.as_deref(), &cfg);
    match ctx.format.unwrap_or(Format::Json) {
        Format::Json => {
            let runtimes: serde_json::Map<String, Value> =
                report.cases.iter().map(|c| (c.case.clone(), json!(c.runtime_ms))).collect();
            let mut result = serde_json::to_value(&report)?;
            result["all_passed"] = json!(report.all_passed());
            write_json(out, &envelope("bench", result, meta(json!({ "runtime_ms": runtimes }))))?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["case", "status", "check", "expected", "found", "tol", "ok"])?;
            for c in &report.cases {
                let status = if c.status == crate::bench::CaseStatus::Pass { "pass" } else { "fail" };
                for k in &c.checks {
                    w.write_record([
                        c.case.clone(),
                        status.into(),
                        k.label.clone(),
                        k.expected.to_string(),
                        k.found.to_string(),
                        k.tol.map(|t| t.to_string()).unwrap_or_default(),
                        k.ok.to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_BENCH_FAILED })
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let output = cli.output.clone();
    let result = match &output {
        Some(p) => match fs::File::create(p) {
            Ok(mut f) => execute(cli, &mut f),
            Err(e) => Err(CliError::Io(e)),
        },
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            execute(cli, &mut lock)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String) {
        let cli = Cli::try_parse_from(std::iter::once("limitfield").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let code = match execute(cli, &mut buf) {
            Ok(c) => c,
            Err(e) => e.exit_code(),
        };
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn smooth_csv_header_and_chen_value() {
        let (code, text) = run(&["smooth", "absl1", "--a", "1,0.1"]);
        assert_eq!(code, 0);
        assert!(text.starts_with("t,a,value,deriv\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 101);
        let (_, text) = run(&["smooth", "chen", "--t-min", "-1", "--t-max", "1", "--points", "3", "--a", "1"]);
        assert!(text.lines().any(|l| l.starts_with("0,1,1,")), "{text}");
    }

    #[test]
    fn malformed_family_is_a_parse_error() {
        let (code, _) = run(&["smooth", "{\"dimension\": 1,\n \"a_max\": }"]);
        assert_eq!(code, EXIT_PARSE);
        let err = resolve_family("{\"dimension\": 1,\n \"a_max\": }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("family parse error") && msg.contains("line 2"), "{msg}");
        let (code, _) = run(&["estimate", "nosuchfamily", "--at", "0"]);
        assert_eq!(code, EXIT_PARSE);
    }

    #[test]
    fn estimate_hat_and_signsqrt() {
        let (code, text) = run(&["estimate", "hat", "--at", "0"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        let centers: Vec<f64> = v["result"]["clusters"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["center"][0].as_f64().unwrap())
            .collect();
        for w in [-1.0, 0.0, 1.0] {
            assert!(centers.iter().any(|c| (c - w).abs() < 1e-3));
        }
        let (code, text) = run(&["estimate", "signsqrt", "--at", "0"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["blow_up"], true);
        assert!(v["result"]["hull_distance"].is_null());
    }

    #[test]
    fn solve_exit_codes() {
        let (code, text) = run(&["solve", "absl1", "--x0", "3"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(v["result"]["final_x"][0].as_f64().unwrap().abs() <= 1e-3);
        assert_eq!(v["result"]["critical"], true);
        let (code, text) = run(&["solve", "absl1", "--x0", "3", "--max-outer", "0"]);
        assert_eq!(code, EXIT_NOT_CONVERGED);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["status"], "MaxOuterReached");
    }

    #[test]
    fn config_layering() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.toml");
        fs::write(&p, "seed = 11\n[estimator]\nlevels = 12\nreplicas = 4\n").unwrap();
        let ps = p.to_str().unwrap();
        let (_, text) = run(&["--config", ps, "estimate", "absl1", "--at", "1"]);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["seed"], 11);
        assert_eq!(v["result"]["config"]["levels"], 12);
        let (_, text) = run(&["--config", ps, "--seed", "5", "estimate", "absl1", "--at", "1", "--levels", "9"]);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["seed"], 5);
        assert_eq!(v["result"]["config"]["levels"], 9);
        assert_eq!(v["result"]["config"]["replicas"], 4);

        fs::write(&p, "[estimator]\nbogus = 1\n").unwrap();
        let (code, _) = run(&["--config", ps, "estimate", "absl1", "--at", "1"]);
        assert_eq!(code, EXIT_PARSE);
    }

    #[test]
    fn bench_filter_and_failure() {
        let (code, text) = run(&["bench", "chen"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["cases"].as_array().unwrap().len(), 1);
        assert!(v["metadata"]["runtime_ms"]["chen"].is_number());
        let (code, _) = run(&["bench", "sin", "--tolerance-scale", "0"]);
        assert_eq!(code, EXIT_BENCH_FAILED);
    }

    #[test]
    fn family_from_file_and_inline() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fam.json");
        let fam = builtin_family(BuiltinFamily::AbsHuber);
        fs::write(&p, fam.to_json()).unwrap();
        let (f1, b1) = resolve_family(p.to_str().unwrap()).unwrap();
        assert!(b1.is_none());
        assert_eq!(f1.eval(&[0.1], 0.5).unwrap(), fam.eval(&[0.1], 0.5).unwrap());
        let (f2, _) = resolve_family(&fam.to_json()).unwrap();
        assert_eq!(f2.eval(&[2.0], 0.5).unwrap(), 2.0);
    }
}
