//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::catalog::TestFunction;
use crate::config::{CurveExperiment, ExperimentConfig, FaultSpec, DEFAULT_MC_NODES};
use crate::error::Error;
use crate::oscillation::OscillationRule;
use crate::quadrature::{BallSample, QuadratureSpec};
use crate::verification::run_all;
use crate::weak_norm::{distribution_curve, limit_extrapolate, reference_value, weak_sup};

pub const CURVE_SUMMARY_SCHEMA: &str = "osclab.curve_summary v1";

#[derive(Debug, Parser)]
#[command(name = "osclab", version, about = "Ball mean oscillation and weak-L^p superlevel experiments")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List catalog entries, optionally filtered by `key=value` (keys: d, kind, tag).
    Catalog(CatalogArgs),
    /// Evaluate m_f^{(q)}(a, r) on one ball.
    Oscillation(OscillationArgs),
    /// Compute κ ↦ κ^p ν_p({m_f > κ}) and extrapolate κ → 0.
    Curve(CurveArgs),
    /// Run the property suites and emit a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub json: bool,
    pub filters: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OscillationArgs {
    #[arg(long)]
    pub function: String,
    /// Ball center, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Use the pair form (⨍⨍ |f(x) - f(y)|^q)^{1/q}.
    #[arg(long)]
    pub pair: bool,
    /// Monte-Carlo nodes per ball (d ≥ 2).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub kappa_min: Option<f64>,
    #[arg(long)]
    pub kappa_max: Option<f64>,
    #[arg(long)]
    pub kappa_ratio: Option<f64>,
    /// Box `LO:HI`, each side a number or a comma separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<String>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Number of centers a sampled in ω.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Quadrature nodes per ball.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `c-d-prime`, `weight-exponent` or `expansion-constant`, optionally `=factor`.
    #[arg(long)]
    pub fault_inject: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Restrict the batch to these catalog ids.
    #[arg(long)]
    pub function: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write `report.json` here instead of printing it.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub fault_inject: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::BadFunctionId { .. } | Error::Config(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Run(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Run one command; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Run(Error::Unsupported(e.to_string())))?;
    let mut buf = Vec::new();
    let code = pool.install(|| match cli.command {
        Command::Catalog(a) => cmd_catalog(&a, &mut buf),
        Command::Oscillation(a) => cmd_oscillation(&a, &mut buf),
        Command::Curve(a) => cmd_curve(&a, &mut buf),
        Command::Verify(a) => cmd_verify(&a, &mut buf),
    })?;
    out.write_all(&buf).map_err(io)?;
    Ok(code)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Run(Error::Io(e))
}

fn catalog_matches(f: &TestFunction, key: &str, value: &str) -> CliResult<bool> {
    match key {
        "d" => {
            let d: usize =
                value.parse().map_err(|_| CliError::Usage(format!("filter d=`{value}` is not an integer")))?;
            Ok(f.dim() == d)
        }
        "kind" => Ok(f.id().split(':').next() == Some(value)),
        "tag" => {
            Ok(serde_json::to_value(f.smoothness_tag()).ok().and_then(|v| v.as_str().map(|s| s == value)) == Some(true))
        }
        other => Err(CliError::Usage(format!("unknown catalog filter key `{other}` (expected d, kind or tag)"))),
    }
}

pub fn cmd_catalog(args: &CatalogArgs, out: &mut dyn Write) -> CliResult<i32> {
    let mut filters: Vec<(String, String)> = Vec::new();
    for s in &args.filters {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("filter `{s}` is not key=value")))?;
        filters.push((k.to_string(), v.to_string()));
    }
    if let Some(d) = args.d {
        filters.push(("d".into(), d.to_string()));
    }
    let mut rows = Vec::new();
    for f in TestFunction::default_catalog() {
        let mut keep = true;
        for (k, v) in &filters {
            keep &= catalog_matches(&f, k, v)?;
        }
        if keep {
            rows.push(f);
        }
    }
    if args.json {
        let v: Vec<_> = rows
            .iter()
            .map(|f| {
                json!({"id": f.id(), "d": f.dim(), "tag": f.smoothness_tag(), "support_radius": f.support_radius(),
                       "grad_sup": f.grad_sup(), "grad_lipschitz": f.grad_lipschitz()})
            })
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(|e| CliError::Run(e.into()))?).map_err(io)?;
        return Ok(0);
    }
    writeln!(out, "{:<34} {:>2} {:<24} {:>14} {:>12}", "id", "d", "tag", "support_radius", "grad_sup").map_err(io)?;
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v}"));
    for f in rows {
        let tag = serde_json::to_value(f.smoothness_tag())
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        writeln!(
            out,
            "{:<34} {:>2} {:<24} {:>14} {:>12}",
            f.id(),
            f.dim(),
            tag,
            show(f.support_radius()),
            show(f.grad_sup())
        )
        .map_err(io)?;
    }
    Ok(0)
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("{what}: `{t}` is not a number"))))
        .collect()
}

pub fn cmd_oscillation(args: &OscillationArgs, out: &mut dyn Write) -> CliResult<i32> {
    let f: TestFunction = args.function.parse()?;
    let a = parse_list(&args.a, "--a")?;
    if a.len() != f.dim() {
        return Err(CliError::Usage(format!("--a has {} coordinates, `{}` has d = {}", a.len(), f.id(), f.dim())));
    }
    let seed = ExperimentConfig::default().resolve_seed(args.seed)?;
    let spec = QuadratureSpec::auto(f.dim(), args.samples.unwrap_or(DEFAULT_MC_NODES), seed);
    let ball = BallSample::new(a, args.r)?;
    let rule = OscillationRule::new(f.dim(), &spec)?;
    let m = if args.pair { rule.pair_oscillation(&f, &ball, args.q)? } else { rule.oscillation(&f, &ball, args.q)? };
    if args.json {
        let v = json!({"function_id": f.id(), "a": ball.center, "r": ball.radius, "q": args.q, "pair": args.pair,
                       "value": m.value, "std_error": m.std_error, "quadrature": spec});
        writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(|e| CliError::Run(e.into()))?).map_err(io)?;
    } else {
        writeln!(out, "{m}").map_err(io)?;
    }
    Ok(0)
}

fn parse_omega(s: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| CliError::Usage(format!("--omega `{s}` is not LO:HI")))?;
    Ok((parse_list(lo, "--omega")?, parse_list(hi, "--omega")?))
}

fn load_config(path: &Option<PathBuf>) -> CliResult<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) if !p.exists() => Err(CliError::Usage(format!("config file {} does not exist", p.display()))),
        Some(p) => Ok(ExperimentConfig::load(p)?),
    }
}

fn check_fault(s: &Option<String>) -> CliResult<()> {
    if let Some(s) = s {
        s.parse::<FaultSpec>()?;
    }
    Ok(())
}

/// The file, with flags applied on top.
pub fn curve_config(args: &CurveArgs) -> CliResult<ExperimentConfig> {
    let mut c = load_config(&args.config)?;
    check_fault(&args.fault_inject)?;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src.clone() {
                $dst = Some(v);
            }
        };
    }
    set!(c.function, args.function);
    set!(c.d, args.d);
    set!(c.p, args.p);
    set!(c.q, args.q);
    set!(c.seed, args.seed);
    set!(c.fault_inject, args.fault_inject);
    set!(c.kappa.min, args.kappa_min);
    set!(c.kappa.max, args.kappa_max);
    set!(c.kappa.ratio, args.kappa_ratio);
    set!(c.domain.r_max, args.r_max);
    set!(c.curve.samples, args.samples);
    set!(c.quadrature.nodes, args.nodes);
    set!(c.output.dir, args.out_dir);
    if let Some(s) = &args.omega {
        let (lo, hi) = parse_omega(s)?;
        c.domain.lo = Some(lo);
        c.domain.hi = Some(hi);
    }
    Ok(c)
}

/// Curve, summary JSON and the CSV text for a resolved experiment.
pub fn curve_outputs(e: &CurveExperiment) -> crate::error::Result<(String, serde_json::Value)> {
    let f: TestFunction = e.function_id.parse()?;
    let grid = e.kappa.values()?;
    let curve = distribution_curve(&f, e.p, &grid, &e.domain, &e.quadrature, &e.options)?;
    let sup = weak_sup(&curve)?;
    let (limit, extrapolation_error) = match limit_extrapolate(&curve) {
        Ok(l) => (Some(l), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let reference = reference_value(&f, e.p, &e.domain.omega, &e.options.constants);
    let summary = json!({
        "schema": CURVE_SUMMARY_SCHEMA,
        "function_id": e.function_id,
        "d": e.d,
        "p": e.p,
        "q": e.q,
        "domain": e.domain,
        "kappa_grid": grid,
        "sup_estimate": sup.value,
        "sup_argmax_kappa": sup.argmax_kappa,
        "limit_estimate": limit.as_ref().map(|l| l.limit),
        "limit_uncertainty": limit.as_ref().map(|l| l.uncertainty),
        "limit_fit": limit,
        "extrapolation_inconclusive": extrapolation_error.is_some(),
        "extrapolation_error": extrapolation_error,
        "reference_value": reference,
        "relative_spread": curve.relative_spread(),
        "flagged_intervals": curve.flagged.iter().sum::<usize>(),
        "samples": curve.samples,
        "seeds": {"master": e.master_seed, "quadrature": e.quadrature.seed},
        "config": e,
    });
    Ok((curve.to_csv(), summary))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

pub fn cmd_curve(args: &CurveArgs, out: &mut dyn Write) -> CliResult<i32> {
    let c = curve_config(args)?;
    let seed = c.resolve_seed(None)?;
    let e = c.resolve_curve(seed)?;
    let (csv, summary) = curve_outputs(&e)?;
    write_file(&e.csv_path, &csv)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Run(e.into()))?;
    write_file(&e.summary_path, &(text + "\n"))?;
    let show = |v: &serde_json::Value| v.as_f64().map_or("n/a".to_string(), |x| format!("{x:.6e}"));
    writeln!(
        out,
        "limit = {} ± {}  reference = {}  sup = {}\nwrote {} and {}",
        show(&summary["limit_estimate"]),
        show(&summary["limit_uncertainty"]),
        show(&summary["reference_value"]),
        show(&summary["sup_estimate"]),
        e.csv_path.display(),
        e.summary_path.display()
    )
    .map_err(io)?;
    Ok(0)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<i32> {
    let mut c = load_config(&args.config)?;
    check_fault(&args.fault_inject)?;
    if args.fault_inject.is_some() {
        c.fault_inject = args.fault_inject.clone();
    }
    if let Some(d) = &args.out_dir {
        c.output.dir = Some(d.clone());
    }
    let seed = c.resolve_seed(args.seed)?;
    let mut v = c.resolve_verify(seed)?;
    if !args.function.is_empty() {
        for id in &args.function {
            id.parse::<TestFunction>()?;
        }
        v.functions = Some(args.function.clone());
    }
    let report = run_all(&v);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Run(e.into()))? + "\n";
    match c.report_path() {
        Some(p) => {
            write_file(&p, &text)?;
            eprint!("{}", report.render_text());
            writeln!(out, "wrote {}", p.display()).map_err(io)?;
        }
        None => {
            eprint!("{}", report.render_text());
            out.write_all(text.as_bytes()).map_err(io)?;
        }
    }
    Ok(if report.passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> CliResult<(i32, String)> {
        let cli = Cli::try_parse_from(std::iter::once("osclab").chain(args.iter().copied()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut buf = Vec::new();
        let code = run(cli, &mut buf)?;
        Ok((code, String::from_utf8(buf).unwrap()))
    }

    fn first_value(s: &str) -> f64 {
        s.split_whitespace().next().unwrap().parse().unwrap()
    }

    #[test]
    fn catalog_lists_and_filters() {
        let (_, all) = run_args(&["catalog"]).unwrap();
        assert!(all.lines().count() > 6);
        let (_, two) = run_args(&["catalog", "d=2"]).unwrap();
        let rows: Vec<&str> = two.lines().skip(1).collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|l| l.contains("d=2")));
        let (_, same) = run_args(&["catalog", "--d", "2"]).unwrap();
        assert_eq!(two, same);
        let e = run_args(&["catalog", "colour=red"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn oscillation_examples() {
        let (_, s) = run_args(&["oscillation", "--function", "linear:d=1:v=1", "--a", "0", "--r", "1"]).unwrap();
        assert!((first_value(&s) - 0.5).abs() < 1e-12);
        let (_, s) = run_args(&["oscillation", "--function", "constant:d=1:k=1", "--a", "-3", "--r", "1"]).unwrap();
        assert_eq!(first_value(&s), 0.0);
        let (_, s) =
            run_args(&["oscillation", "--function", "linear:d=1:v=1", "--a", "0", "--r", "1", "--q", "2"]).unwrap();
        assert!((first_value(&s) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            run_args(&["oscillation", "--function", "nope:d=1", "--a", "0", "--r", "1"]).unwrap_err().exit_code(),
            2
        );
        assert_eq!(
            run_args(&["oscillation", "--function", "linear:d=1:v=1", "--a", "0", "--r", "-1"])
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "function = \"linear:d=1:v=2\"\np = 3.0\n[curve]\nsamples = 16\n").unwrap();
        let cli = Cli::try_parse_from([
            "osclab",
            "curve",
            "--config",
            path.to_str().unwrap(),
            "--p",
            "1.5",
            "--omega",
            "-1:1",
            "--kappa-min",
            "1e-5",
        ])
        .unwrap();
        let Command::Curve(args) = cli.command else { panic!() };
        let c = curve_config(&args).unwrap();
        assert_eq!(c.p, Some(1.5));
        assert_eq!(c.curve.samples, Some(16));
        assert_eq!(c.domain.lo, Some(vec![-1.0]));
        assert_eq!(c.kappa.min, Some(1e-5));
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let e = run_args(&["verify", "--config", "/nonexistent/osclab.toml"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run_args(&["curve", "--config", "/nonexistent/osclab.toml"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run_args(&["verify", "--fault-inject", "gravity"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn linear_curve_is_flat_and_constant_curve_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, _) = run_args(&[
            "curve",
            "--function",
            "linear:d=1:v=1",
            "--p",
            "2",
            "--omega",
            "0:1",
            "--samples",
            "16",
            "--kappa-min",
            "1e-4",
            "--kappa-max",
            "1e-1",
            "--out-dir",
            out,
        ])
        .unwrap();
        assert_eq!(code, 0);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(summary["relative_spread"].as_f64().unwrap() < 0.01);
        let lim = summary["limit_estimate"].as_f64().unwrap();
        assert!((lim - 0.125).abs() < 0.00125, "{lim}");
        assert_eq!(summary["config"]["function_id"], "linear:d=1:v=1");

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        run_args(&["curve", "--function", "constant:d=1:k=2", "--samples", "16", "--out-dir", out]).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert!(csv.starts_with("# schema"));
        for line in csv.lines().skip(2) {
            let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(cols[3], 0.0);
        }
    }
}
