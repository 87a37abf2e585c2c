use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psos_core::extremality::{gamma_bound, msw_report, verify_gamma_lemma};
use psos_core::law::{branch_point, classify_with, SolutionSet};
use psos_core::spectral::{build_kernel, characteristic_residuals, kesten_stigum};
use psos_core::thresholds::{find_threshold, threshold_suite, trace_curve, CurveName, SuiteEntry};
use psos_core::{Error, ModelParams, SolverOptions};
use rayon::prelude::*;
use serde_json::{json, Value};

mod csv;

use csv::ScanRow;

const SCHEMA: &str = "psos-gibbs/1";

const EXIT_OTHER: u8 = 1;
const EXIT_DOMAIN: u8 = 2;
const EXIT_BRANCH_ABSENT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "psos", version, about = "Translation-invariant splitting Gibbs measures of the three-state p-SOS model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary laws at a point.
    Solve(PointArgs),
    /// Region, solution count and discriminants at a point.
    Classify(PointArgs),
    /// Transition kernel and its spectrum for one branch.
    Kernel(BranchArgs),
    /// Extremality indicators and verdict for one branch.
    Extremality(BranchArgs),
    /// Indicator table over a theta grid at fixed p.
    Scan(ScanArgs),
    /// Named threshold table at p.
    Thresholds(ThresholdArgs),
    /// Samples of a region boundary curve.
    Curve(CurveArgs),
    /// Brute-force check of the gamma bound on the simplex.
    VerifyGamma(GammaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    /// Residual tolerance for accepting a solution.
    #[arg(long, env = "PSOS_TOL")]
    tol: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BranchArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, default_value_t = 1)]
    branch: u8,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    /// Theta interval as `LO,HI`; samples sit at the cell midpoints.
    #[arg(long, default_value = "0,1", value_parser = parse_range)]
    range: (f64, f64),
    #[arg(long, default_value_t = 100)]
    grid: usize,
    /// Also emit rows for branches that do not exist.
    #[arg(long)]
    with_absent: bool,
    #[arg(long, env = "PSOS_TOL")]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    /// Bisection tolerance in the search coordinate.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveArg {
    #[value(name = "M_SMALL")]
    MSmall,
    #[value(name = "M_BIG")]
    MBig,
    #[value(name = "DELTA0")]
    Delta0,
    #[value(name = "D0")]
    D0,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long, value_enum)]
    name: CurveArg,
    #[arg(long, value_parser = parse_range)]
    range: (f64, f64),
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GammaArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    branch: u8,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[command(flatten)]
    output: Output,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((lo, hi))
}

enum Failure {
    Core(Error),
    Io(io::Error, Option<PathBuf>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Domain(_) => EXIT_DOMAIN,
                Error::BranchAbsent { .. } => EXIT_BRANCH_ABSENT,
                _ => EXIT_OTHER,
            })
        }
        Err(Failure::Io(e, path)) => {
            match path {
                Some(p) => eprintln!("error: {}: {e}", p.display()),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Solve(a) => cmd_solve(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Kernel(a) => cmd_kernel(&a),
        Command::Extremality(a) => cmd_extremality(&a),
        Command::Scan(a) => cmd_scan(&a),
        Command::Thresholds(a) => cmd_thresholds(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::VerifyGamma(a) => cmd_verify_gamma(&a),
    }
}

fn solver_options(tol: Option<f64>) -> CliResult<SolverOptions> {
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {t}")).into());
        }
        opts.residual_tol = t;
    }
    Ok(opts)
}

fn emit(out: Option<&PathBuf>, body: &str) -> CliResult<()> {
    let write = |w: &mut dyn Write| -> io::Result<()> {
        w.write_all(body.as_bytes())?;
        w.flush()
    };
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::Io(e, Some(path.clone())))?;
            write(&mut BufWriter::new(file)).map_err(|e| Failure::Io(e, Some(path.clone())))
        }
        None => write(&mut io::stdout().lock()).map_err(|e| Failure::Io(e, None)),
    }
}

fn emit_json(out: Option<&PathBuf>, mut value: Value) -> CliResult<()> {
    if let Value::Object(map) = &mut value {
        map.insert("schema".into(), json!(SCHEMA));
    }
    let mut body = serde_json::to_string_pretty(&value).expect("json values always serialize");
    body.push('\n');
    emit(out, &body)
}

fn point_params(a: &PointArgs) -> CliResult<(ModelParams, SolverOptions)> {
    Ok((ModelParams::new(a.theta, a.p)?, solver_options(a.tol)?))
}

fn cmd_solve(a: &PointArgs) -> CliResult<()> {
    let (params, opts) = point_params(a)?;
    let set = classify_with(&params, &opts)?;
    match a.output.format {
        Format::Json => emit_json(
            a.output.out.as_ref(),
            json!({
                "theta": params.theta,
                "p": params.p,
                "region": set.region,
                "count": set.count,
                "points": set.points,
            }),
        ),
        Format::Csv => {
            let mut t = csv::Table::new(&["branch", "x", "y", "residual", "region", "count"]);
            for pt in &set.points {
                t.row(vec![
                    pt.branch.to_string(),
                    csv::num(pt.x),
                    csv::num(pt.y),
                    csv::num(pt.residual),
                    set.region.label().to_string(),
                    set.count.to_string(),
                ]);
            }
            emit(a.output.out.as_ref(), &t.finish())
        }
    }
}

fn classification_json(set: &SolutionSet) -> Value {
    json!({
        "theta": set.params.theta,
        "p": set.params.p,
        "region": set.region,
        "count": set.count,
        "branches": set.points.iter().map(|pt| pt.branch).collect::<Vec<_>>(),
        "delta": set.delta,
        "big_d": set.big_d,
        "c1": set.c1,
        "c2": set.c2,
    })
}

fn cmd_classify(a: &PointArgs) -> CliResult<()> {
    let (params, opts) = point_params(a)?;
    let set = classify_with(&params, &opts)?;
    match a.output.format {
        Format::Json => emit_json(a.output.out.as_ref(), classification_json(&set)),
        Format::Csv => {
            let mut t = csv::Table::new(&["theta", "p", "region", "count", "delta", "big_d", "c1", "c2"]);
            t.row(vec![
                csv::num(params.theta),
                csv::num(params.p),
                set.region.label().to_string(),
                set.count.to_string(),
                csv::num(set.delta),
                csv::opt_num(set.big_d),
                csv::opt(set.c1),
                csv::opt(set.c2),
            ]);
            emit(a.output.out.as_ref(), &t.finish())
        }
    }
}

fn cmd_kernel(a: &BranchArgs) -> CliResult<()> {
    let (params, opts) = point_params(&a.point)?;
    let pt = branch_point(&params, a.branch, &opts)?;
    let kernel = build_kernel(&pt, &params)?;
    let ks = kesten_stigum(&kernel, params.k)?;
    let out = a.point.output.out.as_ref();
    match a.point.output.format {
        Format::Json => emit_json(
            out,
            json!({
                "theta": params.theta,
                "p": params.p,
                "branch": pt.branch,
                "x": pt.x,
                "y": pt.y,
                "matrix": kernel.matrix,
                "ln_z": kernel.ln_z,
                "lambda1": kernel.spectrum.lambda1,
                "lambda2": kernel.spectrum.lambda2,
                "imag": kernel.spectrum.imag,
                "lambda_max": kernel.spectrum.lambda_max,
                "characteristic_residuals": characteristic_residuals(&kernel),
                "eta": ks.eta,
                "ks_nonextremal": ks.ks_nonextremal,
            }),
        ),
        Format::Csv => {
            let mut t = csv::Table::new(&["row", "p0", "p1", "p2"]);
            for (i, r) in kernel.matrix.iter().enumerate() {
                t.row(vec![i.to_string(), csv::num(r[0]), csv::num(r[1]), csv::num(r[2])]);
            }
            emit(out, &t.finish())
        }
    }
}

fn cmd_extremality(a: &BranchArgs) -> CliResult<()> {
    let (params, opts) = point_params(&a.point)?;
    let pt = branch_point(&params, a.branch, &opts)?;
    let kernel = build_kernel(&pt, &params)?;
    let report = msw_report(&pt, &params, &kernel)?;
    let out = a.point.output.out.as_ref();
    match a.point.output.format {
        Format::Json => {
            let mut v = serde_json::to_value(report).expect("report serializes");
            v["theta"] = json!(params.theta);
            v["p"] = json!(params.p);
            v["x"] = json!(pt.x);
            v["y"] = json!(pt.y);
            v["lambda1"] = json!(kernel.lambda1());
            v["lambda2"] = json!(kernel.lambda2());
            emit_json(out, v)
        }
        Format::Csv => {
            let mut t = csv::Table::new(csv::SCAN_HEADER);
            t.row(ScanRow::new(params.theta, params.p, a.branch, Some((&pt, &kernel, &report))).fields());
            emit(out, &t.finish())
        }
    }
}

fn cmd_scan(a: &ScanArgs) -> CliResult<()> {
    let (lo, hi) = a.range;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Domain(format!("theta range must satisfy 0 <= lo < hi, got ({lo}, {hi})")).into());
    }
    if a.grid == 0 {
        return Err(Error::Domain("grid must be positive".into()).into());
    }
    let opts = solver_options(a.tol)?;
    // validate p once so a bad p is a domain error rather than empty output
    ModelParams::new(hi, a.p)?;
    let step = (hi - lo) / a.grid as f64;
    let per_theta: Vec<CliResult<Vec<ScanRow>>> = (0..a.grid)
        .into_par_iter()
        .map(|i| {
            let theta = lo + (i as f64 + 0.5) * step;
            let params = ModelParams::new(theta, a.p)?;
            let set = classify_with(&params, &opts)?;
            let mut rows = Vec::new();
            for b in 1..=7u8 {
                match set.branch(b) {
                    Some(pt) => {
                        let kernel = build_kernel(pt, &params)?;
                        let report = msw_report(pt, &params, &kernel)?;
                        rows.push(ScanRow::new(theta, a.p, b, Some((pt, &kernel, &report))));
                    }
                    None if a.with_absent => rows.push(ScanRow::new(theta, a.p, b, None)),
                    None => {}
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_theta {
        rows.extend(r?);
    }
    match a.format {
        Format::Csv => {
            let mut table = csv::Table::new(csv::SCAN_HEADER);
            for r in &rows {
                table.row(r.fields());
            }
            emit(a.out.as_ref(), &table.finish())
        }
        Format::Json => emit_json(a.out.as_ref(), json!({ "p": a.p, "rows": rows })),
    }
}

fn suite_with_tol(p: f64, tol: Option<f64>) -> CliResult<Vec<SuiteEntry>> {
    let mut suite = threshold_suite(p);
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {t}")).into());
        }
        suite.par_iter_mut().for_each(|e| {
            e.query.tol = t;
            e.result = find_threshold(&e.query);
        });
    }
    Ok(suite)
}

fn cmd_thresholds(a: &ThresholdArgs) -> CliResult<()> {
    if !(a.p.is_finite() && a.p > 0.0) {
        return Err(Error::Domain(format!("p must be positive and finite, got {}", a.p)).into());
    }
    let suite = suite_with_tol(a.p, a.tol)?;
    let out = a.output.out.as_ref();
    match a.output.format {
        Format::Json => {
            let entries: Vec<Value> = suite
                .iter()
                .map(|e| {
                    let (theta, lo, hi, iterations, error) = match &e.result {
                        Ok(t) => (Some(t.theta), Some(t.lo), Some(t.hi), Some(t.iterations), None),
                        Err(err) => (None, None, None, None, Some(err.to_string())),
                    };
                    json!({
                        "name": e.name,
                        "description": e.description,
                        "quantity": e.query.quantity,
                        "branch": e.query.branch,
                        "coordinate": e.query.coordinate,
                        "bracket": [e.query.bracket.0, e.query.bracket.1],
                        "tol": e.query.tol,
                        "theta": theta,
                        "lo": lo,
                        "hi": hi,
                        "iterations": iterations,
                        "reference": e.reference,
                        "relative_error": e.relative_error(),
                        "status": if error.is_some() { "NOT_DEFINED" } else { "OK" },
                        "error": error,
                    })
                })
                .collect();
            emit_json(out, json!({ "p": a.p, "entries": entries }))
        }
        Format::Csv => {
            let mut t = csv::Table::new(&["name", "quantity", "branch", "theta", "reference", "relative_error", "status"]);
            for e in &suite {
                t.row(vec![
                    e.name.clone(),
                    e.query.quantity.label().to_string(),
                    e.query.branch.to_string(),
                    csv::opt_num(e.result.as_ref().ok().map(|r| r.theta)),
                    csv::opt_num(e.reference),
                    csv::opt_num(e.relative_error()),
                    if e.result.is_ok() { "OK" } else { "NOT_DEFINED" }.to_string(),
                ]);
            }
            emit(out, &t.finish())
        }
    }
}

fn cmd_curve(a: &CurveArgs) -> CliResult<()> {
    let name = match a.name {
        CurveArg::MSmall => CurveName::MSmall,
        CurveArg::MBig => CurveName::MBig,
        CurveArg::Delta0 => CurveName::Delta0,
        CurveArg::D0 => CurveName::D0,
    };
    let samples = trace_curve(name, a.range, a.grid)?;
    let out = a.output.out.as_ref();
    match a.output.format {
        Format::Json => {
            let pts: Vec<Value> = samples.iter().map(|(t, v)| json!({ "theta": t, "p": v })).collect();
            emit_json(out, json!({ "curve": name, "samples": pts }))
        }
        Format::Csv => {
            let mut t = csv::Table::new(&["theta", "p"]);
            for (theta, v) in samples {
                t.row(vec![csv::num(theta), csv::opt_num(v)]);
            }
            emit(out, &t.finish())
        }
    }
}

fn cmd_verify_gamma(a: &GammaArgs) -> CliResult<()> {
    let params = ModelParams::new(a.theta, a.p)?;
    if a.theta >= 1.0 {
        return Err(Error::Domain(format!("the gamma bound is checked for theta < 1, got {}", a.theta)).into());
    }
    let pt = branch_point(&params, a.branch, &SolverOptions::default())?;
    let report = verify_gamma_lemma(&params, &pt, a.grid)?;
    let out = a.output.out.as_ref();
    match a.output.format {
        Format::Json => {
            let mut v = serde_json::to_value(&report).expect("report serializes");
            v["theta"] = json!(a.theta);
            v["p"] = json!(a.p);
            v["branch"] = json!(a.branch);
            v["grid"] = json!(a.grid);
            v["gamma_bound"] = json!(gamma_bound(&params).value);
            emit_json(out, v)
        }
        Format::Csv => {
            let mut t = csv::Table::new(&["theta", "p", "branch", "max_abs", "bound", "holds"]);
            t.row(vec![
                csv::num(a.theta),
                csv::num(a.p),
                a.branch.to_string(),
                csv::num(report.max_abs),
                csv::num(report.bound),
                report.holds.to_string(),
            ]);
            emit(out, &t.finish())
        }
    }
}
