//! Batch command-line frontend.
//!
//! Every command is seeded and emits CSV plus a `report-v1` JSON document
//! and a trailing `manifest-v1` with content digests.  Exit codes: 0 on
//! success, 1 on runtime failure or a failed hard check, 2 on usage errors.
//! Flags override the `--config` file, which overrides defaults; unknown
//! config keys are errors.

use crate::constants::{limit_prefactor, G};
use crate::continuum::{
    conformal_radius, green_function, psi_density, simplex_product_integral, NiceDomain,
    SimplexSpec, TripleDxz,
};
use crate::harness::{ks_uniform_test, run_replications, EstimateReport, RunConfig, Verdict};
use crate::lattice::{DomainSpec, LatticeDomain, Site};
use crate::martingale::{decompose_walk, MartingaleEvaluator};
use crate::measure::{markov_decompose, thick_point_count, thick_point_measure};
use crate::quad;
use crate::report::{Csv, CsvCell, ReportWriter};
use crate::solver::{
    discrete_green_row, green_asymptotics_check, hit_field, SolverConfig,
};
use crate::walk::{
    count_excursions, sample_conditioned_walk, sample_walk, TruncatedFinalExcursion, WalkConfig,
};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
    ChecksFailed(String),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "thickpoints",
    version,
    about = "Thick points of planar random walk: simulation and verification battery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete Green function asymptotics against the conformal limits.
    GreenCheck(GreenCheckArgs),
    /// Monte-Carlo first moment of the thick-point measure vs quadrature.
    FirstMoment(FirstMomentArgs),
    /// Sample-exact three-way Markov decomposition of thick points.
    MarkovCheck(MarkovCheckArgs),
    /// Uniformity of cross-atom thickness splits across scales.
    SplitUniformity(SplitUniformityArgs),
    /// Excursion count law and per-excursion local times.
    ExcursionLaw(ExcursionLawArgs),
    /// Normalised thick-point counts across scales.
    ThickScaling(ThickScalingArgs),
    /// Evaluate a simplex product integral.
    SimplexEval(SimplexEvalArgs),
    /// Strip martingale approximation density on a grid.
    MartingaleApprox(MartingaleApproxArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Master seed for all randomness of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out/<command>`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: THICKPOINTS_WORKERS or all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// File name of the JSON report inside the output directory.
    #[arg(long)]
    json: Option<String>,
}

#[derive(Args, Clone)]
struct GreenCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Domain: `disc` (unit) or `disc:cx,cy,r`.
    #[arg(long)]
    domain: Option<String>,
    /// Comma-separated list of scales.
    #[arg(long = "N")]
    n_list: Option<String>,
    /// Diagonal evaluation point `x,y`.
    #[arg(long)]
    x: Option<String>,
    /// Off-diagonal second point `x,y`.
    #[arg(long)]
    off_y: Option<String>,
    /// Tolerance on the diagonal limit at the largest scale.
    #[arg(long)]
    diag_tol: Option<f64>,
    /// Tolerance on the off-diagonal limit at the largest scale.
    #[arg(long)]
    offdiag_tol: Option<f64>,
}

#[derive(Args, Clone)]
struct FirstMomentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long = "N")]
    n: Option<u32>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    samples: Option<u64>,
    /// Region A as `disc:cx,cy,r`.
    #[arg(long)]
    region: Option<String>,
    /// Condition the walk to exit at this boundary point `x,y`.
    #[arg(long)]
    condition_exit: Option<String>,
    /// Relative tolerance of the pass verdict.
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Args, Clone)]
struct MarkovCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n: Option<u32>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    samples: Option<u64>,
    /// Subdomain: `disc:cx,cy,r` or `strip:center,halfwidth`.
    #[arg(long)]
    sub: Option<String>,
}

#[derive(Args, Clone)]
struct SplitUniformityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n_list: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    /// Samples per scale.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    sub: Option<String>,
}

#[derive(Args, Clone)]
struct ExcursionLawArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n: Option<u32>,
    /// Contour half-width (a power of two).
    #[arg(long = "R")]
    radius: Option<i32>,
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args, Clone)]
struct ThickScalingArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n_list: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    /// Samples per scale (single value or one per scale).
    #[arg(long)]
    samples: Option<String>,
}

#[derive(Args, Clone)]
struct SimplexEvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    r: Option<usize>,
    /// Comma-separated coefficients.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    a: Option<f64>,
}

#[derive(Args, Clone)]
struct MartingaleApproxArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n: Option<u32>,
    /// Dyadic strip scale: strips have half-width `2^-p`.
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    r_max: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    /// Conditioning exit point `x,y` on the unit circle.
    #[arg(long)]
    exit: Option<String>,
    /// Density grid resolution per axis.
    #[arg(long)]
    grid: Option<usize>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(CliError::ChecksFailed(msg)) => {
            eprintln!("FAILED: {msg}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::GreenCheck(a) => cmd_green_check(a),
        Command::FirstMoment(a) => cmd_first_moment(a),
        Command::MarkovCheck(a) => cmd_markov_check(a),
        Command::SplitUniformity(a) => cmd_split_uniformity(a),
        Command::ExcursionLaw(a) => cmd_excursion_law(a),
        Command::ThickScaling(a) => cmd_thick_scaling(a),
        Command::SimplexEval(a) => cmd_simplex_eval(a),
        Command::MartingaleApprox(a) => cmd_martingale_approx(a),
    }
}

// --- config file -----------------------------------------------------------

/// Flat `key = value` file; every key must be consumed by the command.
struct FileConfig {
    map: HashMap<String, String>,
    consumed: std::cell::RefCell<std::collections::HashSet<String>>,
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {path:?}: {e}")))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "config line {} is not `key = value`: {line:?}",
                        lineno + 1
                    )));
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig {
            map,
            consumed: Default::default(),
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => {
                self.consumed.borrow_mut().insert(key.to_string());
                raw.parse::<T>().map(Some).map_err(|_| {
                    CliError::Usage(format!("config key {key}: cannot parse {raw:?}"))
                })
            }
        }
    }

    fn finish(&self) -> Result<(), CliError> {
        let consumed = self.consumed.borrow();
        let mut unknown: Vec<&String> =
            self.map.keys().filter(|k| !consumed.contains(*k)).collect();
        unknown.sort();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys: {unknown:?}")))
        }
    }
}

fn init_workers(common: &CommonArgs, file: &FileConfig) -> Result<(), CliError> {
    let workers = match common.workers.or(file.get("workers")?) {
        Some(w) => Some(w),
        None => std::env::var("THICKPOINTS_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok()),
    };
    if let Some(w) = workers {
        // ignore the error when a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global();
    }
    Ok(())
}

// --- parsing helpers ---------------------------------------------------------

fn parse_point(s: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("expected `x,y`, got {s:?}")));
    }
    let x = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad coordinate {:?}", parts[0])))?;
    let y = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad coordinate {:?}", parts[1])))?;
    Ok((x, y))
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad integer {p:?}")))
        })
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad real {p:?}")))
        })
        .collect()
}

/// `disc`, `unit-disc` or `disc:cx,cy,r`.
fn parse_domain(s: &str) -> Result<NiceDomain, CliError> {
    match s {
        "disc" | "unit-disc" | "unit_disc" => Ok(NiceDomain::UnitDisc),
        other => {
            if let Some(rest) = other.strip_prefix("disc:") {
                let v = parse_f64_list(rest)?;
                if v.len() != 3 || v[2] <= 0.0 {
                    return Err(CliError::Usage(format!("bad disc spec {other:?}")));
                }
                Ok(NiceDomain::disc(Complex64::new(v[0], v[1]), v[2]))
            } else {
                Err(CliError::Usage(format!("unknown domain {other:?}")))
            }
        }
    }
}

enum SubSpec {
    Disc { cx: f64, cy: f64, r: f64 },
    Strip { center: f64, half_width: f64 },
}

fn parse_sub(s: &str) -> Result<SubSpec, CliError> {
    if let Some(rest) = s.strip_prefix("disc:") {
        let v = parse_f64_list(rest)?;
        if v.len() != 3 || v[2] <= 0.0 {
            return Err(CliError::Usage(format!("bad sub disc {s:?}")));
        }
        Ok(SubSpec::Disc {
            cx: v[0],
            cy: v[1],
            r: v[2],
        })
    } else if let Some(rest) = s.strip_prefix("strip:") {
        let v = parse_f64_list(rest)?;
        if v.len() != 2 || v[1] <= 0.0 {
            return Err(CliError::Usage(format!("bad sub strip {s:?}")));
        }
        Ok(SubSpec::Strip {
            center: v[0],
            half_width: v[1],
        })
    } else {
        Err(CliError::Usage(format!(
            "sub must be disc:cx,cy,r or strip:center,halfwidth, got {s:?}"
        )))
    }
}

fn build_sub(
    ld: &Arc<LatticeDomain>,
    spec: &SubSpec,
    n: u32,
    start: Site,
) -> Result<Arc<LatticeDomain>, CliError> {
    let sub = match spec {
        SubSpec::Disc { cx, cy, r } => Arc::new(LatticeDomain::discretize(
            &DomainSpec::Analytic(NiceDomain::disc(Complex64::new(*cx, *cy), *r)),
            n,
            (start.x as f64 / n as f64, start.y as f64 / n as f64),
        )?),
        SubSpec::Strip { center, half_width } => {
            Arc::new(ld.strip_subdomain(*center, *half_width, start)?)
        }
    };
    if !sub.is_interior(start) {
        return Err(CliError::Usage(
            "walk start is not interior to the subdomain".into(),
        ));
    }
    Ok(sub)
}

fn report_rows_csv(reports: &[(&str, &EstimateReport)]) -> String {
    let mut csv = Csv::new(&[
        "estimator",
        "n",
        "estimate",
        "stderr",
        "ci_lo",
        "ci_hi",
        "target",
        "verdict",
    ]);
    for (name, r) in reports {
        csv.row(&[
            CsvCell::Text(name),
            CsvCell::Int(r.n as i64),
            CsvCell::Real(r.point_estimate),
            CsvCell::Real(r.stderr),
            CsvCell::Real(r.ci95.0),
            CsvCell::Real(r.ci95.1),
            CsvCell::Real(r.analytic_target.unwrap_or(f64::NAN)),
            CsvCell::Text(match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Informational => "informational",
            }),
        ]);
    }
    csv.finish()
}

fn out_dir_for(common: &CommonArgs, file: &FileConfig, cmd: &str) -> Result<PathBuf, CliError> {
    Ok(match (&common.out_dir, file.get::<PathBuf>("out_dir")?) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => d,
        (None, None) => PathBuf::from("out").join(cmd),
    })
}

fn seed_for(common: &CommonArgs, file: &FileConfig) -> Result<u64, CliError> {
    Ok(common.seed.or(file.get("seed")?).unwrap_or(1))
}

// --- commands ----------------------------------------------------------------

fn cmd_green_check(args: GreenCheckArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let domain = parse_domain(
        &args
            .domain
            .or(file.get("domain")?)
            .unwrap_or_else(|| "disc".into()),
    )?;
    let n_list = parse_u32_list(
        &args
            .n_list
            .or(file.get("N")?)
            .ok_or_else(|| CliError::Usage("--N is required".into()))?,
    )?;
    if n_list.is_empty() {
        return Err(CliError::Usage("--N list is empty".into()));
    }
    let x = parse_point(&args.x.or(file.get("x")?).unwrap_or_else(|| "0,0".into()))?;
    let off_y = parse_point(
        &args
            .off_y
            .or(file.get("off_y")?)
            .unwrap_or_else(|| "0.5,0".into()),
    )?;
    let diag_tol = args.diag_tol.or(file.get("diag_tol")?).unwrap_or(0.05);
    let offdiag_tol = args.offdiag_tol.or(file.get("offdiag_tol")?).unwrap_or(0.02);
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "green-check")?;
    file.finish()?;

    let cfg = SolverConfig::default();
    let rows = green_asymptotics_check(&domain, x, &n_list, &cfg)?;

    // off-diagonal comparison G^{D_N}(Nx, Ny) -> g G^D(x, y)
    let spec = DomainSpec::Analytic(domain.clone());
    let g_cont = green_function(
        &domain,
        Complex64::new(x.0, x.1),
        Complex64::new(off_y.0, off_y.1),
    )?;
    let mut off_rows = Vec::new();
    for &n in &n_list {
        let ld = LatticeDomain::discretize(&spec, n, x)?;
        let sx = Site::new((n as f64 * x.0).floor() as i32, (n as f64 * x.1).floor() as i32);
        let sy = Site::new(
            (n as f64 * off_y.0).floor() as i32,
            (n as f64 * off_y.1).floor() as i32,
        );
        let row = discrete_green_row(&ld, sy, &cfg)?;
        let v = row
            .value_at(&ld, sx)
            .ok_or_else(|| CliError::Usage("off-diagonal x not interior".into()))?;
        off_rows.push((n, v, G * g_cont, v - G * g_cont));
    }

    let mut csv = Csv::new(&["n", "green_diagonal", "deviation", "target", "error"]);
    for r in &rows {
        csv.row(&[
            CsvCell::Int(r.n as i64),
            CsvCell::Real(r.green_diagonal),
            CsvCell::Real(r.deviation),
            CsvCell::Real(r.target),
            CsvCell::Real(r.error),
        ]);
    }
    let mut off_csv = Csv::new(&["n", "green_offdiag", "target", "error"]);
    for (n, v, t, e) in &off_rows {
        off_csv.row(&[
            CsvCell::Int(*n as i64),
            CsvCell::Real(*v),
            CsvCell::Real(*t),
            CsvCell::Real(*e),
        ]);
    }

    let diag_ok = rows.last().unwrap().error.abs() <= diag_tol
        && rows.windows(2).all(|w| w[1].error.abs() <= w[0].error.abs() + 1e-12);
    let off_ok = off_rows.last().unwrap().3.abs() <= offdiag_tol;

    let echo = serde_json::json!({
        "domain": format!("{domain:?}"), "N": n_list, "x": x, "off_y": off_y,
        "diag_tol": diag_tol, "offdiag_tol": offdiag_tol, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "green-check", seed, echo)?;
    w.write_text("green_diagonal.csv", &csv.finish())?;
    w.write_text("green_offdiagonal.csv", &off_csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({
            "diagonal": rows,
            "off_diagonal": off_rows.iter().map(|(n,v,t,e)| serde_json::json!({
                "n": n, "value": v, "target": t, "error": e,
            })).collect::<Vec<_>>(),
            "diag_ok": diag_ok,
            "off_ok": off_ok,
        }),
    )?;
    w.finalize()?;

    for r in &rows {
        println!(
            "N={:5}  G(x,x)={:.6}  G-g·logN={:.6}  target={:.6}  error={:+.6}",
            r.n, r.green_diagonal, r.deviation, r.target, r.error
        );
    }
    for (n, v, t, e) in &off_rows {
        println!("N={n:5}  G(x,y)={v:.6}  target={t:.6}  error={e:+.6}");
    }
    if diag_ok && off_ok {
        println!("green-check: PASS");
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!(
            "green-check: diag_ok={diag_ok} off_ok={off_ok}"
        )))
    }
}

fn cmd_first_moment(args: FirstMomentArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let domain = parse_domain(
        &args
            .domain
            .or(file.get("domain")?)
            .unwrap_or_else(|| "disc".into()),
    )?;
    let n = args.n.or(file.get("N")?).unwrap_or(256);
    let a = args.a.or(file.get("a")?).unwrap_or(0.5);
    let samples = args.samples.or(file.get("samples")?).unwrap_or(20_000);
    let region_s = args
        .region
        .or(file.get("region")?)
        .unwrap_or_else(|| "disc:0,0,0.5".into());
    let SubSpec::Disc { cx, cy, r } = parse_sub(&region_s)? else {
        return Err(CliError::Usage("region must be disc:cx,cy,r".into()));
    };
    let condition = match args.condition_exit.or(file.get("condition_exit")?) {
        Some(s) => Some(parse_point(&s)?),
        None => None,
    };
    let rel_tol = args.rel_tol.or(file.get("rel_tol")?).unwrap_or(0.15);
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "first-moment")?;
    file.finish()?;

    let x0 = Complex64::new(0.0, 0.0);
    if !domain.contains(x0) {
        return Err(CliError::Usage("domain must contain the origin start".into()));
    }
    let prefactor = limit_prefactor(a);
    let center = Complex64::new(cx, cy);

    // analytic target by quadrature of the limiting density over the region
    let target = if let Some(z) = condition {
        let z = Complex64::new(z.0, z.1);
        let triple = TripleDxz::new(domain.clone(), x0, z)
            .map_err(|e| CliError::Usage(format!("conditioning exit point: {e}")))?;
        prefactor
            * quad::integrate_disc(
                &|p| {
                    if p == x0 {
                        return 0.0;
                    }
                    psi_density(&triple, a, p).unwrap_or(0.0)
                },
                center,
                r,
                256,
                1e-9,
            )
    } else {
        prefactor
            * quad::integrate_disc(
                &|p| {
                    if p == x0 || !domain.contains(p) {
                        return 0.0;
                    }
                    conformal_radius(&domain, p).unwrap().powf(a)
                        * green_function(&domain, x0, p).unwrap()
                },
                center,
                r,
                256,
                1e-9,
            )
    };

    let spec = DomainSpec::Analytic(domain.clone());
    let ld = Arc::new(LatticeDomain::discretize(&spec, n, (0.0, 0.0))?);
    let start = ld.x0_site();
    let region = move |x: f64, y: f64| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() < r;

    let solver_cfg = SolverConfig::default();
    let conditioned = match condition {
        Some(z) => {
            let target_site = ld.nearest_boundary_site(z)?;
            let h = hit_field(&ld, target_site, &solver_cfg)?;
            Some((target_site, Arc::new(h)))
        }
        None => None,
    };

    let cfg = RunConfig {
        master_seed: seed,
        domain: spec.clone(),
        n,
        a,
        sample_count: samples,
        estimator: "first_moment_mass".into(),
        rel_tol,
        ..Default::default()
    };
    let ld_ref = &ld;
    let cond_ref = &conditioned;
    let region_ref = &region;
    let report = run_replications(&cfg, 0, move |rep, rng| {
        let ws = match cond_ref {
            Some((target, h)) => {
                sample_conditioned_walk(ld_ref, start, *target, h, rng, WalkConfig::default(), rep)
                    .map_err(|e| e.to_string())?
            }
            None => sample_walk(ld_ref, start, rng, WalkConfig::default(), rep)
                .map_err(|e| e.to_string())?,
        };
        let m = thick_point_measure(&[&ws], a, &[0]).map_err(|e| e.to_string())?;
        Ok(m.mass_in(region_ref))
    })?
    .with_target(target, rel_tol * target.abs());

    let echo = serde_json::json!({
        "domain": format!("{domain:?}"), "N": n, "a": a, "samples": samples,
        "region": region_s, "condition_exit": condition, "rel_tol": rel_tol, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "first-moment", seed, echo)?;
    w.write_text(
        "first_moment.csv",
        &report_rows_csv(&[("first_moment_mass", &report)]),
    )?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(&json_name, serde_json::to_value(&report)?)?;
    w.finalize()?;

    println!(
        "E[mu(A)] = {:.6} ± {:.6} (n={})  target = {:.6}  verdict = {:?}",
        report.point_estimate, report.stderr, report.n, target, report.verdict
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!(
            "first-moment estimate {:.6} vs target {:.6} outside tolerance",
            report.point_estimate, target
        )))
    }
}

fn cmd_markov_check(args: MarkovCheckArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let n = args.n.or(file.get("N")?).unwrap_or(64);
    let a = args.a.or(file.get("a")?).unwrap_or(0.5);
    let samples = args.samples.or(file.get("samples")?).unwrap_or(100);
    let sub_s = args
        .sub
        .or(file.get("sub")?)
        .unwrap_or_else(|| "disc:0,0,0.6".into());
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "markov-check")?;
    file.finish()?;

    let ld = Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0))?);
    let start = ld.x0_site();
    let sub = build_sub(&ld, &parse_sub(&sub_s)?, n, start)?;

    let cfg = RunConfig {
        master_seed: seed,
        n,
        a,
        sample_count: samples,
        estimator: "markov_exact".into(),
        ..Default::default()
    };
    let ld_ref = &ld;
    let sub_ref = &sub;
    let rows: Vec<Result<(u64, usize, usize, usize, usize, bool), String>> = (0..samples)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng_for(0, rep);
            let ws = sample_walk(ld_ref, start, &mut rng, WalkConfig::explicit(), rep)
                .map_err(|e| e.to_string())?;
            let full = thick_point_count(&ws, a);
            let d = markov_decompose(&ws, sub_ref, a).map_err(|e| e.to_string())?;
            Ok((
                rep,
                full,
                d.first.atom_count(),
                d.second.atom_count(),
                d.cross.atom_count(),
                d.exact,
            ))
        })
        .collect();

    let mut csv = Csv::new(&["replication", "atoms_full", "first", "second", "cross", "exact"]);
    let mut exact_count = 0u64;
    for row in rows {
        let (rep, full, f, s, c, exact) = row.map_err(|e| CliError::Runtime(anyhow::anyhow!(e)))?;
        if exact {
            exact_count += 1;
        }
        csv.row(&[
            CsvCell::Int(rep as i64),
            CsvCell::Int(full as i64),
            CsvCell::Int(f as i64),
            CsvCell::Int(s as i64),
            CsvCell::Int(c as i64),
            CsvCell::Text(if exact { "true" } else { "false" }),
        ]);
    }

    let echo = serde_json::json!({
        "N": n, "a": a, "samples": samples, "sub": sub_s, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "markov-check", seed, echo)?;
    w.write_text("markov_decomposition.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({"exact": exact_count, "total": samples}),
    )?;
    w.finalize()?;

    println!("exact: {exact_count}/{samples}");
    if exact_count == samples {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!(
            "markov decomposition exact for only {exact_count}/{samples} samples"
        )))
    }
}

fn cmd_split_uniformity(args: SplitUniformityArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let n_list = parse_u32_list(
        &args
            .n_list
            .or(file.get("N")?)
            .unwrap_or_else(|| "64,256".into()),
    )?;
    let a = args.a.or(file.get("a")?).unwrap_or(0.5);
    let samples = args.samples.or(file.get("samples")?).unwrap_or(2000);
    let sub_s = args
        .sub
        .or(file.get("sub")?)
        .unwrap_or_else(|| "disc:0,0,0.6".into());
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "split-uniformity")?;
    file.finish()?;

    let sub_spec = parse_sub(&sub_s)?;
    let mut csv = Csv::new(&["n", "samples", "pooled_ratios", "ks_stat", "p_value"]);
    let mut stats = Vec::new();
    for &n in &n_list {
        let ld = Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0))?);
        let start = ld.x0_site();
        let sub = build_sub(&ld, &sub_spec, n, start)?;
        let cfg = RunConfig {
            master_seed: seed,
            n,
            a,
            sample_count: samples,
            estimator: "split_ratios".into(),
            ..Default::default()
        };
        let ld_ref = &ld;
        let sub_ref = &sub;
        let per_sample: Vec<Result<Vec<f64>, String>> = (0..samples)
            .into_par_iter()
            .map(|rep| {
                let mut rng = cfg.rng_for(n as u64, rep);
                let ws = sample_walk(ld_ref, start, &mut rng, WalkConfig::explicit(), rep)
                    .map_err(|e| e.to_string())?;
                Ok(markov_decompose(&ws, sub_ref, a)
                    .map_err(|e| e.to_string())?
                    .split_ratios)
            })
            .collect();
        let mut pooled = Vec::new();
        for r in per_sample {
            pooled.extend(r.map_err(|e| CliError::Runtime(anyhow::anyhow!(e)))?);
        }
        let (d, p) = ks_uniform_test(&pooled)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!(e.to_string())))?;
        csv.row(&[
            CsvCell::Int(n as i64),
            CsvCell::Int(samples as i64),
            CsvCell::Int(pooled.len() as i64),
            CsvCell::Real(d),
            CsvCell::Real(p),
        ]);
        println!("N={n:5}  pooled={:7}  KS={d:.5}  p={p:.5}", pooled.len());
        stats.push((n, pooled.len(), d, p));
    }
    let trend_decreasing = stats.windows(2).all(|w| w[1].2 <= w[0].2);
    println!("KS trend decreasing: {trend_decreasing} (informational)");

    let echo = serde_json::json!({
        "N": n_list, "a": a, "samples": samples, "sub": sub_s, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "split-uniformity", seed, echo)?;
    w.write_text("split_uniformity.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({
            "rows": stats.iter().map(|(n, ct, d, p)| serde_json::json!({
                "n": n, "pooled": ct, "ks": d, "p": p,
            })).collect::<Vec<_>>(),
            "trend_decreasing": trend_decreasing,
        }),
    )?;
    w.finalize()?;
    Ok(())
}

fn cmd_excursion_law(args: ExcursionLawArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let n = args.n.or(file.get("N")?).unwrap_or(256);
    let radius = args.radius.or(file.get("R")?).unwrap_or(16);
    let samples = args.samples.or(file.get("samples")?).unwrap_or(100_000);
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "excursion-law")?;
    file.finish()?;
    if radius < 1 || (radius & (radius - 1)) != 0 {
        return Err(CliError::Usage(format!("R must be a power of two, got {radius}")));
    }

    let ld = Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0))?);
    let start = ld.x0_site();
    let cfg = RunConfig {
        master_seed: seed,
        n,
        sample_count: samples,
        estimator: "excursions".into(),
        ..Default::default()
    };

    #[derive(Default, Clone, Copy)]
    struct Acc {
        count_inclusive: u32,
        count_truncating: u32,
        lt_sum: f64,
        lt_n: u64,
    }
    let ld_ref = &ld;
    let per: Vec<Result<Acc, String>> = (0..samples)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cfg.rng_for(0, rep);
            let ws = sample_walk(ld_ref, start, &mut rng, WalkConfig::explicit(), rep)
                .map_err(|e| e.to_string())?;
            let inc = count_excursions(&ws, start, radius, TruncatedFinalExcursion::Count)
                .map_err(|e| e.to_string())?;
            let tru = count_excursions(&ws, start, radius, TruncatedFinalExcursion::Ignore)
                .map_err(|e| e.to_string())?;
            Ok(Acc {
                count_inclusive: inc.count,
                count_truncating: tru.count,
                lt_sum: inc.local_times.iter().sum(),
                lt_n: inc.local_times.len() as u64,
            })
        })
        .collect();

    let mut counts_inc = Vec::with_capacity(per.len());
    let mut counts_tru = Vec::with_capacity(per.len());
    let mut lt_sum = 0.0;
    let mut lt_n = 0u64;
    for r in per {
        let acc = r.map_err(|e| CliError::Runtime(anyhow::anyhow!(e)))?;
        counts_inc.push(acc.count_inclusive);
        counts_tru.push(acc.count_truncating);
        lt_sum += acc.lt_sum;
        lt_n += acc.lt_n;
    }

    let q_r = (n as f64 / radius as f64).ln() / (n as f64).ln();
    let band = 5.0 / (n as f64).ln();
    let mut csv = Csv::new(&[
        "convention",
        "k",
        "n_ge_k",
        "n_ge_k1",
        "ratio",
        "stderr",
        "q_r",
        "band_lo",
        "band_hi",
    ]);
    let mut ratio_rows = Vec::new();
    for (label, counts) in [("count_truncated", &counts_inc), ("ignore_truncated", &counts_tru)] {
        for k in 1..=3u32 {
            let n_ge_k = counts.iter().filter(|&&c| c >= k).count() as u64;
            let n_ge_k1 = counts.iter().filter(|&&c| c >= k + 1).count() as u64;
            let ratio = n_ge_k1 as f64 / n_ge_k.max(1) as f64;
            let stderr = crate::harness::proportion_stderr(n_ge_k1, n_ge_k.max(1));
            csv.row(&[
                CsvCell::Text(label),
                CsvCell::Int(k as i64),
                CsvCell::Int(n_ge_k as i64),
                CsvCell::Int(n_ge_k1 as i64),
                CsvCell::Real(ratio),
                CsvCell::Real(stderr),
                CsvCell::Real(q_r),
                CsvCell::Real(q_r * (1.0 - band)),
                CsvCell::Real(q_r * (1.0 + band)),
            ]);
            ratio_rows.push(serde_json::json!({
                "convention": label, "k": k, "ratio": ratio, "stderr": stderr,
            }));
            println!(
                "{label}: P(A>={})/P(A>={}) = {ratio:.4} ± {stderr:.4}  (q_R = {q_r:.4})",
                k + 1,
                k
            );
        }
    }
    let lt_mean = lt_sum / lt_n.max(1) as f64;
    let lt_target = G * (radius as f64).ln();
    println!(
        "per-excursion local time: mean = {lt_mean:.4}  g·logR = {lt_target:.4}  (ratio {:.3})",
        lt_mean / lt_target
    );

    let echo = serde_json::json!({
        "N": n, "R": radius, "samples": samples, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "excursion-law", seed, echo)?;
    w.write_text("excursion_law.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({
            "ratios": ratio_rows,
            "q_r": q_r,
            "per_excursion_local_time_mean": lt_mean,
            "g_log_r": lt_target,
            "excursions_observed": lt_n,
        }),
    )?;
    w.finalize()?;
    Ok(())
}

fn cmd_thick_scaling(args: ThickScalingArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let n_list = parse_u32_list(
        &args
            .n_list
            .or(file.get("N")?)
            .unwrap_or_else(|| "64,128,256".into()),
    )?;
    let a = args.a.or(file.get("a")?).unwrap_or(0.5);
    let samples_raw = args
        .samples
        .or(file.get("samples")?)
        .unwrap_or_else(|| "2000".into());
    let counts = parse_u32_list(&samples_raw)?;
    if counts.len() != 1 && counts.len() != n_list.len() {
        return Err(CliError::Usage(
            "--samples must be one value or one per scale".into(),
        ));
    }
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "thick-scaling")?;
    file.finish()?;

    // run per scale with per-scale sample counts (convergence_table keeps a
    // single count; the drift assembly below mirrors it)
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let count = if counts.len() == 1 { counts[0] } else { counts[i] } as u64;
        let cfg = RunConfig {
            master_seed: seed,
            n,
            a,
            sample_count: count,
            estimator: format!("normalized_thick_count@N={n}"),
            ..Default::default()
        };
        let ld = Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0))?);
        let weight = crate::constants::atom_weight(a, n);
        let start = ld.x0_site();
        let ld_ref = &ld;
        let report = run_replications(&cfg, n as u64, move |rep, rng| {
            let ws = sample_walk(ld_ref, start, rng, WalkConfig::default(), rep)
                .map_err(|e| e.to_string())?;
            Ok(thick_point_count(&ws, a) as f64 * weight)
        })?;
        rows.push((n, report));
    }

    let mut csv = Csv::new(&["n", "samples", "normalized_mean", "stderr", "drift_from_prev"]);
    let mut drifts = Vec::new();
    for i in 0..rows.len() {
        let drift = if i > 0 {
            let d = (rows[i].1.point_estimate - rows[i - 1].1.point_estimate).abs();
            drifts.push(d);
            d
        } else {
            f64::NAN
        };
        csv.row(&[
            CsvCell::Int(rows[i].0 as i64),
            CsvCell::Int(rows[i].1.n as i64),
            CsvCell::Real(rows[i].1.point_estimate),
            CsvCell::Real(rows[i].1.stderr),
            CsvCell::Real(drift),
        ]);
        println!(
            "N={:5}  normalized mean = {:.5} ± {:.5}",
            rows[i].0, rows[i].1.point_estimate, rows[i].1.stderr
        );
    }
    let drift_decreasing = drifts.windows(2).all(|w| w[1] <= w[0]);
    println!("drift decreasing: {drift_decreasing} (informational)");

    let echo = serde_json::json!({
        "N": n_list, "a": a, "samples": samples_raw, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "thick-scaling", seed, echo)?;
    w.write_text("thick_scaling.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({
            "rows": rows.iter().map(|(n, r)| serde_json::json!({
                "n": n, "mean": r.point_estimate, "stderr": r.stderr, "samples": r.n,
            })).collect::<Vec<_>>(),
            "drifts": drifts,
            "drift_decreasing": drift_decreasing,
        }),
    )?;
    w.finalize()?;
    Ok(())
}

fn cmd_simplex_eval(args: SimplexEvalArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let c = parse_f64_list(
        &args
            .c
            .or(file.get("c")?)
            .ok_or_else(|| CliError::Usage("--c is required".into()))?,
    )?;
    let r = args.r.or(file.get("r")?).unwrap_or(c.len());
    let a = args.a.or(file.get("a")?).unwrap_or(1.0);
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "simplex-eval")?;
    file.finish()?;
    if r != c.len() {
        return Err(CliError::Usage(format!(
            "--r {} does not match {} coefficients",
            r,
            c.len()
        )));
    }
    let spec = SimplexSpec::new(a, c.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let value = simplex_product_integral(&spec);
    println!("{value:.6}");

    let echo = serde_json::json!({"r": r, "c": c, "a": a, "seed": seed});
    let mut w = ReportWriter::new(&out_dir, "simplex-eval", seed, echo)?;
    let mut csv = Csv::new(&["r", "a", "value"]);
    csv.row(&[CsvCell::Int(r as i64), CsvCell::Real(a), CsvCell::Real(value)]);
    w.write_text("simplex_eval.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(&json_name, serde_json::json!({"value": value}))?;
    w.finalize()?;
    Ok(())
}

fn cmd_martingale_approx(args: MartingaleApproxArgs) -> CmdResult {
    let file = FileConfig::load(args.common.config.as_ref())?;
    init_workers(&args.common, &file)?;
    let n = args.n.or(file.get("N")?).unwrap_or(64);
    let p = args.p.or(file.get("p")?).unwrap_or(3);
    let r_max = args.r_max.or(file.get("r_max")?).unwrap_or(3);
    let a = args.a.or(file.get("a")?).unwrap_or(0.5);
    let exit = parse_point(&args.exit.or(file.get("exit")?).unwrap_or_else(|| "1,0".into()))?;
    let grid = args.grid.or(file.get("grid")?).unwrap_or(32);
    let seed = seed_for(&args.common, &file)?;
    let out_dir = out_dir_for(&args.common, &file, "martingale-approx")?;
    file.finish()?;

    let ld = Arc::new(LatticeDomain::discretize(&DomainSpec::unit_disc(), n, (0.0, 0.0))?);
    let start = ld.x0_site();
    let solver_cfg = SolverConfig::default();
    let target = ld.nearest_boundary_site(exit)?;
    let h = hit_field(&ld, target, &solver_cfg)?;
    let cfg = RunConfig {
        master_seed: seed,
        n,
        a,
        sample_count: 1,
        estimator: "martingale".into(),
        ..Default::default()
    };
    let mut rng = cfg.rng_for(0, 0);
    let ws = sample_conditioned_walk(&ld, start, target, &h, &mut rng, WalkConfig::explicit(), 0)?;
    let dec = decompose_walk(&ws, p)?;
    let strips = dec.pieces.len();
    let eval = MartingaleEvaluator::new(dec, a, r_max, solver_cfg)?;

    let mut csv = Csv::new(&["x", "y", "density", "truncation_bound"]);
    let mut max_bound = 0.0f64;
    let mut rows = 0;
    for i in 0..grid {
        for j in 0..grid {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / grid as f64;
            let y = -1.0 + 2.0 * (j as f64 + 0.5) / grid as f64;
            let d = eval.density_at((x, y))?;
            max_bound = max_bound.max(d.truncation_bound);
            csv.row(&[
                CsvCell::Real(x),
                CsvCell::Real(y),
                CsvCell::Real(d.value),
                CsvCell::Real(d.truncation_bound),
            ]);
            rows += 1;
        }
    }
    println!(
        "strips = {strips}  grid = {grid}x{grid} ({rows} points)  max truncation bound = {max_bound:.3e}"
    );

    let echo = serde_json::json!({
        "N": n, "p": p, "r_max": r_max, "a": a, "exit": exit, "grid": grid, "seed": seed,
    });
    let mut w = ReportWriter::new(&out_dir, "martingale-approx", seed, echo)?;
    w.write_text("martingale_density.csv", &csv.finish())?;
    let json_name = args.common.json.unwrap_or_else(|| "report.json".into());
    w.write_report(
        &json_name,
        serde_json::json!({
            "strips": strips,
            "grid": grid,
            "max_truncation_bound": max_bound,
        }),
    )?;
    w.finalize()?;
    Ok(())
}
