//! `fkmc`: command-line front end for the Feynman–Kac Monte Carlo solver.
//!
//! Data go to `<out>/<subcommand>.<csv|json>` with a provenance header;
//! logs go to stderr. Exit codes: 0 ok, 2 validation, 3 runtime,
//! 4 failed check or acceptance criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use serde_json::{json, Value};

use fk_core::acceptance::{resolve_ids, run_suite, AcceptanceConfig, Verdict, MANIFEST};
use fk_core::analysis::{holder_variance_curve, HolderConfig};
use fk_core::estimator::{
    comparison_check, moment_estimate, solve_point_conditional, solve_point_fixed_noise, AronsonConstants, Budget, ComparisonGrid, FKEstimate,
    DEFAULT_SEED,
};
use fk_core::model::{DomainSpec, ProblemConfig, ProblemSpec, Product};
use fk_core::noisefield::{smoothed_noise, MollifierParams, NoiseField, SheetGrid, SheetSampler, TabulatedField};
use fk_core::pathsim::{empirical_density_check, DensityConfig, PathConfig, PathSimulator};
use fk_core::pdecheck::{crosscheck, CrosscheckReport, FDMesh};
use fk_core::spectral::smallball_predict;
use fk_core::Error;

#[derive(Parser)]
#[command(name = "fkmc", version, about = "Feynman–Kac Monte Carlo for parabolic equations driven by fractional noise")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (TOML).
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Master seed; overrides the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Path count; overrides the spec.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time steps per path; overrides the spec.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Exit with status 4 when the subcommand's built-in check fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Conditional,
    FixedNoise,
}

#[derive(Subcommand)]
enum Command {
    /// Point estimate of u(t, x).
    Solve {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = Mode::Conditional)]
        mode: Mode,
    },
    /// Replica moments E[u^k].
    Moments {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        k: Vec<usize>,
    },
    /// Spectral small-ball prediction against Monte Carlo survival.
    Smallball {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        /// Eigen grid nodes per axis.
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
    /// Fixed-noise Feynman–Kac against finite differences on one sheet.
    Crosscheck {
        #[arg(long)]
        t: Option<f64>,
        /// Points separated by ';', coordinates by ','.
        #[arg(long, allow_hyphen_values = true)]
        points: String,
        #[arg(long, default_value_t = 200)]
        cells: usize,
        #[arg(long, default_value_t = 400)]
        fd_steps: usize,
    },
    /// Mean-square increments of the exponent against spatial and temporal offsets.
    Holder {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.4")]
        spatial: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.04,0.08,0.16")]
        temporal: Vec<f64>,
    },
    /// Transition density envelope, Chapman–Kolmogorov and mass checks.
    Density {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Brownian comparison of the singular functional on an (s, r) grid.
    Compare {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, default_value_t = 5)]
        grid: usize,
    },
    /// Runs the acceptance suite.
    Acceptance {
        /// Criterion ids or keys (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Multiplies every bundled path and sample count.
        #[arg(long, default_value_t = 1.0)]
        budget_scale: f64,
        /// Print the manifest and exit.
        #[arg(long)]
        list: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Moments { .. } => "moments",
            Command::Smallball { .. } => "smallball",
            Command::Crosscheck { .. } => "crosscheck",
            Command::Holder { .. } => "holder",
            Command::Density { .. } => "density",
            Command::Compare { .. } => "compare",
            Command::Acceptance { .. } => "acceptance",
        }
    }
}

/// Result table in both output shapes.
struct Output {
    header: String,
    rows: Vec<String>,
    json: Value,
    /// `Some(false)` when the built-in check failed.
    check: Option<bool>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        use Error::*;
        let code = match e {
            ConfigParse(_) | HurstOutOfRange { .. } | AdmissibilityViolated { .. } | HolderUnavailable { .. } | DimensionMismatch { .. }
            | InvalidDomain(_) | EmptyDomainMesh | StartOutsideDomain | InvalidConfig(_) | BallNotInsideDomain { .. } | NonRectangularDomain => 2,
            _ => 3,
        };
        let kind = if code == 2 { "validation failed" } else { "runtime error" };
        Failure { code, message: format!("{kind}: {e}") }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, message: format!("i/o error: {e}") }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: format!("validation failed: {}", msg.into()) }
}

/// Parsed problem plus the budget after command-line overrides.
struct Loaded {
    cfg: ProblemConfig,
    spec: ProblemSpec,
    budget: Budget,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let path = common.spec.as_deref().ok_or_else(|| validation("--spec is required for this subcommand"))?;
    let cfg = ProblemConfig::from_path(path)?;
    let spec = cfg.build()?;
    let mut budget = Budget::from_config(&cfg.budget);
    if let Some(s) = common.seed {
        budget.seed = s;
    }
    if let Some(p) = common.paths {
        budget.n_paths = p;
    }
    if let Some(n) = common.steps {
        budget.n_steps = n;
    }
    Ok(Loaded { cfg, spec, budget })
}

impl Loaded {
    fn t(&self, t: Option<f64>) -> f64 {
        t.or(self.cfg.point.as_ref().map(|p| p.t)).unwrap_or(self.spec.horizon)
    }

    fn x(&self, x: &Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
        let x = x.clone().or(self.cfg.point.as_ref().map(|p| p.x.clone())).unwrap_or_else(|| self.spec.domain.center());
        if x.len() != self.spec.dim() {
            return Err(Error::DimensionMismatch { expected: self.spec.dim(), got: x.len() }.into());
        }
        Ok(x)
    }

    /// The sheet of the `[noise]` section, smoothed and tabulated over the domain.
    fn field(&self) -> Result<(Box<dyn NoiseField>, String), Failure> {
        let nc = self.cfg.noise.as_ref().ok_or_else(|| validation("this run needs a [noise] section in the spec"))?;
        let m = MollifierParams::new(nc.eps, nc.delta)?;
        let grid = SheetGrid::covering(&self.spec.domain, self.spec.horizon, &m, nc.time_nodes, nc.space_nodes)?;
        let seed = nc.seed.unwrap_or(self.budget.seed);
        let sheet = SheetSampler::new(grid, &self.spec.hurst)?.sample(seed);
        let direct = smoothed_noise(&sheet, m)?;
        let tag = format!("sheet-{seed}-eps{}-delta{}", nc.eps, nc.delta);
        if self.spec.dim() > 2 {
            return Ok((Box::new(direct), tag));
        }
        let (lo, hi) = self.spec.domain.bounding_box();
        let table = TabulatedField::build(&direct, self.spec.horizon, 2 * nc.time_nodes + 1, &lo, &hi, 2 * nc.space_nodes + 1)?;
        Ok((Box::new(table), tag))
    }

    fn provenance(&self, sub: &str) -> Value {
        json!({
            "tool": "fkmc",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": sub,
            "config_digest": self.cfg.digest(),
            "seed": self.budget.seed,
            "paths": self.budget.n_paths,
            "steps": self.budget.n_steps,
        })
    }
}

fn estimates_output(est: &[FKEstimate], check: Option<bool>) -> Output {
    Output {
        header: FKEstimate::CSV_HEADER.into(),
        rows: est.iter().map(FKEstimate::csv_row).collect(),
        json: serde_json::to_value(est.iter().map(FKEstimate::record).collect::<Vec<_>>()).expect("records serialize"),
        check,
    }
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_points(s: &str, d: usize) -> Result<Vec<Vec<f64>>, Failure> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let x: Vec<f64> = p.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| validation(format!("bad point '{p}': {e}")))?;
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() }.into());
            }
            Ok(x)
        })
        .collect()
}

fn run_solve(l: &Loaded, t: Option<f64>, x: &Option<Vec<f64>>, mode: Mode) -> Result<Output, Failure> {
    let (t, x) = (l.t(t), l.x(x)?);
    let est = match mode {
        Mode::Conditional => solve_point_conditional(&l.spec, t, &x, &l.budget)?,
        Mode::FixedNoise => {
            let (field, tag) = l.field()?;
            solve_point_fixed_noise(&l.spec, t, &x, field.as_ref(), &tag, &l.budget)?
        }
    };
    info!("u({t}, {x:?}) = {} +- {}", est.value, est.std_error);
    let ok = est.value.is_finite() && est.std_error.is_finite() && (l.spec.product == Product::Skorohod || est.value >= 0.0);
    Ok(estimates_output(&[est], Some(ok)))
}

fn run_moments(l: &Loaded, t: Option<f64>, x: &Option<Vec<f64>>, ks: &[usize]) -> Result<Output, Failure> {
    let (t, x) = (l.t(t), l.x(x)?);
    let est: Vec<FKEstimate> = ks.iter().map(|&k| moment_estimate(&l.spec, t, &x, k, &l.budget)).collect::<Result<_, _>>()?;
    for e in &est {
        info!("E u^{} = {} +- {}", e.mode.k(), e.value, e.std_error);
    }
    // Cauchy–Schwarz: E u^2 >= (E u)^2 up to 3 joint SE
    let first = est.iter().find(|e| e.mode.k() == 1);
    let second = est.iter().find(|e| e.mode.k() == 2);
    let ok = match (first, second) {
        (Some(a), Some(b)) => {
            let se = (b.std_error.powi(2) + (2.0 * a.value * a.std_error).powi(2)).sqrt();
            b.value >= a.value * a.value - 3.0 * se
        }
        _ => est.iter().all(|e| e.value.is_finite()),
    };
    Ok(estimates_output(&est, Some(ok)))
}

fn run_smallball(l: &Loaded, eps: f64, t: f64, x: &Option<Vec<f64>>, grid: usize) -> Result<Output, Failure> {
    let x = l.x(x)?;
    let pred = smallball_predict(&l.spec.coeffs, &l.spec.domain, &x, eps, t, grid)?;
    let ball = if x.len() == 1 { DomainSpec::interval(x[0] - eps, x[0] + eps)? } else { DomainSpec::ball(x.clone(), eps)? };
    let sim = PathSimulator::from_parts(ball, l.spec.coeffs.clone())?;
    let base = PathConfig::new(l.budget.n_steps, t, x.clone(), 0).with_detection(l.budget.exit_detection);
    let n = l.budget.n_paths;
    let mc = sim.survival_at(&base, n, l.budget.seed, &[l.budget.n_steps])?[0];
    let se = (mc * (1.0 - mc) / n as f64).sqrt();
    let ratio = mc / pred.value;
    info!("prediction {} vs Monte Carlo {mc} +- {se} (lambda1 = {})", pred.value, pred.lambda1);
    Ok(Output {
        header: "eps,t,x,lambda1,prediction,mc_estimate,mc_se,ratio".into(),
        rows: vec![format!("{eps},{t},{},{},{},{mc},{se},{ratio}", fmt_point(&x), pred.lambda1, pred.value)],
        json: json!({ "prediction": pred, "mc_estimate": mc, "mc_se": se, "ratio": ratio }),
        check: Some((ratio - 1.0).abs() <= 0.10),
    })
}

fn run_crosscheck(l: &Loaded, t: Option<f64>, points: &str, cells: usize, fd_steps: usize) -> Result<Output, Failure> {
    let t = l.t(t);
    let pts: Vec<(f64, Vec<f64>)> = parse_points(points, l.spec.dim())?.into_iter().map(|x| (t, x)).collect();
    let (field, tag) = l.field()?;
    let rep = crosscheck(&l.spec, field.as_ref(), &tag, &pts, &l.budget, &FDMesh::new(cells, fd_steps))?;
    info!("max relative gap {} ({})", rep.max_rel_gap, rep.fd_scheme);
    Ok(Output {
        header: CrosscheckReport::CSV_HEADER.into(),
        rows: rep.csv_rows(),
        json: serde_json::to_value(&rep).expect("report serializes"),
        check: Some(rep.max_rel_gap < 0.03),
    })
}

fn run_holder(l: &Loaded, t: Option<f64>, x: &Option<Vec<f64>>, spatial: &[f64], temporal: &[f64]) -> Result<Output, Failure> {
    let (t, x) = (l.t(t), l.x(x)?);
    let mut direction = vec![0.0; x.len()];
    direction[0] = 1.0;
    let cfg = HolderConfig { spatial_offsets: spatial.to_vec(), temporal_offsets: temporal.to_vec(), direction };
    let rep = holder_variance_curve(&l.spec, t, &x, &cfg, &l.budget)?;
    let mut rows = Vec::new();
    for (kind, pts) in [("spatial", &rep.spatial), ("temporal", &rep.temporal)] {
        rows.extend(pts.iter().map(|p| format!("{kind},{},{},{}", p.offset, p.mean, p.se)));
    }
    let spatial_ok = rep.spatial_fit.as_ref().is_none_or(|f| f.slope >= 2.0 * rep.theory.rho - 0.4);
    let temporal_ok = match (&rep.temporal_fit, rep.theory.rho_prime) {
        (Some(f), Some(rp)) => f.slope >= rp - 0.4,
        _ => true,
    };
    if let Some(f) = &rep.spatial_fit {
        info!("spatial slope {} (2 rho = {})", f.slope, 2.0 * rep.theory.rho);
    }
    if let Some(f) = &rep.temporal_fit {
        info!("temporal slope {} (rho' = {:?})", f.slope, rep.theory.rho_prime);
    }
    Ok(Output {
        header: "kind,offset,mean,se".into(),
        rows,
        json: serde_json::to_value(&rep).expect("report serializes"),
        check: Some(spatial_ok && temporal_ok),
    })
}

fn run_density(l: &Loaded, x: &Option<Vec<f64>>, times: &[f64], bins: usize) -> Result<Output, Failure> {
    let x = l.x(x)?;
    let sim = PathSimulator::new(&l.spec)?;
    let mut cfg = DensityConfig::new(times.to_vec(), l.budget.n_paths);
    cfg.bins_per_axis = bins;
    cfg.n_steps = l.budget.n_steps;
    let rep = empirical_density_check(&sim, &x, &cfg, l.budget.seed)?;
    info!("envelope C = {} (certified {}), c = {}, CK TV = {}", rep.c_fit, rep.c_certified, rep.c_exp, rep.ck_tv);
    let ok = rep.certified && rep.ck_tv < 0.05 && (rep.mass - 1.0).abs() <= 3.0 * rep.mass_se + 1e-12;
    Ok(Output {
        header: "c_fit,c_exp,c_certified,certified,fit_r2,ck_tv,mass,mass_se".into(),
        rows: vec![format!(
            "{},{},{},{},{},{},{},{}",
            rep.c_fit, rep.c_exp, rep.c_certified, rep.certified, rep.fit_r2, rep.ck_tv, rep.mass, rep.mass_se
        )],
        json: serde_json::to_value(&rep).expect("report serializes"),
        check: Some(ok),
    })
}

fn run_compare(l: &Loaded, t: Option<f64>, x: &Option<Vec<f64>>, grid: usize) -> Result<Output, Failure> {
    let (t, x) = (l.t(t), l.x(x)?);
    let sim = PathSimulator::new(&l.spec)?;
    // the envelope needs twice the comparison budget to resolve its tails
    let mut dc = DensityConfig::new(vec![0.25 * t, 0.5 * t, t], 2 * l.budget.n_paths);
    dc.bins_per_axis = 80;
    dc.n_steps = l.budget.n_steps;
    let dens = empirical_density_check(&sim, &x, &dc, l.budget.seed)?;
    let constants = AronsonConstants::from_density(&dens, l.spec.dim());
    info!("Aronson constants kappa1 = {}, kappa2 = {}", constants.kappa1, constants.kappa2);
    let rep = comparison_check(&l.spec, &x, ComparisonGrid { t, n: grid }, constants, &l.budget)?;
    info!("{} violations out of {}", rep.violations, rep.points.len());
    Ok(Output {
        header: "s,r,lhs,lhs_se,rhs,violated".into(),
        rows: rep.points.iter().map(|p| format!("{},{},{},{},{},{}", p.s, p.r, p.lhs, p.lhs_se, p.rhs, p.violated)).collect(),
        json: serde_json::to_value(&rep).expect("report serializes"),
        check: Some(rep.violations == 0),
    })
}

fn write_output(common: &Common, name: &str, provenance: &Value, out: &Output) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&common.out)?;
    let (path, body) = match common.format {
        Format::Json => {
            let doc = json!({ "provenance": provenance, "result": out.json });
            (common.out.join(format!("{name}.json")), serde_json::to_string_pretty(&doc).expect("json") + "\n")
        }
        Format::Csv => {
            let prov = provenance.as_object().expect("object").iter().map(|(k, v)| format!("{k}={}", v.to_string().trim_matches('"'))).collect::<Vec<_>>();
            let mut s = format!("# {}\n{}\n", prov.join(" "), out.header);
            for r in &out.rows {
                s.push_str(r);
                s.push('\n');
            }
            (common.out.join(format!("{name}.csv")), s)
        }
    };
    fs::write(&path, body)?;
    Ok(path)
}

fn run_acceptance(common: &Common, only: &[String], scale: f64, list: bool) -> Result<u8, Failure> {
    if list {
        for c in MANIFEST {
            println!("{:>2} {:<18} budget: {}; tolerance: {}", c.id, c.key, c.budget, c.tolerance);
        }
        return Ok(0);
    }
    if !(scale > 0.0) {
        return Err(validation("--budget-scale must be positive"));
    }
    let ids = resolve_ids(only)?;
    let cfg = AcceptanceConfig { seed: common.seed.unwrap_or(DEFAULT_SEED), budget_scale: scale };
    let report = run_suite(&cfg, &ids, |r| info!("{}", r.line()));
    let provenance = json!({
        "tool": "fkmc",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": "acceptance",
        "seed": cfg.seed,
        "budget_scale": scale,
    });
    let out = Output {
        header: "id,key,verdict,checks".into(),
        rows: report
            .criteria
            .iter()
            .map(|c| {
                let checks: Vec<String> = c.checks.iter().map(|k| format!("{}={}", k.name, k.value)).collect();
                format!("{},{},{},{}", c.info.id, c.info.key, c.verdict.label(), checks.join(" "))
            })
            .collect(),
        json: serde_json::to_value(&report).expect("report serializes"),
        check: None,
    };
    let path = write_output(common, "acceptance", &provenance, &out)?;
    let passed = report.criteria.iter().filter(|c| c.verdict == Verdict::Pass).count();
    info!("{passed}/{} criteria passed; report in {}", report.criteria.len(), path.display());
    Ok(if report.any_failed() { 4 } else { 0 })
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let common = &cli.common;
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(validation("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure { code: 3, message: format!("runtime error: {e}") })?;
    }
    if let Command::Acceptance { only, budget_scale, list } = &cli.cmd {
        return run_acceptance(common, only, *budget_scale, *list);
    }
    let loaded = load(common)?;
    let name = cli.cmd.name();
    info!("{name}: spec {} digest {} seed {}", common.spec.as_deref().map_or("-".into(), |p: &Path| p.display().to_string()), loaded.cfg.digest(), loaded.budget.seed);
    let out = match &cli.cmd {
        Command::Solve { t, x, mode } => run_solve(&loaded, *t, x, *mode)?,
        Command::Moments { t, x, k } => run_moments(&loaded, *t, x, k)?,
        Command::Smallball { eps, t, x, grid } => run_smallball(&loaded, *eps, *t, x, *grid)?,
        Command::Crosscheck { t, points, cells, fd_steps } => run_crosscheck(&loaded, *t, points, *cells, *fd_steps)?,
        Command::Holder { t, x, spatial, temporal } => run_holder(&loaded, *t, x, spatial, temporal)?,
        Command::Density { x, times, bins } => run_density(&loaded, x, times, *bins)?,
        Command::Compare { t, x, grid } => run_compare(&loaded, *t, x, *grid)?,
        Command::Acceptance { .. } => unreachable!(),
    };
    let path = write_output(common, name, &loaded.provenance(name), &out)?;
    info!("wrote {}", path.display());
    match out.check {
        Some(false) if common.check => {
            warn!("{name} check failed");
            Ok(4)
        }
        _ => Ok(0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).target(env_logger::Target::Stderr).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            error!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_split_on_semicolons_and_commas() {
        let p = parse_points("0.3,0.4; -0.5,0.5;", 2).ok().unwrap();
        assert_eq!(p, vec![vec![0.3, 0.4], vec![-0.5, 0.5]]);
        assert_eq!(parse_points("0.3", 2).err().unwrap().code, 2);
        assert_eq!(parse_points("a,b", 2).err().unwrap().code, 2);
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(Failure::from(Error::StartOutsideDomain).code, 2);
        assert_eq!(Failure::from(Error::InsufficientSamples("x".into())).code, 3);
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from(["fkmc", "solve", "--x", "-0.5", "--seed", "3", "--format", "csv"]).unwrap();
        assert_eq!(cli.common.seed, Some(3));
        assert!(cli.common.format == Format::Csv);
        match cli.cmd {
            Command::Solve { x, .. } => assert_eq!(x, Some(vec![-0.5])),
            _ => panic!("wrong subcommand"),
        }
    }
}
