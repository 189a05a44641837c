//! Acceptance suite: eleven end-to-end checks with fixed budgets and
//! tolerances. Each criterion returns a verdict plus the numbers behind it.
//! Running below the bundled budget turns a statistical failure into
//! `Inconclusive`; deterministic criteria still fail outright.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{holder_variance_curve, moment_growth_fit, sensitivity_curve, theory_exponents, HolderConfig, MomentSweep};
use crate::error::{Error, Result};
use crate::estimator::{comparison_check, moment_estimate, solve_point_conditional, solve_point_fixed_noise, AronsonConstants, Budget, ComparisonGrid};
use crate::kernels::{pair_energy, KernelWeights};
use crate::model::{BoundaryData, CoefficientField, DomainSpec, HurstParams, Product, ProblemSpec};
use crate::noisefield::{aa_inner_product, smoothed_noise, MollifierParams, SheetGrid, SheetSampler, Smoother, TabulatedField};
use crate::pathsim::{empirical_density_check, DensityConfig, PathConfig, PathSimulator};
use crate::pdecheck::{crosscheck, FDMesh};
use crate::rng::{derive_seed, DEFAULT_SEED};
use crate::spectral::{eigen_bounds_check, laplacian_calibration, principal_eigenpair, RESIDUAL_TOL};
use crate::stats::{fit_line, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Manifest entry: what a criterion runs and what it must meet.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriterionInfo {
    pub id: usize,
    pub key: &'static str,
    pub budget: &'static str,
    pub tolerance: &'static str,
    /// Outcome depends on Monte Carlo error, so a reduced budget can only
    /// be inconclusive.
    pub statistical: bool,
}

pub const MANIFEST: [CriterionInfo; 11] = [
    CriterionInfo {
        id: 1,
        key: "fk-vs-fd",
        budget: "2e5 paths, 400 steps; sheet 200x200, eps=delta=0.05; FD 200 cells x 400 steps",
        tolerance: "relative gap < 0.03 at x = 0.25, 0.5, 0.75, t = 0.5",
        statistical: true,
    },
    CriterionInfo {
        id: 2,
        key: "variance-identity",
        budget: "one path of 1000 steps; 2e4 sheet samples on a 200x200 grid; 7 dyadic mollifier levels",
        tolerance: "|Var/<A,A> - 1| < 0.05; distance to alpha*E(p,p) strictly decreasing over the last 3 levels",
        statistical: true,
    },
    CriterionInfo {
        id: 3,
        key: "skorohod-mean",
        budget: "1e5 paths, 100 steps",
        tolerance: "Skorohod |E u - 1| <= 3 SE; Stratonovich E u >= 1 - 3 SE; t = 0.5, 1",
        statistical: true,
    },
    CriterionInfo {
        id: 4,
        key: "small-ball",
        budget: "2e5 paths, 200 steps per unit time; eigen grid 400",
        tolerance: "MC / (4/pi) exp(-pi^2 t/8) within 10% at t = 1, 2, 3; decay rate within 3% of lambda_1; lambda_1 eps^2 within 1%",
        statistical: true,
    },
    CriterionInfo {
        id: 5,
        key: "eigen",
        budget: "grid 400 (d=1), 80 (d=2)",
        tolerance: "lambda_1 within 1% of pi^2/8 and pi^2; psi_1 > 0 inside; residual < 1e-8 max(lambda,1); lambda_1 R^2 bound holds",
        statistical: false,
    },
    CriterionInfo {
        id: 6,
        key: "comparison",
        budget: "1e5 paths, 100 steps; constants from 2e5-path density fits",
        tolerance: "no (s, r) cell of the 5x5 grid with lhs - rhs > 3 SE, for sigma = 2I and bounded drift",
        statistical: true,
    },
    CriterionInfo {
        id: 7,
        key: "moment-exponents",
        budget: "4000 replica samples, 50 steps; box (-6, 6)",
        tolerance: "t-slope in 1.75 +/- 0.35; k-slope in 2.25 +/- 0.35; sandwich r^2 >= 0.9",
        statistical: true,
    },
    CriterionInfo {
        id: 8,
        key: "holder",
        budget: "300 coupled paths, 400 steps; spatial offsets 0.1, 0.2, 0.4; temporal 0.02..0.16",
        tolerance: "spatial slope >= 2 rho - 0.4; temporal slope >= rho' - 0.4",
        statistical: true,
    },
    CriterionInfo {
        id: 9,
        key: "sensitivity",
        budget: "200 coupled paths, 400 steps; gaps 0.01..0.08",
        tolerance: "slope of log E sup|dX|^2 within 2 +/- 0.3",
        statistical: true,
    },
    CriterionInfo {
        id: 10,
        key: "density",
        budget: "1e6 paths, 200 steps, 40 bins",
        tolerance: "envelope certified; Chapman-Kolmogorov TV < 0.05; |mass - 1| <= 3 SE",
        statistical: true,
    },
    CriterionInfo {
        id: 11,
        key: "determinism",
        budget: "small runs repeated with 1 and 3 workers",
        tolerance: "byte-identical serialized output",
        statistical: false,
    },
];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value, target: target.into(), pass }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub info: CriterionInfo,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    /// Wall time; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
    /// Set when the run itself failed.
    pub error: Option<String>,
}

impl CriterionReport {
    /// One human-readable line.
    pub fn line(&self) -> String {
        let detail = match &self.error {
            Some(e) => format!("error: {e}"),
            None => self
                .checks
                .iter()
                .map(|c| format!("{}={:.4}{}", c.name, c.value, if c.pass { "" } else { "(!)" }))
                .collect::<Vec<_>>()
                .join(" "),
        };
        format!("[{}] {:>2} {:<18} {} ({:.1}s)", self.verdict.label(), self.info.id, self.info.key, detail, self.seconds)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub budget_scale: f64,
    pub criteria: Vec<CriterionReport>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn any_failed(&self) -> bool {
        self.criteria.iter().any(|c| c.verdict == Verdict::Fail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceConfig {
    pub seed: u64,
    /// Multiplies every path and sample count; 1 is the bundled budget.
    pub budget_scale: f64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED, budget_scale: 1.0 }
    }
}

impl AcceptanceConfig {
    fn paths(&self, n: usize) -> usize {
        ((n as f64 * self.budget_scale).round() as usize).max(2)
    }

    fn seed_for(&self, id: usize) -> u64 {
        derive_seed(self.seed, id as u64)
    }
}

/// Resolves ids given as numbers or keys; an empty list selects everything.
pub fn resolve_ids(requested: &[String]) -> Result<Vec<usize>> {
    if requested.is_empty() {
        return Ok(MANIFEST.iter().map(|c| c.id).collect());
    }
    let mut out = Vec::new();
    for r in requested {
        let r = r.trim();
        let hit = MANIFEST.iter().find(|c| c.key == r || r.parse::<usize>().ok() == Some(c.id));
        match hit {
            Some(c) if !out.contains(&c.id) => out.push(c.id),
            Some(_) => {}
            None => {
                let valid: Vec<String> = MANIFEST.iter().map(|c| format!("{} ({})", c.id, c.key)).collect();
                return Err(Error::InvalidConfig(format!("unknown criterion '{r}'; valid ids: {}", valid.join(", "))));
            }
        }
    }
    Ok(out)
}

pub fn run_suite(cfg: &AcceptanceConfig, ids: &[usize], mut on_done: impl FnMut(&CriterionReport)) -> AcceptanceReport {
    let mut criteria = Vec::new();
    for &id in ids {
        let r = run_criterion(id, cfg);
        on_done(&r);
        criteria.push(r);
    }
    AcceptanceReport { seed: cfg.seed, budget_scale: cfg.budget_scale, criteria }
}

pub fn run_criterion(id: usize, cfg: &AcceptanceConfig) -> CriterionReport {
    let info = MANIFEST[id - 1];
    let start = Instant::now();
    let outcome = match id {
        1 => fk_vs_fd(cfg),
        2 => variance_identity(cfg),
        3 => skorohod_mean(cfg),
        4 => small_ball(cfg),
        5 => eigen(),
        6 => comparison(cfg),
        7 => moment_exponents(cfg),
        8 => holder(cfg),
        9 => sensitivity(cfg),
        10 => density(cfg),
        11 => determinism(cfg),
        _ => unreachable!("ids come from resolve_ids"),
    };
    let seconds = start.elapsed().as_secs_f64();
    let reduced = cfg.budget_scale < 1.0 && info.statistical;
    match outcome {
        Ok(checks) => {
            let verdict = if checks.iter().all(|c| c.pass) {
                Verdict::Pass
            } else if reduced {
                Verdict::Inconclusive
            } else {
                Verdict::Fail
            };
            CriterionReport { info, verdict, checks, seconds, error: None }
        }
        Err(e) => {
            let verdict = if reduced && matches!(e, Error::InsufficientSamples(_)) { Verdict::Inconclusive } else { Verdict::Fail };
            CriterionReport { info, verdict, checks: Vec::new(), seconds, error: Some(e.to_string()) }
        }
    }
}

fn within(name: &str, value: f64, center: f64, tol: f64) -> Check {
    Check::new(name, value, format!("{center} +/- {tol}"), (value - center).abs() <= tol)
}

fn at_least(name: &str, value: f64, lo: f64) -> Check {
    Check::new(name, value, format!(">= {lo}"), value >= lo)
}

fn below(name: &str, value: f64, hi: f64) -> Check {
    Check::new(name, value, format!("< {hi}"), value < hi)
}

fn brownian_spec(domain: DomainSpec, h: f64, product: Product, horizon: f64) -> ProblemSpec {
    let d = domain.dim();
    ProblemSpec::new(domain, CoefficientField::brownian(d), HurstParams::isotropic(h, h, d), BoundaryData::constant(1.0), product, horizon)
}

fn fk_vs_fd(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let t = 0.5;
    let coeffs = CoefficientField::brownian(1).with_drift(Arc::new(|s, _, out: &mut [f64]| out[0] = 0.1 * s.sin()), false, 0.0, (0.1, 1.0), 0.1);
    let spec = ProblemSpec::new(DomainSpec::interval(0.0, 1.0)?, coeffs, HurstParams::isotropic(0.8, 0.8, 1), BoundaryData::constant(1.0), Product::Stratonovich, t);
    let m = MollifierParams::new(0.05, 0.05)?;
    let grid = SheetGrid::covering(&spec.domain, t, &m, 200, 200)?;
    let sheet = SheetSampler::new(grid, &spec.hurst)?.sample(cfg.seed_for(1));
    let table = TabulatedField::build(&smoothed_noise(&sheet, m)?, t, 201, &[0.0], &[1.0], 201)?;
    let points: Vec<(f64, Vec<f64>)> = [0.25, 0.5, 0.75].iter().map(|&x| (t, vec![x])).collect();
    let budget = Budget::new(cfg.paths(200_000), 400, cfg.seed_for(101));
    let rep = crosscheck(&spec, &table, "acceptance-sheet", &points, &budget, &FDMesh::new(200, 400))?;
    Ok(rep.rows.iter().map(|r| below(&format!("gap@{}", r.x[0]), r.rel_gap, 0.03)).collect())
}

fn variance_identity(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let t = 0.5;
    let spec = brownian_spec(DomainSpec::interval(-4.0, 4.0)?, 0.8, Product::Stratonovich, t);
    let h = &spec.hurst;
    let n = 1000;
    let path = PathSimulator::new(&spec)?.simulate(&PathConfig::new(n, t, vec![0.0], cfg.seed_for(2)))?;
    let m = MollifierParams::new(0.05, 0.05)?;

    // empirical variance over sheets through the adjoint of the sampler
    let (lo, hi) = path.states.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    let grid = SheetGrid::covering(&DomainSpec::interval(lo, hi.max(lo + 1e-6))?, t, &m, 200, 200)?;
    let sampler = SheetSampler::new(grid, h)?;
    let coef = Smoother::new(sampler.grid(), m)?.path_coefficients(&path, t)?;
    let pulled = sampler.pull_back(&coef);
    let samples = cfg.paths(20_000);
    let mut stats = RunningStats::default();
    for j in 0..samples as u64 {
        stats.push(sampler.sample_functional(&pulled, derive_seed(cfg.seed_for(202), j)));
    }
    let aa = aa_inner_product(&path, t, h, &m);
    let ratio = stats.variance() / aa;

    // dyadic refinement toward the discrete pair energy
    let weights = KernelWeights::uniform(t, n, h.h0)?;
    let target = h.alpha() * pair_energy(&path, &path, h, &weights)?.value;
    let mut level = m;
    let mut dist = Vec::new();
    for _ in 0..7 {
        dist.push((aa_inner_product(&path, t, h, &level) - target).abs());
        level = level.halved();
    }
    let k = dist.len();
    let monotone = dist[k - 3] > dist[k - 2] && dist[k - 2] > dist[k - 1];
    Ok(vec![
        within("var_ratio", ratio, 1.0, 0.05),
        Check::new("last_gap_rel", dist[k - 1] / target, "strictly decreasing over last 3 levels", monotone),
    ])
}

fn skorohod_mean(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let spec = brownian_spec(DomainSpec::interval(-1.0, 1.0)?, 0.8, Product::Skorohod, 1.0);
    let strat = spec.with_product(Product::Stratonovich);
    let mut checks = Vec::new();
    for (i, t) in [0.5, 1.0].into_iter().enumerate() {
        let budget = Budget::new(cfg.paths(100_000), 100, cfg.seed_for(300 + i));
        let sk = solve_point_conditional(&spec, t, &[0.0], &budget)?;
        // the closed-form conditional mean cancels exactly, so the SE may be 0
        let dev = (sk.value - 1.0).abs();
        checks.push(Check::new(format!("sk_dev@{t}"), dev, format!("<= {:e}", 3.0 * sk.std_error), dev <= 3.0 * sk.std_error));
        let st = solve_point_conditional(&strat, t, &[0.0], &budget)?;
        checks.push(Check::new(format!("strat@{t}"), st.value, format!(">= {}", 1.0 - 3.0 * st.std_error), st.value >= 1.0 - 3.0 * st.std_error));
    }
    Ok(checks)
}

fn small_ball(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let bm = CoefficientField::brownian(1);
    let ball = DomainSpec::interval(-1.0, 1.0)?;
    let sim = PathSimulator::from_parts(ball.clone(), bm.clone())?;
    let per_unit = 200;
    let base = PathConfig::new(3 * per_unit, 3.0, vec![0.0], 0);
    let surv = sim.survival_at(&base, cfg.paths(200_000), cfg.seed_for(4), &[per_unit, 2 * per_unit, 3 * per_unit])?;
    let mut checks = Vec::new();
    for (k, s) in surv.iter().enumerate() {
        let t = (k + 1) as f64;
        let exact = 4.0 / PI * (-PI * PI * t / 8.0).exp();
        checks.push(within(&format!("ratio@{t}"), s / exact, 1.0, 0.10));
    }
    let lambda = principal_eigenpair(&bm, &ball, 400)?.lambda1;
    let logs: Vec<f64> = surv.iter().map(|s| s.max(f64::MIN_POSITIVE).ln()).collect();
    let rate = -fit_line(&[1.0, 2.0, 3.0], &logs).ok_or_else(|| Error::InsufficientSamples("decay fit".into()))?.slope;
    checks.push(within("rate/lambda1", rate / lambda, 1.0, 0.03));
    let half = principal_eigenpair(&bm, &DomainSpec::interval(-0.5, 0.5)?, 400)?.lambda1;
    checks.push(within("eps_scaling", half * 0.25 / lambda, 1.0, 0.01));
    Ok(checks)
}

fn eigen() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let cases = [
        (DomainSpec::interval(-1.0, 1.0)?, PI * PI / 8.0, 400, "1d"),
        (DomainSpec::hyperrectangle(vec![0.0; 2], vec![1.0; 2])?, PI * PI, 80, "2d"),
    ];
    for (dom, exact, n, tag) in cases {
        let d = dom.dim();
        let coeffs = CoefficientField::brownian(d);
        let e = principal_eigenpair(&coeffs, &dom, n)?;
        checks.push(within(&format!("lambda/exact_{tag}"), e.lambda1 / exact, 1.0, 0.01));
        checks.push(Check::new(format!("min_psi_{tag}"), e.min_inside(), "> 0", e.min_inside() > 0.0));
        let tol = RESIDUAL_TOL * e.lambda1.max(1.0);
        checks.push(Check::new(format!("residual_{tag}"), e.residual, format!("< {tol:e}"), e.residual < tol));
        let c_fit = laplacian_calibration(d, n)?;
        let b = eigen_bounds_check(&e, &dom, &coeffs, c_fit, 1.05);
        checks.push(Check::new(format!("lambdaR2_{tag}"), b.lambda_r2, format!("<= {:.6}", b.bound), b.bound_ok));
    }
    Ok(checks)
}

fn comparison(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let scaled = CoefficientField::scaled_identity(1, 2.0);
    let drifted = CoefficientField::brownian(1).with_drift(Arc::new(|_, x: &[f64], out: &mut [f64]| out[0] = x[0].sin()), true, 1.0, (1.0, 1.0), 1.0);
    let mut checks = Vec::new();
    for (i, (coeffs, half, tag)) in [(scaled, 10.0, "sigma2"), (drifted, 6.0, "drift")].into_iter().enumerate() {
        let dom = DomainSpec::interval(-half, half)?;
        let sim = PathSimulator::from_parts(dom.clone(), coeffs.clone())?;
        let mut dc = DensityConfig::new(vec![0.25, 0.5, 1.0], cfg.paths(200_000));
        dc.bins_per_axis = 80;
        dc.n_steps = 100;
        let rep = empirical_density_check(&sim, &[0.0], &dc, cfg.seed_for(600 + i))?;
        let constants = AronsonConstants::from_density(&rep, 1);
        let spec = ProblemSpec::new(dom, coeffs, HurstParams::isotropic(0.8, 0.8, 1), BoundaryData::constant(1.0), Product::Stratonovich, 1.0);
        let budget = Budget::new(cfg.paths(100_000), 100, cfg.seed_for(610 + i));
        let cmp = comparison_check(&spec, &[0.0], ComparisonGrid { t: 1.0, n: 5 }, constants, &budget)?;
        checks.push(Check::new(format!("violations_{tag}"), cmp.violations as f64, "0", cmp.violations == 0));
    }
    Ok(checks)
}

fn moment_exponents(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let spec = brownian_spec(DomainSpec::interval(-6.0, 6.0)?, 0.8, Product::Stratonovich, 2.0);
    let sweep = MomentSweep { t_grid: vec![0.5, 1.0, 2.0], k_for_t: 2, k_grid: vec![2, 3, 4], t_for_k: 1.0 };
    let rep = moment_growth_fit(&spec, &[0.0], &sweep, &Budget::new(cfg.paths(4000), 50, cfg.seed_for(7)))?;
    Ok(vec![
        within("t_slope", rep.t_fit.slope, rep.theory.t_exp, 0.35),
        within("k_slope", rep.k_fit.slope, rep.theory.p_exp, 0.35),
        at_least("sandwich_r2", rep.sandwich_r2, 0.9),
    ])
}

fn holder(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let spec = brownian_spec(DomainSpec::interval(-4.0, 4.0)?, 0.9, Product::Stratonovich, 2.0);
    let hc = HolderConfig { spatial_offsets: vec![0.1, 0.2, 0.4], temporal_offsets: vec![0.02, 0.04, 0.08, 0.16], direction: vec![1.0] };
    let rep = holder_variance_curve(&spec, 1.0, &[0.0], &hc, &Budget::new(cfg.paths(300), 400, cfg.seed_for(8)))?;
    let fit = |f: Option<crate::stats::ExponentFit>| f.map(|f| f.slope).ok_or_else(|| Error::InsufficientSamples("curve fit failed".into()));
    Ok(vec![
        at_least("spatial_slope", fit(rep.spatial_fit)?, 2.0 * rep.theory.rho - 0.4),
        at_least("temporal_slope", fit(rep.temporal_fit)?, rep.theory.rho_prime()? - 0.4),
    ])
}

fn sensitivity(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let c = CoefficientField::brownian(1).with_drift(Arc::new(|t, _, out: &mut [f64]| out[0] = t.sin()), false, 0.0, (1.0, 1.0), 1.0);
    let spec = ProblemSpec::new(DomainSpec::interval(-5.0, 5.0)?, c, HurstParams::isotropic(0.8, 0.8, 1), BoundaryData::constant(1.0), Product::Skorohod, 2.0);
    let (_, fit) = sensitivity_curve(&spec, &[0.0], 1.0, &[0.01, 0.02, 0.04, 0.08], &Budget::new(cfg.paths(200), 400, cfg.seed_for(9)))?;
    let slope = fit.ok_or_else(|| Error::InsufficientSamples("sensitivity fit failed".into()))?.slope;
    Ok(vec![within("slope", slope, 2.0, 0.3)])
}

fn density(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let coeffs = CoefficientField::brownian(1).with_drift(Arc::new(|_, x: &[f64], out: &mut [f64]| out[0] = x[0].sin()), true, 1.0, (1.0, 1.0), 1.0);
    let sim = PathSimulator::from_parts(DomainSpec::interval(-2.0, 2.0)?, coeffs)?;
    let dc = DensityConfig::new(vec![0.25, 0.5, 1.0], cfg.paths(1_000_000));
    let rep = empirical_density_check(&sim, &[0.0], &dc, cfg.seed_for(10))?;
    Ok(vec![
        Check::new("c_certified", rep.c_certified, "finite, with c > 0", rep.certified),
        below("ck_tv", rep.ck_tv, 0.05),
        Check::new("mass_dev", (rep.mass - 1.0).abs(), format!("<= {:e}", 3.0 * rep.mass_se), (rep.mass - 1.0).abs() <= 3.0 * rep.mass_se + 1e-12),
    ])
}

/// Serialized outputs of a few small runs.
fn determinism_payload(seed: u64) -> Result<String> {
    let spec = brownian_spec(DomainSpec::interval(-1.0, 1.0)?, 0.8, Product::Stratonovich, 1.0);
    let budget = Budget::new(1500, 40, seed);
    let a = solve_point_conditional(&spec, 0.7, &[0.1], &budget)?;
    let b = moment_estimate(&spec, 0.7, &[0.1], 2, &budget)?;
    let m = MollifierParams::new(0.1, 0.1)?;
    let grid = SheetGrid::covering(&spec.domain, 1.0, &m, 40, 40)?;
    let field = smoothed_noise(&SheetSampler::new(grid, &spec.hurst)?.sample(seed), m)?;
    let c = solve_point_fixed_noise(&spec, 0.7, &[0.1], &field, "det", &budget)?;
    let dens = empirical_density_check(&PathSimulator::new(&spec)?, &[0.0], &DensityConfig::new(vec![0.5, 1.0], 4000), seed)?;
    let theory = theory_exponents(&spec.hurst, 1)?;
    serde_json::to_string(&(a.record(), b.record(), c.record(), dens, theory)).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn determinism(cfg: &AcceptanceConfig) -> Result<Vec<Check>> {
    let seed = cfg.seed_for(11);
    let in_pool = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| determinism_payload(seed))
    };
    let first = determinism_payload(seed)?;
    let again = determinism_payload(seed)?;
    let one = in_pool(1)?;
    let three = in_pool(3)?;
    Ok(vec![
        Check::new("rerun_identical", f64::from(u8::from(first == again)), "1", first == again),
        Check::new("workers_identical", f64::from(u8::from(one == three && one == first)), "1", one == three && one == first),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_resolve_by_number_and_key() {
        assert_eq!(resolve_ids(&["3".into(), "holder".into(), "3".into()]).unwrap(), vec![3, 8]);
        assert_eq!(resolve_ids(&[]).unwrap().len(), 11);
    }

    #[test]
    fn unknown_id_lists_valid_ones() {
        let err = resolve_ids(&["12".into()]).unwrap_err().to_string();
        assert!(err.contains("unknown criterion '12'"));
        assert!(err.contains("1 (fk-vs-fd)") && err.contains("11 (determinism)"));
    }

    #[test]
    fn manifest_is_ordered() {
        for (i, c) in MANIFEST.iter().enumerate() {
            assert_eq!(c.id, i + 1);
        }
    }

    #[test]
    fn reduced_budget_failure_is_inconclusive() {
        // a handful of paths cannot meet the moment tolerances
        let cfg = AcceptanceConfig { seed: 1, budget_scale: 0.001 };
        let r = run_criterion(7, &cfg);
        assert_ne!(r.verdict, Verdict::Fail, "{}", r.line());
    }

    #[test]
    fn deterministic_criteria_pass() {
        let cfg = AcceptanceConfig::default();
        for id in [5, 11] {
            let r = run_criterion(id, &cfg);
            assert_eq!(r.verdict, Verdict::Pass, "{}", r.line());
        }
    }
}
