//! Feynman–Kac estimators: closed-form conditional mean, pathwise estimator
//! for a fixed noise realization, replica moments, and the Brownian
//! comparison check on unkilled paths.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{midpoints, pair_energy_midpoints, self_energy_midpoints, KernelWeights, DEFAULT_FLOOR_FACTOR};
use crate::model::{short_digest, BudgetConfig, Product, ProblemSpec};
use crate::noisefield::{pathwise_v_regularized, NoiseField};
use crate::pathsim::{DensityReport, ExitDetection, KilledPath, PathConfig, PathSimulator};
use crate::rng::{derive_seed, derive_seed2};
pub use crate::rng::DEFAULT_SEED;
use crate::special::gaussian_abs_moment;
use crate::stats::{jackknife_log_mean, median_of_means, RunningStats};

/// Paths per block when accumulating; blocks are merged in index order so
/// results do not depend on the worker count.
const BLOCK: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub exit_detection: ExitDetection,
    pub floor_factor: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { n_paths: 10_000, n_steps: 200, seed: DEFAULT_SEED, exit_detection: ExitDetection::BridgeCorrected, floor_factor: DEFAULT_FLOOR_FACTOR }
    }
}

impl Budget {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self { n_paths, n_steps, seed, ..Self::default() }
    }

    /// Spec budget entries over the defaults.
    pub fn from_config(c: &BudgetConfig) -> Self {
        let d = Self::default();
        Self {
            n_paths: c.paths.unwrap_or(d.n_paths),
            n_steps: c.steps.unwrap_or(d.n_steps),
            seed: c.seed.unwrap_or(d.seed),
            exit_detection: c.exit_detection.unwrap_or(d.exit_detection),
            floor_factor: c.floor_factor.unwrap_or(d.floor_factor),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InsufficientSamples(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidConfig("n_steps must be at least 2".into()));
        }
        if !(self.floor_factor > 0.0) {
            return Err(Error::InvalidConfig("floor factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimateMode {
    PathwiseFixedNoise,
    ConditionalMean,
    ReplicaMoment { k: usize },
}

impl EstimateMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PathwiseFixedNoise => "pathwise_fixed_noise",
            Self::ConditionalMean => "conditional_mean",
            Self::ReplicaMoment { .. } => "replica_moment",
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::ReplicaMoment { k } => *k,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FKEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub mode: EstimateMode,
    pub product: Product,
    pub config_digest: String,
    pub t: f64,
    pub x: Vec<f64>,
    /// Fraction of (replica) paths that survived to `t`.
    pub survival: f64,
    /// Replica estimates only: median of means and jackknifed log-mean.
    pub median_of_means: Option<f64>,
    pub log_value: Option<f64>,
    pub log_std_error: Option<f64>,
}

/// Flat record `{mode, product, t, x, k, value, se, n, digest}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FKRecord {
    pub mode: String,
    pub product: Product,
    pub t: f64,
    pub x: Vec<f64>,
    pub k: usize,
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub digest: String,
}

impl FKEstimate {
    pub fn record(&self) -> FKRecord {
        FKRecord {
            mode: self.mode.name().into(),
            product: self.product,
            t: self.t,
            x: self.x.clone(),
            k: self.mode.k(),
            value: self.value,
            se: self.std_error,
            n: self.n_paths,
            digest: self.config_digest.clone(),
        }
    }

    pub const CSV_HEADER: &'static str = "mode,product,t,x,k,value,se,n,digest";

    pub fn csv_row(&self) -> String {
        let x: Vec<String> = self.x.iter().map(|v| format!("{v}")).collect();
        format!(
            "{},{},{},{},{},{:.12e},{:.6e},{},{}",
            self.mode.name(),
            self.product,
            self.t,
            x.join(" "),
            self.mode.k(),
            self.value,
            self.std_error,
            self.n_paths,
            self.config_digest
        )
    }
}

fn digest_for(spec: &ProblemSpec, mode: EstimateMode, t: f64, x: &[f64], budget: &Budget, extra: &str) -> String {
    let src = spec.source_digest.as_deref().unwrap_or("programmatic");
    let body = serde_json::json!({
        "source": src, "mode": mode, "product": spec.product, "t": t, "x": x, "budget": budget, "extra": extra,
    });
    short_digest(body.to_string().as_bytes())
}

fn check_point(spec: &ProblemSpec, t: f64, x: &[f64]) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x.len() });
    }
    if !(t > 0.0) || t > spec.horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!("t = {t} outside (0, {}]", spec.horizon)));
    }
    if spec.domain.signed_distance(x) <= spec.domain.default_tol() {
        return Err(Error::StartOutsideDomain);
    }
    Ok(())
}

/// Applies `f` to every path index in `range`, block by block; per-block
/// results are returned in index order.
fn map_blocks<T: Send, F>(range: Range<u64>, f: F) -> Result<Vec<T>>
where
    F: Fn(Range<u64>) -> Result<T> + Sync,
{
    let starts: Vec<u64> = range.clone().step_by(BLOCK as usize).collect();
    starts.into_par_iter().map(|s| f(s..(s + BLOCK).min(range.end))).collect()
}

/// Per-path samples and survival flags, in path order.
fn collect_samples<F>(range: Range<u64>, f: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(u64) -> Result<(f64, bool)> + Sync,
{
    let blocks = map_blocks(range, |r| r.map(&f).collect::<Result<Vec<_>>>())?;
    let mut values = Vec::new();
    let mut alive = 0;
    for b in blocks {
        for (v, s) in b {
            values.push(v);
            alive += usize::from(s);
        }
    }
    Ok((values, alive))
}

struct Prepared {
    sim: PathSimulator,
    base: PathConfig,
    weights: KernelWeights,
}

fn prepare(spec: &ProblemSpec, t: f64, x: &[f64], budget: &Budget) -> Result<Prepared> {
    budget.validate()?;
    spec.validate()?;
    check_point(spec, t, x)?;
    let sim = PathSimulator::new(spec)?;
    let base = PathConfig::new(budget.n_steps, t, x.to_vec(), budget.seed).with_detection(budget.exit_detection);
    let weights = KernelWeights::uniform(t, budget.n_steps, spec.hurst.h0)?.with_floor_factor(budget.floor_factor);
    Ok(Prepared { sim, base, weights })
}

/// Per-path weights `h(t∧τ, X_{t∧τ}) exp{(alpha/2) E(X, X)}` (Stratonovich)
/// or `h(t∧τ, X_{t∧τ})` (Skorohod) for path seeds `derive_seed(seed, j)`,
/// `j in paths`.
pub fn conditional_samples(spec: &ProblemSpec, t: f64, x: &[f64], budget: &Budget, paths: Range<u64>) -> Result<(Vec<f64>, usize)> {
    let p = prepare(spec, t, x, budget)?;
    let half_alpha = 0.5 * spec.hurst.alpha();
    collect_samples(paths, |j| {
        let path = p.sim.simulate(&p.base.with_seed(derive_seed(budget.seed, j)))?;
        let h = path.terminal_value(spec);
        let w = match spec.product {
            Product::Skorohod => h,
            Product::Stratonovich => {
                let e = self_energy_midpoints(&midpoints(&path), path.dim, &spec.hurst, &p.weights).value;
                h * (half_alpha * e).exp()
            }
        };
        Ok((w, path.survived()))
    })
}

fn estimate_from(values: &[f64], alive: usize, mode: EstimateMode, spec: &ProblemSpec, t: f64, x: &[f64], digest: String) -> Result<FKEstimate> {
    let stats = RunningStats::from_slice(values);
    if !stats.mean.is_finite() {
        return Err(Error::NonPositiveEstimate(stats.mean));
    }
    Ok(FKEstimate {
        value: stats.mean,
        std_error: stats.std_error(),
        n_paths: values.len(),
        mode,
        product: spec.product,
        config_digest: digest,
        t,
        x: x.to_vec(),
        survival: alive as f64 / values.len() as f64,
        median_of_means: None,
        log_value: None,
        log_std_error: None,
    })
}

/// First moment `E[u(t, x)]` with the noise integrated out in closed form.
pub fn solve_point_conditional(spec: &ProblemSpec, t: f64, x: &[f64], budget: &Budget) -> Result<FKEstimate> {
    let mode = EstimateMode::ConditionalMean;
    let (values, alive) = conditional_samples(spec, t, x, budget, 0..budget.n_paths as u64)?;
    estimate_from(&values, alive, mode, spec, t, x, digest_for(spec, mode, t, x, budget, ""))
}

/// Per-path weights `h exp{V - [Skorohod] (alpha/2) E(X, X)}` for a fixed
/// smoothed noise field.
pub fn fixed_noise_samples(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    field: &dyn NoiseField,
    budget: &Budget,
    paths: Range<u64>,
) -> Result<(Vec<f64>, usize)> {
    let p = prepare(spec, t, x, budget)?;
    let half_alpha = 0.5 * spec.hurst.alpha();
    collect_samples(paths, |j| {
        let path = p.sim.simulate(&p.base.with_seed(derive_seed(budget.seed, j)))?;
        let mut expo = pathwise_v_regularized(&path, field, t)?;
        if spec.product == Product::Skorohod {
            expo -= half_alpha * self_energy_midpoints(&midpoints(&path), path.dim, &spec.hurst, &p.weights).value;
        }
        Ok((path.terminal_value(spec) * expo.exp(), path.survived()))
    })
}

/// `u^{eps,delta}(t, x)` for one noise realization. `field_tag` identifies
/// the realization in the digest (for example the sheet seed and mollifier).
pub fn solve_point_fixed_noise(spec: &ProblemSpec, t: f64, x: &[f64], field: &dyn NoiseField, field_tag: &str, budget: &Budget) -> Result<FKEstimate> {
    let mode = EstimateMode::PathwiseFixedNoise;
    let (values, alive) = fixed_noise_samples(spec, t, x, field, budget, 0..budget.n_paths as u64)?;
    estimate_from(&values, alive, mode, spec, t, x, digest_for(spec, mode, t, x, budget, field_tag))
}

/// Log of the replica weight for one batch, and whether every replica
/// survived.
fn replica_log_weight(spec: &ProblemSpec, p: &Prepared, k: usize, batch: u64, seed: u64) -> Result<(f64, bool, f64)> {
    let paths: Vec<KilledPath> = (0..k as u64).map(|j| p.sim.simulate(&p.base.with_seed(derive_seed2(seed, batch, j)))).collect::<Result<_>>()?;
    let mids: Vec<Vec<f64>> = paths.iter().map(midpoints).collect();
    let d = spec.dim();
    let mut energy = 0.0;
    for i in 0..k {
        if spec.product == Product::Stratonovich {
            energy += self_energy_midpoints(&mids[i], d, &spec.hurst, &p.weights).value;
        }
        for j in i + 1..k {
            energy += 2.0 * pair_energy_midpoints(&mids[i], &mids[j], d, &spec.hurst, &p.weights).value;
        }
    }
    let h: f64 = paths.iter().map(|q| q.terminal_value(spec)).product();
    let all_alive = paths.iter().all(KilledPath::survived);
    Ok((0.5 * spec.hurst.alpha() * energy, all_alive, h))
}

/// `E[u(t, x)^k]` from `n_batches = budget.n_paths` batches of `k`
/// independent replicas. The value is the plain mean; the median of means
/// and the jackknifed log-mean are reported alongside.
pub fn moment_estimate(spec: &ProblemSpec, t: f64, x: &[f64], k: usize, budget: &Budget) -> Result<FKEstimate> {
    if k == 0 {
        return Err(Error::InvalidConfig("moment order k must be at least 1".into()));
    }
    let p = prepare(spec, t, x, budget)?;
    let (values, alive) = collect_samples(0..budget.n_paths as u64, |b| {
        let (lw, alive, h) = replica_log_weight(spec, &p, k, b, budget.seed)?;
        Ok((h * lw.exp(), alive))
    })?;
    let mode = EstimateMode::ReplicaMoment { k };
    let mut est = estimate_from(&values, alive, mode, spec, t, x, digest_for(spec, mode, t, x, budget, ""))?;
    let groups = (values.len() / 50).clamp(2, 20);
    est.median_of_means = Some(median_of_means(&values, groups));
    if values.iter().all(|&v| v > 0.0) {
        let (lv, lse) = jackknife_log_mean(&values, groups);
        est.log_value = Some(lv);
        est.log_std_error = Some(lse);
    }
    Ok(est)
}

/// Gaussian comparison constants: the envelope `kappa1 N(0, kappa2 s I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AronsonConstants {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl AronsonConstants {
    /// From a certified envelope `C s^{-d/2} exp(-c r^2 / 2s)`.
    pub fn from_density(report: &DensityReport, d: usize) -> Self {
        let kappa2 = 1.0 / report.c_exp;
        let kappa1 = report.c_certified * (2.0 * std::f64::consts::PI * kappa2).powf(0.5 * d as f64);
        Self { kappa1, kappa2 }
    }
}

/// Staggered `(s, r)` grid: `s_i = i t / n`, `r_j = (j - 1/2) t / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonGrid {
    pub t: f64,
    pub n: usize,
}

impl ComparisonGrid {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let h = self.t / self.n as f64;
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 1..=self.n {
            for j in 1..=self.n {
                out.push((i as f64 * h, (j as f64 - 0.5) * h));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub s: f64,
    pub r: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub constants: AronsonConstants,
    pub points: Vec<ComparisonPoint>,
    pub violations: usize,
    pub n_paths: usize,
}

/// Checks `E prod_m |X^m_s - X^m_r|^{2H_m - 2} <= kappa1^2 E[same for
/// B_{kappa2 .}]` at every grid point, on unkilled paths from `x`.
pub fn comparison_check(spec: &ProblemSpec, x: &[f64], grid: ComparisonGrid, constants: AronsonConstants, budget: &Budget) -> Result<ComparisonReport> {
    budget.validate()?;
    if grid.n == 0 || budget.n_steps % (2 * grid.n) != 0 {
        return Err(Error::InvalidConfig(format!("n_steps = {} must be a multiple of 2n = {}", budget.n_steps, 2 * grid.n)));
    }
    if budget.n_paths < 100 {
        return Err(Error::InsufficientSamples(format!("comparison needs at least 100 paths, got {}", budget.n_paths)));
    }
    let sim = PathSimulator::new(spec)?;
    let base = PathConfig::new(budget.n_steps, grid.t, x.to_vec(), budget.seed).unkilled();
    let expo: Vec<f64> = spec.hurst.h_space.iter().map(|h| 2.0 * h - 2.0).collect();
    let stride = budget.n_steps / (2 * grid.n);
    let pts = grid.points();
    let idx: Vec<(usize, usize)> = pts
        .iter()
        .map(|&(s, r)| (((s / grid.t) * budget.n_steps as f64).round() as usize, ((r / grid.t) * budget.n_steps as f64).round() as usize))
        .collect();
    debug_assert!(idx.iter().all(|&(a, b)| a % stride == 0 && b % stride == 0));
    let d = spec.dim();
    let blocks = map_blocks(0..budget.n_paths as u64, |range| {
        let mut acc = vec![RunningStats::default(); pts.len()];
        for j in range {
            let path = sim.simulate(&base.with_seed(derive_seed(budget.seed, j)))?;
            for (a, &(is, ir)) in acc.iter_mut().zip(&idx) {
                let (xs, xr) = (path.state(is), path.state(ir));
                let f: f64 = (0..d).map(|m| (xs[m] - xr[m]).abs().powf(expo[m])).product();
                a.push(f);
            }
        }
        Ok(acc)
    })?;
    let mut acc = vec![RunningStats::default(); pts.len()];
    for b in blocks {
        for (a, s) in acc.iter_mut().zip(b) {
            *a = a.merge(&s);
        }
    }
    let k1sq = constants.kappa1 * constants.kappa1;
    let points: Vec<ComparisonPoint> = pts
        .iter()
        .zip(&acc)
        .map(|(&(s, r), st)| {
            let v = constants.kappa2 * (s - r).abs();
            let rhs = k1sq * expo.iter().map(|&p| gaussian_abs_moment(v, p)).product::<f64>();
            let se = st.std_error();
            ComparisonPoint { s, r, lhs: st.mean, lhs_se: se, rhs, violated: st.mean - rhs > 3.0 * se }
        })
        .collect();
    let violations = points.iter().filter(|p| p.violated).count();
    Ok(ComparisonReport { constants, points, violations, n_paths: budget.n_paths })
}
