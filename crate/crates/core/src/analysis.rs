//! Exponent extraction: closed-form regularity and intermittency exponents,
//! Monte Carlo Hölder curves of the potential `V`, moment growth fits, and
//! the coefficient-sensitivity curve of coupled paths.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{moment_estimate, Budget};
use crate::kernels::{cell_integral, midpoints, spatial_exponents, spatial_factor};
use crate::model::{validate_hurst, HurstParams, Product, ProblemSpec};
use crate::pathsim::{KilledPath, PathConfig, PathSimulator};
use crate::rng::derive_seed;
use crate::stats::{fit_line, fit_linear_model, ExponentFit, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryExponents {
    pub rho: f64,
    /// `min(rho, min_j (6H_j - 5)/(2H_j - 1))`, defined only when every
    /// spatial Hurst index exceeds 5/6.
    pub rho_prime: Option<f64>,
    pub t_exp: f64,
    pub p_exp: f64,
    pub min_h: f64,
}

impl TheoryExponents {
    pub fn rho_prime(&self) -> Result<f64> {
        self.rho_prime.ok_or(Error::HolderUnavailable { min_h: self.min_h })
    }
}

pub fn theory_exponents(h: &HurstParams, d: usize) -> Result<TheoryExponents> {
    validate_hurst(h, d)?;
    let sum: f64 = h.h_space.iter().sum();
    let df = d as f64;
    let rho = 2.0 * h.h0 + sum - df - 1.0;
    let min_h = h.h_space.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_prime =
        (min_h > 5.0 / 6.0).then(|| h.h_space.iter().map(|&hi| (6.0 * hi - 5.0) / (2.0 * hi - 1.0)).fold(rho, f64::min));
    let denom = sum + 1.0 - df;
    Ok(TheoryExponents { rho, rho_prime, t_exp: (2.0 * h.h0 + sum - df) / denom, p_exp: (sum + 2.0 - df) / denom, min_h })
}

/// Temporal weights indexed by the distance between forward-time cells.
struct Band {
    w: Vec<f64>,
}

impl Band {
    fn new(dt: f64, len: usize, h0: f64) -> Self {
        Self { w: (0..len).map(|k| cell_integral(0.0, dt, k as f64 * dt, (k + 1) as f64 * dt, h0)).collect() }
    }
}

/// `sum_{i,j} w(|p_i - q_j|) phi(m_i - n_j)` over the active cells of two
/// paths, with `p_i = na - 1 - i` the forward-time cell of path cell `i`.
fn cross_energy(ma: &[f64], na: usize, mb: &[f64], nb: usize, dim: usize, expo: &[f64], floor: f64, band: &Band) -> f64 {
    let (ra, rb) = (ma.len() / dim, mb.len() / dim);
    let shift = na as isize - nb as isize;
    let mut total = 0.0;
    let mut clipped = false;
    for i in 0..ra {
        let xa = &ma[i * dim..(i + 1) * dim];
        for j in 0..rb {
            let lag = (shift - (i as isize - j as isize)).unsigned_abs();
            total += band.w[lag] * spatial_factor(xa, &mb[j * dim..(j + 1) * dim], expo, floor, &mut clipped);
        }
    }
    total
}

/// `cross_energy(m, n, m, n)` using the symmetry of the summand.
fn self_energy(m: &[f64], dim: usize, expo: &[f64], floor: f64, band: &Band) -> f64 {
    let r = m.len() / dim;
    let mut clipped = false;
    let mut total = 0.0;
    for i in 0..r {
        let xa = &m[i * dim..(i + 1) * dim];
        let mut acc = 0.5 * band.w[0] * spatial_factor(xa, xa, expo, floor, &mut clipped);
        for j in i + 1..r {
            acc += band.w[j - i] * spatial_factor(xa, &m[j * dim..(j + 1) * dim], expo, floor, &mut clipped);
        }
        total += 2.0 * acc;
    }
    total
}

/// `alpha (E_aa + E_bb - 2 E_ab)`: the conditional second moment of
/// `V_a - V_b` given two coupled paths.
fn difference_energy(a: &KilledPath, b: &KilledPath, hurst: &HurstParams, floor: f64, band: &Band) -> f64 {
    let expo = spatial_exponents(hurst);
    let (ma, mb) = (midpoints(a), midpoints(b));
    let d = a.dim;
    if a.n_steps == b.n_steps && ma == mb {
        return 0.0;
    }
    let eaa = self_energy(&ma, d, &expo, floor, band);
    let ebb = self_energy(&mb, d, &expo, floor, band);
    let eab = cross_energy(&ma, a.n_steps, &mb, b.n_steps, d, &expo, floor, band);
    hurst.alpha() * (eaa + ebb - 2.0 * eab)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Offset actually used (temporal offsets are rounded to the time grid).
    pub offset: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub spatial: Vec<CurvePoint>,
    pub temporal: Vec<CurvePoint>,
    pub spatial_fit: Option<ExponentFit>,
    pub temporal_fit: Option<ExponentFit>,
    pub theory: TheoryExponents,
}

/// Spatial offsets move `x` along `direction`; temporal offsets compare `t`
/// with `t - offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderConfig {
    pub spatial_offsets: Vec<f64>,
    pub temporal_offsets: Vec<f64>,
    pub direction: Vec<f64>,
}

fn fit_curve(points: &[CurvePoint]) -> Option<ExponentFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.offset > 0.0 && p.mean > 0.0).map(|p| (p.offset.ln(), p.mean.ln())).unzip();
    if x.len() < 2 {
        return None;
    }
    fit_line(&x, &y)
}

/// `E|V(t, x) - V(s, y)|^2` along spatial and temporal offsets, from the
/// conditional identity over coupled paths (shared Brownian increments).
pub fn holder_variance_curve(spec: &ProblemSpec, t: f64, x: &[f64], cfg: &HolderConfig, budget: &Budget) -> Result<HolderReport> {
    spec.validate()?;
    let theory = theory_exponents(&spec.hurst, spec.dim())?;
    if budget.n_paths < 2 {
        return Err(Error::InsufficientSamples(format!("need at least 2 paths, got {}", budget.n_paths)));
    }
    if cfg.direction.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: cfg.direction.len() });
    }
    let norm = cfg.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir: Vec<f64> = cfg.direction.iter().map(|v| v / norm).collect();
    let shifted = |delta: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, u)| a + delta * u).collect() };
    for &delta in &cfg.spatial_offsets {
        if spec.domain.signed_distance(&shifted(delta)) <= 0.0 {
            return Err(Error::StartOutsideDomain);
        }
    }
    if spec.domain.signed_distance(x) <= 0.0 {
        return Err(Error::StartOutsideDomain);
    }
    let sim = PathSimulator::new(spec)?;
    let dt = t / budget.n_steps as f64;
    let floor = budget.floor_factor * dt.sqrt();
    let band = Band::new(dt, 2 * budget.n_steps + 2, spec.hurst.h0);
    let base = PathConfig::new(budget.n_steps, t, x.to_vec(), budget.seed).with_detection(budget.exit_detection);

    let curve = |f: &(dyn Fn(u64) -> Result<f64> + Sync)| -> Result<(f64, f64)> {
        use rayon::prelude::*;
        let v: Vec<f64> = (0..budget.n_paths as u64).into_par_iter().map(f).collect::<Result<_>>()?;
        let s = RunningStats::from_slice(&v);
        Ok((s.mean, s.std_error()))
    };

    let mut spatial = Vec::new();
    for &delta in &cfg.spatial_offsets {
        let y = shifted(delta);
        let (mean, se) = curve(&|j| {
            let c = base.with_seed(derive_seed(budget.seed, j));
            let a = sim.simulate(&c)?;
            let mut cy = c.clone();
            cy.x0 = y.clone();
            let b = sim.simulate(&cy)?;
            Ok(difference_energy(&a, &b, &spec.hurst, floor, &band))
        })?;
        spatial.push(CurvePoint { offset: delta.abs(), mean, se });
    }
    let mut temporal = Vec::new();
    for &h in &cfg.temporal_offsets {
        let k = (h / dt).round() as usize;
        if k >= budget.n_steps - 1 {
            return Err(Error::InvalidConfig(format!("temporal offset {h} leaves fewer than two steps")));
        }
        let s = t - k as f64 * dt;
        let (mean, se) = curve(&|j| {
            let c = base.with_seed(derive_seed(budget.seed, j));
            let (a, b) = sim.simulate_coupled(&c, t, s)?;
            Ok(difference_energy(&a, &b, &spec.hurst, floor, &band))
        })?;
        temporal.push(CurvePoint { offset: k as f64 * dt, mean, se });
    }
    let spatial_fit = fit_curve(&spatial);
    let temporal_fit = fit_curve(&temporal);
    Ok(HolderReport { spatial, temporal, spatial_fit, temporal_fit, theory })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub k: usize,
    /// `log E[u^k]` from the median of means.
    pub log_moment: f64,
    pub mean: f64,
    pub se: f64,
    pub survival: f64,
    /// Whether the point entered the fits (survival at least 1/2).
    pub used: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentGrowthReport {
    pub points: Vec<MomentPoint>,
    pub t_fit: ExponentFit,
    pub k_fit: ExponentFit,
    /// `r^2` of `log log E u^k = c + a log t + b log k` over all points.
    pub sandwich_r2: f64,
    pub theory: TheoryExponents,
}

/// Where the moment sweep runs: `k_for_t` replicas over `t_grid`, and
/// `k_grid` at time `t_for_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSweep {
    pub t_grid: Vec<f64>,
    pub k_for_t: usize,
    pub k_grid: Vec<usize>,
    pub t_for_k: f64,
}

/// Fits the growth of `log log E[u^k]` in `log t` and in `log k`
/// (Stratonovich, data bounded below by a positive constant).
pub fn moment_growth_fit(spec: &ProblemSpec, x: &[f64], sweep: &MomentSweep, budget: &Budget) -> Result<MomentGrowthReport> {
    if spec.product != Product::Stratonovich {
        return Err(Error::InvalidConfig("moment growth fits need the Stratonovich product".into()));
    }
    let theory = theory_exponents(&spec.hurst, spec.dim())?;
    let mut cache: Vec<MomentPoint> = Vec::new();
    let mut point = |t: f64, k: usize| -> Result<MomentPoint> {
        if let Some(p) = cache.iter().find(|p| p.t == t && p.k == k) {
            return Ok(p.clone());
        }
        let e = moment_estimate(spec, t, x, k, budget)?;
        let m = e.median_of_means.unwrap_or(e.value);
        if !(m > 1.0) {
            return Err(Error::NonPositiveEstimate(m.ln()));
        }
        let p = MomentPoint { t, k, log_moment: m.ln(), mean: e.value, se: e.std_error, survival: e.survival, used: e.survival >= 0.5 };
        cache.push(p.clone());
        Ok(p)
    };
    let t_pts: Vec<MomentPoint> = sweep.t_grid.iter().map(|&t| point(t, sweep.k_for_t)).collect::<Result<_>>()?;
    let k_pts: Vec<MomentPoint> = sweep.k_grid.iter().map(|&k| point(sweep.t_for_k, k)).collect::<Result<_>>()?;
    let fit = |pts: &[MomentPoint], reg: &dyn Fn(&MomentPoint) -> f64| -> Result<ExponentFit> {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().filter(|p| p.used).map(|p| (reg(p), p.log_moment.ln())).unzip();
        fit_line(&x, &y).ok_or_else(|| Error::InsufficientSamples("fewer than two usable sweep points".into()))
    };
    let t_fit = fit(&t_pts, &|p| p.t.ln())?;
    let k_fit = fit(&k_pts, &|p| (p.k as f64).ln())?;
    let points = cache;
    let used: Vec<&MomentPoint> = points.iter().filter(|p| p.used).collect();
    let cols = vec![used.iter().map(|p| p.t.ln()).collect::<Vec<_>>(), used.iter().map(|p| (p.k as f64).ln()).collect()];
    let y: Vec<f64> = used.iter().map(|p| p.log_moment.ln()).collect();
    let sandwich_r2 = fit_linear_model(&cols, &y).map_or(0.0, |(_, r2)| r2);
    Ok(MomentGrowthReport { points, t_fit, k_fit, sandwich_r2, theory })
}

/// `E sup_{s <= min(t1, t2)} |X^{t1}_s - X^{t2}_s|^2` for paths sharing
/// Brownian increments, against `|t1 - t2|`.
pub fn sensitivity_curve(spec: &ProblemSpec, x: &[f64], t1: f64, gaps: &[f64], budget: &Budget) -> Result<(Vec<CurvePoint>, Option<ExponentFit>)> {
    let sim = PathSimulator::new(spec)?;
    let base = PathConfig::new(budget.n_steps, t1, x.to_vec(), budget.seed).unkilled();
    let mut pts = Vec::new();
    for &g in gaps {
        let t2 = t1 - g;
        if !(t2 > 0.0) {
            return Err(Error::InvalidConfig(format!("gap {g} must be below t1 = {t1}")));
        }
        use rayon::prelude::*;
        let v: Vec<f64> = (0..budget.n_paths as u64)
            .into_par_iter()
            .map(|j| {
                let (a, b) = sim.simulate_coupled(&base.with_seed(derive_seed(budget.seed, j)), t1, t2)?;
                let n = a.len().min(b.len());
                Ok((0..n).map(|i| a.state(i).iter().zip(b.state(i)).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        let s = RunningStats::from_slice(&v);
        pts.push(CurvePoint { offset: g, mean: s.mean, se: s.std_error() });
    }
    let fit = fit_curve(&pts);
    Ok((pts, fit))
}
