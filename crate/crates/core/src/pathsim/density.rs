//! Histogram checks on the killed transition density: a fitted Gaussian
//! envelope `C s^{-d/2} exp(-c |y - x|^2 / 2s)`, Chapman–Kolmogorov through
//! an intermediate time, and mass conservation.

use rayon::prelude::*;
use serde::Serialize;

use super::{PathConfig, PathSimulator};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derive_seed2};
use crate::stats::fit_line_weighted;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityConfig {
    /// Snapshot times, increasing; the last one is `s`.
    pub times: Vec<f64>,
    /// Intermediate time `r` of the Chapman–Kolmogorov check, `0 < r < s`.
    pub ck_time: f64,
    pub bins_per_axis: usize,
    /// Paths for the direct histograms; the same number again is spread
    /// over the restarts from the bins at time `r`.
    pub n_paths: usize,
    /// Euler steps over `[0, s]`.
    pub n_steps: usize,
    /// Minimum count for a bin to enter the envelope fit.
    pub min_count: u64,
}

impl DensityConfig {
    pub fn new(times: Vec<f64>, n_paths: usize) -> Self {
        let s = times.last().copied().unwrap_or(1.0);
        Self { times, ck_time: 0.5 * s, bins_per_axis: 40, n_paths, n_steps: 200, min_count: 20 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    /// Count-weighted least-squares `(C, c)` of the log-histogram against the envelope.
    pub c_fit: f64,
    pub c_exp: f64,
    /// Smallest `C >= c_fit` such that the envelope with rate `c_exp` dominates
    /// every bin's lower 3-sigma bound.
    pub c_certified: f64,
    pub certified: bool,
    /// Bins whose lower bound exceeds the envelope at the fitted `C`.
    pub violations_at_fit: usize,
    pub bins_used: usize,
    pub fit_r2: f64,
    pub ck_tv: f64,
    /// Survivor mass plus exited fraction at the last snapshot.
    pub mass: f64,
    pub mass_se: f64,
    pub survival: Vec<f64>,
}

struct Binning {
    lo: Vec<f64>,
    width: Vec<f64>,
    per_axis: usize,
}

impl Binning {
    fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for m in 0..x.len() {
            let k = ((x[m] - self.lo[m]) / self.width[m]).floor();
            let k = (k.max(0.0) as usize).min(self.per_axis - 1);
            idx = idx * self.per_axis + k;
        }
        idx
    }

    fn center(&self, mut idx: usize) -> Vec<f64> {
        let d = self.lo.len();
        let mut c = vec![0.0; d];
        for m in (0..d).rev() {
            let k = idx % self.per_axis;
            idx /= self.per_axis;
            c[m] = self.lo[m] + (k as f64 + 0.5) * self.width[m];
        }
        c
    }

    /// Squared distance from `x` to the nearest point of bin `idx`.
    fn min_dist2(&self, idx: usize, x: &[f64]) -> f64 {
        let c = self.center(idx);
        (0..x.len())
            .map(|m| {
                let gap = ((x[m] - c[m]).abs() - 0.5 * self.width[m]).max(0.0);
                gap * gap
            })
            .sum()
    }

    fn volume(&self) -> f64 {
        self.width.iter().product()
    }

    fn count(&self) -> usize {
        self.per_axis.pow(self.lo.len() as u32)
    }
}

/// Bin of the state at each snapshot index, `None` once killed.
fn snapshot_bins(sim: &PathSimulator, cfg: &PathConfig, s_offset: f64, snaps: &[usize], bins: &Binning) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; snaps.len()];
    let mut next = 0;
    let exit = sim.walk(cfg, s_offset, |i, x| {
        while next < snaps.len() && snaps[next] == i {
            out[next] = Some(bins.index(x));
            next += 1;
        }
    })?;
    if let Some(e) = exit {
        for (k, &i) in snaps.iter().enumerate() {
            if i >= e.index {
                out[k] = None;
            }
        }
    }
    Ok(out)
}

pub fn empirical_density_check(sim: &PathSimulator, x0: &[f64], cfg: &DensityConfig, seed: u64) -> Result<DensityReport> {
    let s = *cfg.times.last().ok_or_else(|| Error::InvalidConfig("no snapshot times".into()))?;
    if cfg.times.windows(2).any(|w| w[1] <= w[0]) || cfg.times[0] <= 0.0 {
        return Err(Error::InvalidConfig("snapshot times must be positive and increasing".into()));
    }
    if !(cfg.ck_time > 0.0 && cfg.ck_time < s) {
        return Err(Error::InvalidConfig("Chapman–Kolmogorov time must lie in (0, s)".into()));
    }
    let d = sim.dim();
    let (lo, hi) = sim.domain().bounding_box();
    let per_axis = cfg.bins_per_axis.max(2);
    let bins = Binning { width: (0..d).map(|m| (hi[m] - lo[m]) / per_axis as f64).collect(), lo, per_axis };
    let nb = bins.count();
    let dt = s / cfg.n_steps as f64;
    let to_index = |t: f64| ((t / dt).round() as usize).clamp(1, cfg.n_steps);

    // snapshot indices: the envelope times plus r
    let mut snaps: Vec<usize> = cfg.times.iter().map(|&t| to_index(t)).collect();
    let r_idx = to_index(cfg.ck_time);
    snaps.push(r_idx);
    let mut order: Vec<usize> = (0..snaps.len()).collect();
    order.sort_by_key(|&k| snaps[k]);
    let sorted: Vec<usize> = order.iter().map(|&k| snaps[k]).collect();

    let base = PathConfig::new(cfg.n_steps, s, x0.to_vec(), 0);
    let n1 = cfg.n_paths;
    let per_path: Vec<Vec<Option<usize>>> = (0..n1 as u64)
        .into_par_iter()
        .map(|j| snapshot_bins(sim, &base.with_seed(derive_seed(seed, j)), 0.0, &sorted, &bins))
        .collect::<Result<_>>()?;

    // counts[snapshot][bin] in the original snapshot order
    let mut counts = vec![vec![0u64; nb]; snaps.len()];
    for bins_of_path in &per_path {
        for (pos, &k) in order.iter().enumerate() {
            if let Some(b) = bins_of_path[pos] {
                counts[k][b] += 1;
            }
        }
    }
    let last = cfg.times.len() - 1;
    let occupied = counts[last].iter().filter(|&&c| c > 0).count();
    let survivors: u64 = counts[last].iter().sum();
    if occupied == 0 || (survivors as f64 / occupied as f64) < cfg.min_count as f64 {
        return Err(Error::InsufficientSamples(format!(
            "{survivors} survivors over {occupied} occupied bins; need an average of {}",
            cfg.min_count
        )));
    }

    let survival: Vec<f64> = cfg.times.iter().enumerate().map(|(k, _)| counts[k].iter().sum::<u64>() as f64 / n1 as f64).collect();
    let p_surv = survival[last];
    let mass = p_surv + (n1 as u64 - survivors) as f64 / n1 as f64;
    let mass_se = (p_surv * (1.0 - p_surv) / n1 as f64).sqrt();

    // envelope fit: ln p + (d/2) ln s = ln C - c |y - x0|^2 / 2s
    let vol = bins.volume();
    // log-count variance is about 1/count, so bins are weighted by count
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (k, &t) in cfg.times.iter().enumerate() {
        for (b, &c) in counts[k].iter().enumerate() {
            if c >= cfg.min_count {
                let p = c as f64 / (n1 as f64 * vol);
                let ctr = bins.center(b);
                let r2: f64 = ctr.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
                xs.push(r2 / (2.0 * t));
                ys.push(p.ln() + 0.5 * d as f64 * t.ln());
                ws.push(c as f64);
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientSamples("fewer than three bins pass the count threshold".into()));
    }
    let fit = fit_line_weighted(&xs, &ys, &ws).ok_or_else(|| Error::InsufficientSamples("envelope fit is degenerate".into()))?;
    let (c_fit, c_exp, fit_r2) = (fit.intercept.exp(), -fit.slope, fit.r2);

    let mut c_needed: f64 = 0.0;
    let mut violations_at_fit = 0;
    for (k, &t) in cfg.times.iter().enumerate() {
        for (b, &c) in counts[k].iter().enumerate() {
            if c == 0 {
                continue;
            }
            let q = c as f64 / n1 as f64;
            let lower = (q - 3.0 * (q * (1.0 - q) / n1 as f64).sqrt()).max(0.0) / vol;
            if lower == 0.0 {
                continue;
            }
            let shape = t.powf(-0.5 * d as f64) * (-c_exp.max(0.0) * bins.min_dist2(b, x0) / (2.0 * t)).exp();
            if lower > c_fit * shape {
                violations_at_fit += 1;
            }
            c_needed = c_needed.max(lower / shape);
        }
    }
    let c_certified = c_fit.max(c_needed);
    let certified = c_exp > 0.0 && c_certified.is_finite();

    // Chapman–Kolmogorov: restart equal batches from every occupied bin at r
    let r_pos = snaps.len() - 1;
    let r_time = r_idx as f64 * dt;
    let starts: Vec<usize> = (0..nb).filter(|&b| counts[r_pos][b] > 0).collect();
    let per_start = (cfg.n_paths / starts.len().max(1)).max(1);
    let tail_steps = cfg.n_steps - r_idx;
    if tail_steps < 2 {
        return Err(Error::InvalidConfig("Chapman–Kolmogorov time too close to s".into()));
    }
    let transitions: Vec<Vec<u64>> = starts
        .par_iter()
        .map(|&b| -> Result<Vec<u64>> {
            let start = bins.center(b);
            let mut row = vec![0u64; nb];
            let mut cfg_b = PathConfig::new(tail_steps, s, start.clone(), 0);
            // shifted horizon keeps the coefficient time argument at s - r - i dt
            cfg_b.t_eval = tail_steps as f64 * dt;
            let offset = cfg_b.t_eval - (s - r_time);
            if sim.domain().classify(&start, sim.domain().default_tol()) != crate::model::Location::Interior {
                return Ok(row);
            }
            for j in 0..per_start as u64 {
                let c = cfg_b.with_seed(derive_seed2(seed, b as u64 + 1, j));
                if let Some(end) = snapshot_bins(sim, &c, offset, &[tail_steps], &bins)?[0] {
                    row[end] += 1;
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut conv = vec![0.0; nb];
    for (row, &b) in transitions.iter().zip(&starts) {
        let w = counts[r_pos][b] as f64 / n1 as f64 / per_start as f64;
        for (c, &n) in conv.iter_mut().zip(row) {
            *c += w * n as f64;
        }
    }
    let direct: Vec<f64> = counts[last].iter().map(|&c| c as f64 / n1 as f64).collect();
    let killed_direct = 1.0 - direct.iter().sum::<f64>();
    let killed_conv = 1.0 - conv.iter().sum::<f64>();
    let ck_tv = 0.5 * (direct.iter().zip(&conv).map(|(a, b)| (a - b).abs()).sum::<f64>() + (killed_direct - killed_conv).abs());

    Ok(DensityReport {
        c_fit,
        c_exp,
        c_certified,
        certified,
        violations_at_fit,
        bins_used: xs.len(),
        fit_r2,
        ck_tv,
        mass,
        mass_se,
        survival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientField, DomainSpec};

    #[test]
    fn bins_round_trip_centers() {
        let b = Binning { lo: vec![-1.0, 0.0], width: vec![0.5, 0.25], per_axis: 4 };
        for idx in 0..16 {
            assert_eq!(b.index(&b.center(idx)), idx);
            assert_eq!(b.min_dist2(idx, &b.center(idx)), 0.0);
        }
        assert_eq!(b.index(&[5.0, -3.0]), 12);
    }

    #[test]
    fn too_few_paths_is_reported() {
        let sim = PathSimulator::from_parts(DomainSpec::interval(-1.0, 1.0).unwrap(), CoefficientField::brownian(1)).unwrap();
        let cfg = DensityConfig::new(vec![0.5, 1.0], 50);
        assert!(matches!(empirical_density_check(&sim, &[0.0], &cfg, 1), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn heat_kernel_envelope_on_huge_box() {
        let sim = PathSimulator::from_parts(DomainSpec::interval(-8.0, 8.0).unwrap(), CoefficientField::brownian(1)).unwrap();
        let mut cfg = DensityConfig::new(vec![0.25, 0.5, 1.0], 40_000);
        cfg.bins_per_axis = 64;
        cfg.n_steps = 20;
        cfg.min_count = 200;
        let rep = empirical_density_check(&sim, &[0.0], &cfg, 7).unwrap();
        let c0 = (2.0 * std::f64::consts::PI).powf(-0.5);
        assert!((rep.c_exp - 1.0).abs() < 0.05, "{rep:?}");
        assert!((rep.c_fit / c0 - 1.0).abs() < 0.05, "{rep:?}");
        assert!(rep.certified);
        assert!((rep.mass - 1.0).abs() < 1e-12);
        assert!(rep.ck_tv < 0.05);
    }
}
