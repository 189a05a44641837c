//! The smoothed noise
//! `W'^{eps,delta}(tau, x) = ∫∫ delta^{-1} 1_[0,delta](tau - r) p_eps(x - y) W(dr, dy)`
//! for a sampled sheet, the pathwise functional `V = ∫_0^{t∧τ} W'(t - s, X_s) ds`,
//! and the exact variance `<A, A>` of that functional given the path.
//!
//! On the sheet grid the stochastic integral becomes
//! `sum_cells (cell average of the kernel) * (cell increment of W)`; the noise
//! is taken to vanish before time 0.

use nalgebra::DMatrix;

use super::{mode_product, MollifierParams, SheetGrid, SheetSample};
use crate::error::{Error, Result};
use crate::kernels::cell_integral;
use crate::model::HurstParams;
use crate::pathsim::KilledPath;
use crate::special::{normal_mass, shifted_abs_moment};

/// Heat-kernel weights beyond this many standard deviations are skipped.
const EVAL_CUTOFF: f64 = 8.0;

/// A scalar potential `c(tau, x)`.
pub trait NoiseField: Sync {
    fn eval(&self, tau: f64, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl NoiseField for ZeroField {
    fn eval(&self, _tau: f64, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Cell averages of the mollifier on a sheet grid; independent of the sample.
#[derive(Debug, Clone)]
pub struct Smoother {
    times: Vec<f64>,
    space: Vec<Vec<f64>>,
    /// Cells per axis.
    shape: Vec<usize>,
    m: MollifierParams,
}

/// Exact evaluation from the sheet increments.
#[derive(Debug, Clone)]
pub struct DirectSmoothed {
    smoother: Smoother,
    incr: Vec<f64>,
}

pub fn smoothed_noise(sheet: &SheetSample, m: MollifierParams) -> Result<DirectSmoothed> {
    let smoother = Smoother::new(&sheet.grid, m)?;
    let (incr, _) = sheet.increments();
    Ok(DirectSmoothed { smoother, incr })
}

fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

impl Smoother {
    pub fn new(grid: &SheetGrid, m: MollifierParams) -> Result<Self> {
        m.validate()?;
        let shape = grid.shape().iter().map(|n| n - 1).collect();
        Ok(Self { times: grid.times.clone(), space: grid.space.clone(), shape, m })
    }

    pub fn mollifier(&self) -> MollifierParams {
        self.m
    }

    /// Time-cell weights `|cell ∩ [tau - delta, tau] ∩ [0, ∞)| / (delta |cell|)`,
    /// returned with the index of the first cell.
    fn time_weights(&self, tau: f64) -> (usize, Vec<f64>) {
        let lo = (tau - self.m.delta).max(0.0);
        let n = self.times.len() - 1;
        let first = self.times.partition_point(|&t| t <= lo).saturating_sub(1).min(n - 1);
        let mut w = Vec::new();
        for i in first..n {
            let (a, b) = (self.times[i], self.times[i + 1]);
            if a >= tau {
                break;
            }
            w.push(overlap(a, b, lo, tau) / (self.m.delta * (b - a)));
        }
        (first, w)
    }

    /// Cell averages of `p_eps(x - .)` along one axis.
    fn space_weights(&self, axis: usize, x: f64) -> (usize, Vec<f64>) {
        let nodes = &self.space[axis];
        let sd = self.m.eps.sqrt();
        let (lo, hi) = (x - EVAL_CUTOFF * sd, x + EVAL_CUTOFF * sd);
        let n = nodes.len() - 1;
        let first = nodes.partition_point(|&y| y <= lo).saturating_sub(1).min(n - 1);
        let mut w = Vec::new();
        for j in first..n {
            let (a, b) = (nodes[j], nodes[j + 1]);
            if a > hi {
                break;
            }
            w.push(normal_mass((a - x) / sd, (b - x) / sd) / (b - a));
        }
        (first, w)
    }

    fn check_coverage(&self, tau: f64, x: &[f64]) -> Result<()> {
        let out = || Error::OutOfCoverage { t: tau, x: x.to_vec() };
        let tmax = *self.times.last().unwrap();
        if x.len() != self.space.len() {
            return Err(Error::DimensionMismatch { expected: self.space.len(), got: x.len() });
        }
        if !(tau >= -1e-12 && tau <= tmax * (1.0 + 1e-12)) {
            return Err(out());
        }
        let pad = self.m.pad();
        for (axis, &v) in self.space.iter().zip(x) {
            let tol = 1e-9 * (axis[axis.len() - 1] - axis[0]);
            if v < axis[0] + pad - tol || v > axis[axis.len() - 1] - pad + tol {
                return Err(out());
            }
        }
        Ok(())
    }

    /// Index ranges and weights of every axis at `(tau, x)`.
    fn all_weights(&self, tau: f64, x: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let mut ws = vec![self.time_weights(tau.max(0.0))];
        for (axis, &v) in x.iter().enumerate() {
            ws.push(self.space_weights(axis, v));
        }
        ws
    }

    /// Dense weight matrix of one axis at the given evaluation nodes.
    fn weight_matrix(&self, axis: usize, nodes: &[f64]) -> DMatrix<f64> {
        let n_cells = self.shape[axis];
        let mut m = DMatrix::zeros(nodes.len(), n_cells);
        for (r, &v) in nodes.iter().enumerate() {
            let (first, w) = if axis == 0 { self.time_weights(v.max(0.0)) } else { self.space_weights(axis - 1, v) };
            for (k, wk) in w.into_iter().enumerate() {
                m[(r, first + k)] = wk;
            }
        }
        m
    }

    /// Visits every cell with nonzero weight at `(tau, x)`.
    fn for_each_cell<F: FnMut(usize, f64)>(&self, tau: f64, x: &[f64], mut f: F) {
        let ws = self.all_weights(tau, x);
        if ws.iter().any(|(_, w)| w.is_empty()) {
            return;
        }
        let dims = ws.len();
        let mut idx = vec![0usize; dims];
        loop {
            let mut flat = 0;
            let mut weight = 1.0;
            for k in 0..dims {
                flat = flat * self.shape[k] + ws[k].0 + idx[k];
                weight *= ws[k].1[idx[k]];
            }
            f(flat, weight);
            let mut k = dims;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < ws[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// Cell coefficients `c` with `pathwise_v_regularized = sum c * (cell increments)`.
    pub fn path_coefficients(&self, path: &KilledPath, t_eval: f64) -> Result<Vec<f64>> {
        let mut coef = vec![0.0; self.shape.iter().product()];
        for node in quadrature_nodes(path) {
            let tau = (t_eval - node.s).max(0.0);
            self.check_coverage(tau, &node.x)?;
            self.for_each_cell(tau, &node.x, |flat, w| coef[flat] += node.w * w);
        }
        Ok(coef)
    }
}

impl DirectSmoothed {
    pub fn mollifier(&self) -> MollifierParams {
        self.smoother.m
    }

    pub fn smoother(&self) -> &Smoother {
        &self.smoother
    }
}

impl NoiseField for DirectSmoothed {
    fn eval(&self, tau: f64, x: &[f64]) -> Result<f64> {
        self.smoother.check_coverage(tau, x)?;
        let mut total = 0.0;
        self.smoother.for_each_cell(tau, x, |flat, w| total += w * self.incr[flat]);
        Ok(total)
    }
}

/// The smoothed field tabulated on a uniform grid with multilinear
/// interpolation; the same table serves the Monte Carlo and the
/// finite-difference solvers.
#[derive(Debug, Clone)]
pub struct TabulatedField {
    axes: Vec<(f64, f64, usize)>,
    values: Vec<f64>,
}

impl TabulatedField {
    /// Tabulates `field` on `n_tau` nodes over `[0, t_max]` and `n_x` nodes per
    /// axis over the box `[lo, hi]`.
    pub fn build(field: &DirectSmoothed, t_max: f64, n_tau: usize, lo: &[f64], hi: &[f64], n_x: usize) -> Result<Self> {
        if lo.len() + 1 > 8 {
            return Err(Error::InvalidConfig("tabulation supports at most 7 spatial dimensions".into()));
        }
        if n_tau < 2 || n_x < 2 {
            return Err(Error::DegenerateGrid("tabulation needs two or more nodes per axis".into()));
        }
        let sm = &field.smoother;
        sm.check_coverage(t_max, lo)?;
        sm.check_coverage(0.0, hi)?;
        let mut axes = vec![(0.0, t_max, n_tau)];
        axes.extend(lo.iter().zip(hi).map(|(&a, &b)| (a, b, n_x)));
        let mut data = field.incr.clone();
        let mut shape = sm.shape.clone();
        for (k, &(a, b, n)) in axes.iter().enumerate() {
            let nodes: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
            let w = sm.weight_matrix(k, &nodes);
            let (d, s) = mode_product(&data, &shape, k, &w);
            data = d;
            shape = s;
        }
        Ok(Self { axes, values: data })
    }

    pub fn node_value(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().zip(&self.axes).fold(0, |acc, (i, ax)| acc * ax.2 + i);
        self.values[flat]
    }

    pub fn tau_max(&self) -> f64 {
        self.axes[0].1
    }
}

impl NoiseField for TabulatedField {
    fn eval(&self, tau: f64, x: &[f64]) -> Result<f64> {
        let dims = self.axes.len();
        if x.len() + 1 != dims {
            return Err(Error::DimensionMismatch { expected: dims - 1, got: x.len() });
        }
        // cell index and fraction per axis
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for k in 0..dims {
            let v = if k == 0 { tau } else { x[k - 1] };
            let (a, b, n) = self.axes[k];
            let tol = 1e-9 * (b - a);
            if v < a - tol || v > b + tol {
                return Err(Error::OutOfCoverage { t: tau, x: x.to_vec() });
            }
            let u = ((v - a) / (b - a) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << dims) {
            let mut flat = 0;
            let mut w = 1.0;
            for k in 0..dims {
                let bit = (corner >> (dims - 1 - k)) & 1;
                flat = flat * self.axes[k].2 + base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                total += w * self.values[flat];
            }
        }
        Ok(total)
    }
}

/// Quadrature node of the path integral `∫_0^{t∧τ} . ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    pub s: f64,
    pub w: f64,
    pub x: Vec<f64>,
}

/// Trapezoid nodes over the active part of the path; an exited path ends at
/// its recorded boundary point.
pub fn quadrature_nodes(path: &KilledPath) -> Vec<QuadNode> {
    let m = path.active_cells();
    if m == 0 {
        return Vec::new();
    }
    (0..=m)
        .map(|a| {
            let x = match (&path.exit, a == m) {
                (Some(e), true) => e.point.clone(),
                _ => path.state(a).to_vec(),
            };
            let w = if a == 0 || a == m { 0.5 * path.dt } else { path.dt };
            QuadNode { s: a as f64 * path.dt, w, x }
        })
        .collect()
}

/// `∫_0^{t∧τ} W'^{eps,delta}(t - s, X_s) ds` by the trapezoid rule on the path grid.
pub fn pathwise_v_regularized(path: &KilledPath, field: &dyn NoiseField, t_eval: f64) -> Result<f64> {
    let mut v = 0.0;
    for node in quadrature_nodes(path) {
        v += node.w * field.eval((t_eval - node.s).max(0.0), &node.x)?;
    }
    Ok(v)
}

/// Exact conditional variance of `pathwise_v_regularized` over sheets:
/// `alpha_H sum_{a,b} w_a w_b K_t(tau_a, tau_b) prod_m E|dx_m + sqrt(2 eps) Z|^{2H_m - 2}`
/// with `K_t` the box-averaged temporal kernel (cut at time 0).
pub fn aa_inner_product(path: &KilledPath, t_eval: f64, hurst: &HurstParams, m: &MollifierParams) -> f64 {
    let nodes = quadrature_nodes(path);
    let sd = (2.0 * m.eps).sqrt();
    let window = |tau: f64| ((tau - m.delta).max(0.0), tau.max(0.0));
    let mut total = 0.0;
    for (a, na) in nodes.iter().enumerate() {
        let (a0, a1) = window(t_eval - na.s);
        for nb in nodes.iter().skip(a) {
            let (b0, b1) = window(t_eval - nb.s);
            let kt = cell_integral(a0, a1, b0, b1, hurst.h0) / (m.delta * m.delta);
            if kt == 0.0 {
                continue;
            }
            let kx: f64 = (0..na.x.len()).map(|k| shifted_abs_moment(na.x[k] - nb.x[k], sd, 2.0 * hurst.h_space[k] - 2.0)).product();
            let pair = na.w * nb.w * kt * kx;
            total += if std::ptr::eq(na, nb) { pair } else { 2.0 * pair };
        }
    }
    hurst.alpha() * total
}

#[cfg(test)]
mod tests {
    use super::super::{SheetGrid, SheetSampler};
    use super::*;
    use crate::model::DomainSpec;
    use approx::assert_relative_eq;

    fn setup(eps: f64, delta: f64, nt: usize, nx: usize) -> (SheetSampler, MollifierParams) {
        let m = MollifierParams::new(eps, delta).unwrap();
        let grid = SheetGrid::covering(&DomainSpec::interval(0.0, 1.0).unwrap(), 0.5, &m, nt, nx).unwrap();
        (SheetSampler::new(grid, &HurstParams::isotropic(0.8, 0.8, 1)).unwrap(), m)
    }

    #[test]
    fn zero_sheet_gives_zero_field() {
        let (sampler, m) = setup(0.05, 0.05, 20, 20);
        let zero = SheetSample::zero(sampler.grid().clone(), &HurstParams::isotropic(0.8, 0.8, 1));
        let f = smoothed_noise(&zero, m).unwrap();
        assert_eq!(f.eval(0.3, &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn field_is_linear_in_the_sheet() {
        let (sampler, m) = setup(0.05, 0.05, 24, 24);
        let (a, b) = (sampler.sample(1), sampler.sample(2));
        let c = a.combine(1.5, &b, -2.0).unwrap();
        let (fa, fb, fc) = (smoothed_noise(&a, m).unwrap(), smoothed_noise(&b, m).unwrap(), smoothed_noise(&c, m).unwrap());
        for &(t, x) in &[(0.02, 0.1), (0.3, 0.5), (0.5, 0.99)] {
            let lhs = fc.eval(t, &[x]).unwrap();
            let rhs = 1.5 * fa.eval(t, &[x]).unwrap() - 2.0 * fb.eval(t, &[x]).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn coverage_is_enforced() {
        let (sampler, m) = setup(0.05, 0.05, 16, 16);
        let f = smoothed_noise(&sampler.sample(0), m).unwrap();
        assert!(f.eval(0.2, &[0.5]).is_ok());
        assert!(matches!(f.eval(0.2, &[3.0]), Err(Error::OutOfCoverage { .. })));
        assert!(matches!(f.eval(5.0, &[0.5]), Err(Error::OutOfCoverage { .. })));
    }

    #[test]
    fn table_reproduces_direct_values_at_nodes_and_interpolates() {
        let (sampler, m) = setup(0.05, 0.05, 32, 32);
        let f = smoothed_noise(&sampler.sample(9), m).unwrap();
        let tab = TabulatedField::build(&f, 0.5, 51, &[0.0], &[1.0], 41).unwrap();
        assert_relative_eq!(tab.eval(0.2, &[0.25]).unwrap(), f.eval(0.2, &[0.25]).unwrap(), epsilon = 1e-10);
        assert_relative_eq!(tab.node_value(&[50, 40]), f.eval(0.5, &[1.0]).unwrap(), epsilon = 1e-10);
        // between nodes the interpolant stays close to the smooth field
        let (a, b) = (tab.eval(0.205, &[0.2625]).unwrap(), f.eval(0.205, &[0.2625]).unwrap());
        let scale = f.eval(0.2, &[0.25]).unwrap().abs().max(1.0);
        assert!((a - b).abs() < 0.05 * scale, "{a} {b}");
        assert!(tab.eval(0.6, &[0.5]).is_err());
    }

    #[test]
    fn pulled_back_functional_equals_pathwise_value() {
        let (sampler, m) = setup(0.05, 0.05, 24, 20);
        let p = KilledPath { dim: 1, dt: 0.05, n_steps: 10, t_eval: 0.5, states: (0..=10).map(|i| 0.3 + 0.04 * i as f64).collect(), exit: None, seed: 0 };
        let coef = Smoother::new(sampler.grid(), m).unwrap().path_coefficients(&p, 0.5).unwrap();
        let u = sampler.pull_back(&coef);
        for seed in [1, 2, 3] {
            let direct = pathwise_v_regularized(&p, &smoothed_noise(&sampler.sample(seed), m).unwrap(), 0.5).unwrap();
            assert_relative_eq!(sampler.sample_functional(&u, seed), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn quadrature_nodes_follow_the_active_path() {
        let p = KilledPath {
            dim: 1,
            dt: 0.1,
            n_steps: 10,
            t_eval: 1.0,
            states: vec![0.0, 0.2, 0.5, 1.3],
            exit: Some(crate::pathsim::ExitInfo { index: 3, time: 0.3, point: vec![1.0] }),
            seed: 0,
        };
        let nodes = quadrature_nodes(&p);
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[3].x, vec![1.0]);
        assert_relative_eq!(nodes.iter().map(|n| n.w).sum::<f64>(), 0.3, epsilon = 1e-15);
        assert_eq!(pathwise_v_regularized(&p, &ZeroField, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_of_a_resting_path_matches_brute_force() {
        // constant path: A factorizes and K_x(0) = E|sqrt(2 eps) Z|^{2H-2}
        let n = 8;
        let p = KilledPath { dim: 1, dt: 0.5 / n as f64, n_steps: n, t_eval: 0.5, states: vec![0.4; n + 1], exit: None, seed: 0 };
        let h = HurstParams::isotropic(0.8, 0.8, 1);
        let m = MollifierParams::new(0.05, 0.1).unwrap();
        let aa = aa_inner_product(&p, 0.5, &h, &m);
        let kx = crate::special::gaussian_abs_moment(0.1, -0.4);
        let nodes = quadrature_nodes(&p);
        let mut brute = 0.0;
        for a in &nodes {
            for b in &nodes {
                let (ta, tb) = (0.5 - a.s, 0.5 - b.s);
                let kt = cell_integral((ta - 0.1f64).max(0.0), ta, (tb - 0.1f64).max(0.0), tb, 0.8) / 0.01;
                brute += a.w * b.w * kt * kx;
            }
        }
        assert_relative_eq!(aa, h.alpha() * brute, max_relative = 1e-12);
    }
}
