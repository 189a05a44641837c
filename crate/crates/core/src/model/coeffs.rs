use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::domain::{DomainSpec, Location};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Vector-valued field `(t, x) -> out`; the diffusion writes a row-major
/// `d x d` matrix.
pub type VectorFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Drift `b(t, x)` and diffusion `sigma(t, x)` with the declared regularity
/// constants (ellipticity, Lipschitz in space, Hölder in time).
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    drift: VectorFn,
    diffusion: VectorFn,
    pub ellipticity_delta: f64,
    pub lipschitz_const: f64,
    /// `(K2, gamma)` with `|b(t,x) - b(s,x)| <= K2 |t-s|^gamma`.
    pub time_holder: (f64, f64),
    /// Upper bound on `|b|`.
    pub drift_bound: f64,
    /// Upper bound on the largest eigenvalue of `sigma sigma^T`.
    pub ellipticity_upper: f64,
    autonomous: bool,
    constant_diffusion: Option<Arc<[f64]>>,
    zero_drift: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("ellipticity_delta", &self.ellipticity_delta)
            .field("lipschitz_const", &self.lipschitz_const)
            .field("time_holder", &self.time_holder)
            .field("autonomous", &self.autonomous)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    /// Arbitrary coefficients. Regularity constants default to "unknown"
    /// (zero ellipticity, infinite Lipschitz) and should be declared with the
    /// `with_*` setters.
    pub fn new(dim: usize, drift: VectorFn, diffusion: VectorFn, autonomous: bool) -> Self {
        Self {
            dim,
            drift,
            diffusion,
            ellipticity_delta: 0.0,
            lipschitz_const: f64::INFINITY,
            time_holder: (f64::INFINITY, 1.0),
            drift_bound: f64::INFINITY,
            ellipticity_upper: f64::INFINITY,
            autonomous,
            constant_diffusion: None,
            zero_drift: false,
        }
    }

    /// Standard Brownian motion: `b = 0`, `sigma = I`.
    pub fn brownian(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    /// `b = 0`, `sigma = c I`.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = c;
        }
        let mat: Arc<[f64]> = m.into();
        let mat2 = mat.clone();
        let mut f = Self::new(
            dim,
            Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
            Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&mat2)),
            true,
        );
        f.constant_diffusion = Some(mat);
        f.zero_drift = true;
        f.ellipticity_delta = c * c;
        f.ellipticity_upper = c * c;
        f.lipschitz_const = 0.0;
        f.time_holder = (0.0, 1.0);
        f.drift_bound = 0.0;
        f
    }

    /// Replaces the drift, keeping the diffusion.
    pub fn with_drift(mut self, drift: VectorFn, autonomous: bool, lipschitz: f64, holder: (f64, f64), bound: f64) -> Self {
        self.drift = drift;
        self.zero_drift = false;
        self.autonomous = self.autonomous && autonomous;
        self.lipschitz_const = self.lipschitz_const.max(lipschitz);
        self.time_holder = (self.time_holder.0.max(holder.0), holder.1.min(self.time_holder.1));
        self.drift_bound = bound;
        self
    }

    pub fn with_ellipticity(mut self, lower: f64, upper: f64) -> Self {
        self.ellipticity_delta = lower;
        self.ellipticity_upper = upper;
        self
    }

    pub fn with_regularity(mut self, lipschitz: f64, holder: (f64, f64)) -> Self {
        self.lipschitz_const = lipschitz;
        self.time_holder = holder;
        self
    }

    pub fn with_drift_bound(mut self, bound: f64) -> Self {
        self.drift_bound = bound;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn has_zero_drift(&self) -> bool {
        self.zero_drift
    }

    /// Row-major `sigma` if it is constant in `(t, x)`.
    pub fn constant_diffusion(&self) -> Option<&[f64]> {
        self.constant_diffusion.as_deref()
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.zero_drift {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            (self.drift)(t, x, out)
        }
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.constant_diffusion {
            Some(m) => out.copy_from_slice(m),
            None => (self.diffusion)(t, x, out),
        }
    }

    /// `a = sigma sigma^T`, row-major.
    pub fn diffusion_matrix(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut s = vec![0.0; d * d];
        self.diffusion(t, x, &mut s);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
            }
        }
    }

    /// Even extension in time: `b(-t, x) = b(t, x)`, `sigma(-t, x) = sigma(t, x)`.
    pub fn time_reflect(&self) -> Self {
        let b = self.drift.clone();
        let s = self.diffusion.clone();
        let mut out = self.clone();
        out.drift = Arc::new(move |t, x, o| b(t.abs(), x, o));
        out.diffusion = Arc::new(move |t, x, o| s(t.abs(), x, o));
        out
    }

    /// Replaces drift and diffusion by new closures, keeping every declared
    /// constant. Used by the spatial extension.
    pub(crate) fn with_functions(&self, drift: VectorFn, diffusion: VectorFn) -> Self {
        let mut out = self.clone();
        out.drift = drift;
        if out.constant_diffusion.is_none() {
            out.diffusion = diffusion;
        }
        out
    }

    pub(crate) fn raw_drift(&self) -> VectorFn {
        self.drift.clone()
    }

    pub(crate) fn raw_diffusion(&self) -> VectorFn {
        self.diffusion.clone()
    }

    /// Samples `(t, x, xi)` on `[0, horizon] x D` and checks
    /// `xi^T a xi >= delta |xi|^2`.
    pub fn check_ellipticity(&self, domain: &DomainSpec, horizon: f64, samples: usize, seed: u64) -> Result<()> {
        let d = self.dim;
        let mut rng = stream_rng(seed, 7);
        let mut a = vec![0.0; d * d];
        for (t, x) in sample_points(domain, horizon, samples, &mut rng) {
            self.diffusion_matrix(t, &x, &mut a);
            let xi: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let n2: f64 = xi.iter().map(|v| v * v).sum();
            if n2 == 0.0 {
                continue;
            }
            let q: f64 = (0..d).map(|i| (0..d).map(|j| xi[i] * a[i * d + j] * xi[j]).sum::<f64>()).sum();
            if q < self.ellipticity_delta * n2 * (1.0 - 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "uniform ellipticity fails at t={t}, x={x:?}: {} < {}",
                    q / n2,
                    self.ellipticity_delta
                )));
            }
        }
        Ok(())
    }

    /// Samples pairs and checks the declared Lipschitz constant in space and
    /// Hölder constant in time for both coefficients.
    pub fn check_regularity(&self, domain: &DomainSpec, horizon: f64, samples: usize, seed: u64) -> Result<()> {
        let d = self.dim;
        let mut rng = stream_rng(seed, 8);
        let pts = sample_points(domain, horizon, 2 * samples, &mut rng);
        let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
        let (mut s1, mut s2) = (vec![0.0; d * d], vec![0.0; d * d]);
        let slack = 1.0 + 1e-9;
        for pair in pts.chunks(2) {
            let [(t, x), (s, y)] = [&pair[0], &pair[1]];
            let dx = super::domain::norm_diff(x, y);
            self.drift(*t, x, &mut b1);
            self.drift(*t, y, &mut b2);
            self.diffusion(*t, x, &mut s1);
            self.diffusion(*t, y, &mut s2);
            let gap = super::domain::norm_diff(&b1, &b2).max(super::domain::norm_diff(&s1, &s2));
            if gap > self.lipschitz_const * dx * slack + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "declared Lipschitz constant {} violated: |dF| = {gap} at |dx| = {dx}",
                    self.lipschitz_const
                )));
            }
            let (k2, gamma) = self.time_holder;
            let dt = (t - s).abs();
            self.drift(*s, x, &mut b2);
            self.diffusion(*s, x, &mut s2);
            let gap = super::domain::norm_diff(&b1, &b2).max(super::domain::norm_diff(&s1, &s2));
            if gap > k2 * dt.powf(gamma) * slack + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "declared time-Hölder constant ({k2}, {gamma}) violated at |dt| = {dt}"
                )));
            }
        }
        Ok(())
    }
}

fn sample_points<R: Rng>(domain: &DomainSpec, horizon: f64, n: usize, rng: &mut R) -> Vec<(f64, Vec<f64>)> {
    let (lo, hi) = domain.bounding_box();
    let tol = domain.default_tol();
    let mut out = Vec::with_capacity(n);
    let mut guard = 0usize;
    while out.len() < n && guard < 100 * n + 100 {
        guard += 1;
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
        if domain.classify(&x, tol) == Location::Exterior {
            continue;
        }
        out.push((horizon * rng.random::<f64>(), x));
    }
    out
}

/// Drift presets accepted in problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DriftPreset {
    Zero,
    Constant { value: Vec<f64> },
    /// `b(x) = A x + c`.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `b_i(x) = a_i sin(f x_i + phase)`.
    TrigX { amplitude: Vec<f64>, frequency: f64, #[serde(default)] phase: f64 },
    /// `b_i(t) = a_i sin(f t + phase)`.
    TrigT { amplitude: Vec<f64>, frequency: f64, #[serde(default)] phase: f64 },
    /// `b(t) = sum_k c_k t^k` with vector coefficients.
    PolyT { coeffs: Vec<Vec<f64>> },
    /// Piecewise-linear in `t` through `(times[k], values[k])`, constant
    /// outside the table.
    TabulatedT { times: Vec<f64>, values: Vec<Vec<f64>> },
}

/// Diffusion presets accepted in problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DiffusionPreset {
    Identity,
    ScaledIdentity { scale: f64 },
    Constant { matrix: Vec<Vec<f64>> },
    /// `sigma(t) = (sum_k c_k t^k) I`.
    PolyT { coeffs: Vec<f64> },
    /// `sigma(x) = (base + amplitude * mean_i sin(f x_i)) I`.
    TrigX { base: f64, amplitude: f64, frequency: f64 },
    /// `sigma(t) = s(t) I` with `s` piecewise-linear through the table.
    TabulatedT { times: Vec<f64>, scale: Vec<f64> },
}

fn check_len(what: &str, got: usize, d: usize) -> Result<()> {
    if got != d {
        return Err(Error::InvalidConfig(format!("{what}: expected {d} components, got {got}")));
    }
    Ok(())
}

fn interp_table(times: &[f64], t: f64) -> (usize, f64) {
    if t <= times[0] {
        return (0, 0.0);
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return (last, 0.0);
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    (k, (t - times[k]) / (times[k + 1] - times[k]))
}

fn table_holder(times: &[f64], rows: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(rows.windows(2))
        .map(|(t, v)| (v[1] - v[0]).abs() / (t[1] - t[0]))
        .fold(0.0, f64::max)
}

fn validate_table(times: &[f64], n: usize) -> Result<()> {
    if times.is_empty() || times.len() != n {
        return Err(Error::InvalidConfig("tabulated preset needs matching nonempty times/values".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("tabulated times must be strictly increasing".into()));
    }
    Ok(())
}

impl CoefficientField {
    /// Builds coefficients from presets. `horizon` bounds the time range used
    /// for the polynomial-in-time Hölder constants.
    pub fn from_presets(dim: usize, drift: &DriftPreset, diffusion: &DiffusionPreset, horizon: f64) -> Result<Self> {
        let d = dim;
        let base = match diffusion {
            DiffusionPreset::Identity => Self::brownian(d),
            DiffusionPreset::ScaledIdentity { scale } => {
                if *scale == 0.0 {
                    return Err(Error::InvalidConfig("diffusion scale must be nonzero".into()));
                }
                Self::scaled_identity(d, *scale)
            }
            DiffusionPreset::Constant { matrix } => {
                check_len("diffusion matrix rows", matrix.len(), d)?;
                for r in matrix {
                    check_len("diffusion matrix row", r.len(), d)?;
                }
                let flat: Vec<f64> = matrix.iter().flatten().cloned().collect();
                let s = DMatrix::from_row_slice(d, d, &flat);
                let a = &s * s.transpose();
                let eig = a.symmetric_eigen().eigenvalues;
                let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut f = Self::brownian(d);
                let m: Arc<[f64]> = flat.into();
                let m2 = m.clone();
                f.diffusion = Arc::new(move |_, _, out| out.copy_from_slice(&m2));
                f.constant_diffusion = Some(m);
                f.ellipticity_delta = lo;
                f.ellipticity_upper = hi;
                f
            }
            DiffusionPreset::PolyT { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::InvalidConfig("poly_t diffusion needs coefficients".into()));
                }
                let c = coeffs.clone();
                let poly = move |t: f64| c.iter().rev().fold(0.0, |acc, v| acc * t + v);
                let ts: Vec<f64> = (0..=200).map(|i| horizon * i as f64 / 200.0).collect();
                let vals: Vec<f64> = ts.iter().map(|&t| poly(t)).collect();
                let lo = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                let hi = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
                if lo == 0.0 {
                    return Err(Error::InvalidConfig("poly_t diffusion vanishes on [0, T]".into()));
                }
                let deriv: f64 = coeffs.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v.abs() * horizon.max(1.0).powi(k as i32 - 1)).sum();
                let mut f = Self::new(
                    d,
                    Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
                    Arc::new(move |t, _, out: &mut [f64]| {
                        let s = poly(t);
                        out.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..d {
                            out[i * d + i] = s;
                        }
                    }),
                    false,
                );
                f.zero_drift = true;
                f.ellipticity_delta = lo * lo;
                f.ellipticity_upper = hi * hi;
                f.lipschitz_const = 0.0;
                f.time_holder = (deriv * (d as f64).sqrt(), 1.0);
                f.drift_bound = 0.0;
                f
            }
            DiffusionPreset::TrigX { base, amplitude, frequency } => {
                if base.abs() <= amplitude.abs() {
                    return Err(Error::InvalidConfig("trig_x diffusion needs |base| > |amplitude|".into()));
                }
                let (b0, a0, f0) = (*base, *amplitude, *frequency);
                let mut f = Self::new(
                    d,
                    Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
                    Arc::new(move |_, x: &[f64], out: &mut [f64]| {
                        let s = b0 + a0 * x.iter().map(|v| (f0 * v).sin()).sum::<f64>() / d as f64;
                        out.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..d {
                            out[i * d + i] = s;
                        }
                    }),
                    true,
                );
                f.zero_drift = true;
                f.ellipticity_delta = (b0.abs() - a0.abs()).powi(2);
                f.ellipticity_upper = (b0.abs() + a0.abs()).powi(2);
                // Frobenius norm of the change: sqrt(d) * |ds|, |ds| <= |a| f |dx| / sqrt(d).
                f.lipschitz_const = a0.abs() * f0.abs();
                f.time_holder = (0.0, 1.0);
                f.drift_bound = 0.0;
                f
            }
            DiffusionPreset::TabulatedT { times, scale } => {
                validate_table(times, scale.len())?;
                let lo = scale.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                let hi = scale.iter().map(|v| v.abs()).fold(0.0, f64::max);
                if lo == 0.0 {
                    return Err(Error::InvalidConfig("tabulated diffusion scale vanishes".into()));
                }
                let k2 = table_holder(times, scale) * (d as f64).sqrt();
                let (ts, sc) = (times.clone(), scale.clone());
                let mut f = Self::new(
                    d,
                    Arc::new(|_, _, out: &mut [f64]| out.iter_mut().for_each(|v| *v = 0.0)),
                    Arc::new(move |t, _, out: &mut [f64]| {
                        let (k, w) = interp_table(&ts, t);
                        let s = if w == 0.0 { sc[k] } else { sc[k] * (1.0 - w) + sc[k + 1] * w };
                        out.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..d {
                            out[i * d + i] = s;
                        }
                    }),
                    false,
                );
                f.zero_drift = true;
                f.ellipticity_delta = lo * lo;
                f.ellipticity_upper = hi * hi;
                f.lipschitz_const = 0.0;
                f.time_holder = (k2, 1.0);
                f.drift_bound = 0.0;
                f
            }
        };

        let out = match drift {
            DriftPreset::Zero => base,
            DriftPreset::Constant { value } => {
                check_len("constant drift", value.len(), d)?;
                let v = value.clone();
                let bound = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                base.with_drift(Arc::new(move |_, _, out| out.copy_from_slice(&v)), true, 0.0, (0.0, 1.0), bound)
            }
            DriftPreset::Affine { matrix, offset } => {
                check_len("affine drift rows", matrix.len(), d)?;
                check_len("affine drift offset", offset.len(), d)?;
                for r in matrix {
                    check_len("affine drift row", r.len(), d)?;
                }
                let flat: Vec<f64> = matrix.iter().flatten().cloned().collect();
                let lip = DMatrix::from_row_slice(d, d, &flat).norm();
                let c = offset.clone();
                base.with_drift(
                    Arc::new(move |_, x, out| {
                        for i in 0..d {
                            out[i] = c[i] + (0..d).map(|j| flat[i * d + j] * x[j]).sum::<f64>();
                        }
                    }),
                    true,
                    lip,
                    (0.0, 1.0),
                    f64::INFINITY,
                )
            }
            DriftPreset::TrigX { amplitude, frequency, phase } => {
                check_len("trig_x amplitude", amplitude.len(), d)?;
                let (a, f, p) = (amplitude.clone(), *frequency, *phase);
                let lip = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * f.abs();
                let bound = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                base.with_drift(
                    Arc::new(move |_, x, out| {
                        for i in 0..d {
                            out[i] = a[i] * (f * x[i] + p).sin();
                        }
                    }),
                    true,
                    lip,
                    (0.0, 1.0),
                    bound,
                )
            }
            DriftPreset::TrigT { amplitude, frequency, phase } => {
                check_len("trig_t amplitude", amplitude.len(), d)?;
                let (a, f, p) = (amplitude.clone(), *frequency, *phase);
                let bound = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                base.with_drift(
                    Arc::new(move |t, _, out| {
                        let s = (f * t + p).sin();
                        for i in 0..d {
                            out[i] = a[i] * s;
                        }
                    }),
                    false,
                    0.0,
                    (bound * f.abs(), 1.0),
                    bound,
                )
            }
            DriftPreset::PolyT { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::InvalidConfig("poly_t drift needs coefficients".into()));
                }
                for c in coeffs {
                    check_len("poly_t drift coefficient", c.len(), d)?;
                }
                let c = coeffs.clone();
                let tmax = horizon.max(1.0);
                let k2: f64 = coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, v)| k as f64 * v.iter().map(|x| x * x).sum::<f64>().sqrt() * tmax.powi(k as i32 - 1))
                    .sum();
                let bound: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v.iter().map(|x| x * x).sum::<f64>().sqrt() * tmax.powi(k as i32))
                    .sum();
                base.with_drift(
                    Arc::new(move |t, _, out| {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        let mut tp = 1.0;
                        for ck in &c {
                            for i in 0..d {
                                out[i] += ck[i] * tp;
                            }
                            tp *= t;
                        }
                    }),
                    false,
                    0.0,
                    (k2, 1.0),
                    bound,
                )
            }
            DriftPreset::TabulatedT { times, values } => {
                validate_table(times, values.len())?;
                for v in values {
                    check_len("tabulated drift row", v.len(), d)?;
                }
                let mut k2: f64 = 0.0;
                for i in 0..d {
                    let col: Vec<f64> = values.iter().map(|r| r[i]).collect();
                    k2 += table_holder(times, &col).powi(2);
                }
                let bound = values
                    .iter()
                    .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                let (ts, vs) = (times.clone(), values.clone());
                base.with_drift(
                    Arc::new(move |t, _, out| {
                        let (k, w) = interp_table(&ts, t);
                        for i in 0..d {
                            out[i] = if w == 0.0 { vs[k][i] } else { vs[k][i] * (1.0 - w) + vs[k + 1][i] * w };
                        }
                    }),
                    false,
                    0.0,
                    (k2.sqrt(), 1.0),
                    bound,
                )
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_b(c: &CoefficientField, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.dim()];
        c.drift(t, x, &mut out);
        out
    }

    fn eval_s(c: &CoefficientField, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.dim() * c.dim()];
        c.diffusion(t, x, &mut out);
        out
    }

    #[test]
    fn reflection_of_linear_in_time_drift() {
        // b(t, x) = t x
        let c = CoefficientField::brownian(1).with_drift(
            Arc::new(|t, x, out| out[0] = t * x[0]),
            false,
            1.0,
            (1.0, 1.0),
            f64::INFINITY,
        );
        let r = c.time_reflect();
        assert_eq!(eval_b(&r, -2.0, &[1.0]), vec![2.0]);
        assert_eq!(eval_b(&r, 2.0, &[1.0]), eval_b(&c, 2.0, &[1.0]));
    }

    #[test]
    fn reflection_keeps_constant_drift() {
        let c = CoefficientField::from_presets(2, &DriftPreset::Constant { value: vec![0.3, -1.0] }, &DiffusionPreset::Identity, 1.0).unwrap();
        let r = c.time_reflect();
        for t in [-3.0, -0.1, 0.0, 2.0] {
            assert_eq!(eval_b(&r, t, &[0.1, 0.2]), vec![0.3, -1.0]);
        }
    }

    #[test]
    fn reflection_of_time_dependent_diffusion() {
        // sigma(t) = (1 + t) I
        let c = CoefficientField::from_presets(2, &DriftPreset::Zero, &DiffusionPreset::PolyT { coeffs: vec![1.0, 1.0] }, 1.0).unwrap();
        let r = c.time_reflect();
        assert_eq!(eval_s(&r, -0.5, &[0.0, 0.0]), vec![1.5, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn reflection_is_idempotent() {
        let c = CoefficientField::from_presets(1, &DriftPreset::TrigT { amplitude: vec![0.1], frequency: 1.0, phase: 0.0 }, &DiffusionPreset::Identity, 1.0).unwrap();
        let once = c.time_reflect();
        let twice = once.time_reflect();
        for t in [-2.0, -0.3, 0.0, 0.7] {
            assert_eq!(eval_b(&once, t, &[0.2]), eval_b(&twice, t, &[0.2]));
        }
    }

    #[test]
    fn presets_pass_their_own_checks() {
        let dom = DomainSpec::centered_box(2, 1.0).unwrap();
        let presets = [
            (DriftPreset::TrigX { amplitude: vec![0.5, 0.2], frequency: 2.0, phase: 0.1 }, DiffusionPreset::TrigX { base: 1.0, amplitude: 0.3, frequency: 1.5 }),
            (DriftPreset::TrigT { amplitude: vec![0.1, 0.1], frequency: 1.0, phase: 0.0 }, DiffusionPreset::Constant { matrix: vec![vec![1.0, 0.2], vec![0.0, 0.8]] }),
            (DriftPreset::PolyT { coeffs: vec![vec![0.0, 1.0], vec![0.5, 0.0], vec![0.0, -0.2]] }, DiffusionPreset::PolyT { coeffs: vec![1.0, 0.5] }),
            (DriftPreset::Affine { matrix: vec![vec![-1.0, 0.0], vec![0.3, -0.5]], offset: vec![0.1, 0.0] }, DiffusionPreset::ScaledIdentity { scale: 2.0 }),
            (DriftPreset::TabulatedT { times: vec![0.0, 0.5, 1.0], values: vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.0, 0.0]] }, DiffusionPreset::TabulatedT { times: vec![0.0, 1.0], scale: vec![1.0, 2.0] }),
        ];
        for (b, s) in presets {
            let c = CoefficientField::from_presets(2, &b, &s, 1.0).unwrap();
            c.check_ellipticity(&dom, 1.0, 500, 3).unwrap();
            c.check_regularity(&dom, 1.0, 500, 4).unwrap();
            assert!(c.ellipticity_delta > 0.0);
        }
    }

    #[test]
    fn understated_lipschitz_is_caught() {
        let dom = DomainSpec::centered_box(1, 1.0).unwrap();
        let c = CoefficientField::from_presets(1, &DriftPreset::TrigX { amplitude: vec![1.0], frequency: 3.0, phase: 0.0 }, &DiffusionPreset::Identity, 1.0)
            .unwrap()
            .with_regularity(0.1, (0.0, 1.0));
        assert!(c.check_regularity(&dom, 1.0, 500, 1).is_err());
    }

    #[test]
    fn overstated_ellipticity_is_caught() {
        let dom = DomainSpec::centered_box(1, 1.0).unwrap();
        let c = CoefficientField::brownian(1).with_ellipticity(2.0, 2.0);
        assert!(c.check_ellipticity(&dom, 1.0, 100, 1).is_err());
    }

    #[test]
    fn preset_dimension_mismatch_rejected() {
        assert!(CoefficientField::from_presets(2, &DriftPreset::Constant { value: vec![1.0] }, &DiffusionPreset::Identity, 1.0).is_err());
    }
}
