//! Principal Dirichlet eigenpair of `-L = -1/2 a:D^2 - b.D` by centered
//! finite differences and inverse power iteration, with the small-ball
//! survival prediction built from it.
//!
//! Stencil: nodes `lo + k h` with `n_grid` cells per axis of the bounding
//! box. Second derivatives use the 3-point stencil, mixed derivatives the
//! 4-corner cross `(u(+,+) - u(+,-) - u(-,+) + u(-,-)) / 4 h_i h_j`, first
//! derivatives the centered difference. Nodes outside `D` are Dirichlet
//! nodes (value zero); on a ball this is a first-order boundary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::model::{CoefficientField, DomainSpec};

/// Relative residual required of the returned eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub lambda1: f64,
    /// Values at every node of the box grid, row-major, zero on Dirichlet
    /// nodes, normalized so that the grid quadrature of `psi^2` is 1.
    pub psi1: Vec<f64>,
    /// Nodes per axis (`n_grid + 1`).
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub h_grid: Vec<f64>,
    /// `|L_h psi - lambda psi| / |psi|`.
    pub residual: f64,
    pub iterations: usize,
    /// Whether each node is an unknown (inside `D`).
    #[serde(skip)]
    pub inside: Vec<bool>,
}

impl EigenResult {
    fn cell_volume(&self) -> f64 {
        self.h_grid.iter().product()
    }

    /// Grid quadrature of `psi1` (boundary values are zero, so the
    /// trapezoid rule reduces to a plain sum).
    pub fn integral(&self) -> f64 {
        self.psi1.iter().sum::<f64>() * self.cell_volume()
    }

    /// Multilinear interpolation of `psi1` at `x`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let d = self.shape.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for m in 0..d {
            let u = ((x[m] - self.lo[m]) / self.h_grid[m]).clamp(0.0, (self.shape[m] - 1) as f64);
            let k = (u.floor() as usize).min(self.shape[m] - 2);
            base[m] = k;
            frac[m] = u - k as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for m in 0..d {
                let bit = (corner >> m) & 1;
                w *= if bit == 1 { frac[m] } else { 1.0 - frac[m] };
                idx = idx * self.shape[m] + base[m] + bit;
            }
            if w != 0.0 {
                total += w * self.psi1[idx];
            }
        }
        total
    }

    pub fn max_value(&self) -> f64 {
        self.psi1.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value over nodes inside `D`.
    pub fn min_inside(&self) -> f64 {
        self.psi1.iter().zip(&self.inside).filter(|(_, &i)| i).map(|(v, _)| *v).fold(f64::INFINITY, f64::min)
    }
}

fn node_coords(idx: usize, shape: &[usize], lo: &[f64], h: &[f64]) -> Vec<f64> {
    let d = shape.len();
    let mut rem = idx;
    let mut x = vec![0.0; d];
    for m in (0..d).rev() {
        x[m] = lo[m] + (rem % shape[m]) as f64 * h[m];
        rem /= shape[m];
    }
    x
}

/// Principal eigenpair on `domain` (box, or ball embedded in its bounding
/// box) for autonomous coefficients.
pub fn principal_eigenpair(coeffs: &CoefficientField, domain: &DomainSpec, n_grid: usize) -> Result<EigenResult> {
    domain.validate()?;
    let d = domain.dim();
    if coeffs.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: coeffs.dim() });
    }
    if !coeffs.is_autonomous() {
        return Err(Error::InvalidConfig("eigenproblem needs time-independent coefficients".into()));
    }
    if n_grid < 4 || d > 3 {
        return Err(Error::InvalidConfig(format!("need n_grid >= 4 and d <= 3, got n_grid = {n_grid}, d = {d}")));
    }
    let (lo, hi) = domain.bounding_box();
    let h: Vec<f64> = (0..d).map(|m| (hi[m] - lo[m]) / n_grid as f64).collect();
    let shape = vec![n_grid + 1; d];
    let total: usize = shape.iter().product();
    let strides: Vec<usize> = (0..d).map(|m| shape[m + 1..].iter().product()).collect();
    let tol = 1e-9 * h.iter().copied().fold(f64::INFINITY, f64::min);
    let inside: Vec<bool> = (0..total).map(|i| domain.signed_distance(&node_coords(i, &shape, &lo, &h)) > tol).collect();
    // unknowns numbered in node order; band width set by the largest stride
    let unknown: Vec<usize> = (0..total).filter(|&i| inside[i]).collect();
    let mut pos = vec![usize::MAX; total];
    for (k, &i) in unknown.iter().enumerate() {
        pos[i] = k;
    }
    let n = unknown.len();
    if n == 0 {
        return Err(Error::EmptyDomainMesh);
    }
    // positions are monotone in node index, so the node stride bounds the band
    let bw = strides.iter().sum::<usize>().min(n - 1);
    let mut a_op = BandMatrix::zeros(n, bw, bw);
    let mut amat = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let put = |a_op: &mut BandMatrix, row: usize, node: isize, v: f64| {
        if node >= 0 && (node as usize) < total && pos[node as usize] != usize::MAX {
            a_op.add(row, pos[node as usize], v);
        }
    };
    for (row, &i) in unknown.iter().enumerate() {
        let x = node_coords(i, &shape, &lo, &h);
        coeffs.diffusion_matrix(0.0, &x, &mut amat);
        coeffs.drift(0.0, &x, &mut b);
        let ii = i as isize;
        for m in 0..d {
            let sm = strides[m] as isize;
            let c2 = 0.5 * amat[m * d + m] / (h[m] * h[m]);
            let c1 = b[m] / (2.0 * h[m]);
            put(&mut a_op, row, ii, 2.0 * c2);
            put(&mut a_op, row, ii + sm, -c2 - c1);
            put(&mut a_op, row, ii - sm, -c2 + c1);
            for q in m + 1..d {
                let sq = strides[q] as isize;
                // both (m, q) and (q, m) entries of 1/2 a:D^2
                let c = -amat[m * d + q] / (4.0 * h[m] * h[q]);
                put(&mut a_op, row, ii + sm + sq, c);
                put(&mut a_op, row, ii - sm - sq, c);
                put(&mut a_op, row, ii + sm - sq, -c);
                put(&mut a_op, row, ii - sm + sq, -c);
            }
        }
    }
    let (lambda1, v, residual, iterations) = inverse_power(&a_op)?;
    let mut psi1 = vec![0.0; total];
    for (k, &i) in unknown.iter().enumerate() {
        psi1[i] = v[k];
    }
    let vol: f64 = h.iter().product();
    let norm = (psi1.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
    psi1.iter_mut().for_each(|v| *v /= norm);
    Ok(EigenResult { lambda1, psi1, shape, lo, h_grid: h, residual, iterations, inside })
}

/// Inverse iteration at shift 0; returns `(lambda, v, residual, iterations)`
/// with `v` oriented to have positive sum.
fn inverse_power(a: &BandMatrix) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = a.dim();
    let lu = a.clone().factor()?;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; n];
    let mut prev = f64::NAN;
    for it in 1..=MAX_ITER {
        lu.solve_in_place(&mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::IterationDivergence(format!("iterate norm {norm} at step {it}")));
        }
        let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        a.mul_vec(&v, &mut av);
        let lambda: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
        let residual = av.iter().zip(&v).map(|(y, x)| (y - lambda * x).powi(2)).sum::<f64>().sqrt();
        if residual < RESIDUAL_TOL * lambda.abs().max(1.0) {
            return Ok((lambda, v, residual, it));
        }
        if it > 50 && (lambda - prev).abs() > 0.5 * lambda.abs() {
            return Err(Error::IterationDivergence(format!("eigenvalue estimate oscillates: {prev} -> {lambda}")));
        }
        prev = lambda;
    }
    a.mul_vec(&v, &mut av);
    let lambda: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
    let residual = av.iter().zip(&v).map(|(y, x)| (y - lambda * x).powi(2)).sum::<f64>().sqrt();
    Err(Error::NonConvergedResidual { residual, tol: RESIDUAL_TOL })
}

/// Radius of the largest ball centered at the domain center inside `D`.
pub fn inscribed_radius(domain: &DomainSpec) -> f64 {
    domain.signed_distance(&domain.center())
}

/// `lambda_1 R^2` of `-1/2 Laplacian` on the unit ball of dimension `d`
/// (the interval `(-1, 1)` when `d = 1`, the unit box otherwise).
pub fn laplacian_calibration(d: usize, n_grid: usize) -> Result<f64> {
    let dom = DomainSpec::centered_box(d, 1.0)?;
    Ok(principal_eigenpair(&CoefficientField::brownian(d), &dom, n_grid)?.lambda1)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenBoundsReport {
    pub radius: f64,
    pub lambda_r2: f64,
    /// `C_fit` scaled by the ellipticity upper bound, plus the drift term.
    pub bound: f64,
    pub bound_ok: bool,
    /// `max psi / psi(center)`.
    pub psi_ratio: f64,
    pub k_bound: f64,
    pub psi_ok: bool,
    pub violations: Vec<String>,
}

/// Checks `lambda_1 R^2 <= C_fit kappa + |b|^2 R^2 / (2 delta)` and
/// `max psi <= K psi(center)`; `c_fit` comes from
/// [`laplacian_calibration`] on a box of the same shape.
pub fn eigen_bounds_check(result: &EigenResult, domain: &DomainSpec, coeffs: &CoefficientField, c_fit: f64, k_bound: f64) -> EigenBoundsReport {
    let radius = inscribed_radius(domain);
    let lambda_r2 = result.lambda1 * radius * radius;
    let kappa = if coeffs.ellipticity_upper.is_finite() { coeffs.ellipticity_upper } else { 1.0 };
    let drift = if coeffs.has_zero_drift() { 0.0 } else { coeffs.drift_bound.powi(2) * radius * radius / (2.0 * coeffs.ellipticity_delta) };
    let bound = c_fit * kappa * (1.0 + 1e-6) + drift;
    let center = result.value_at(&domain.center());
    let psi_ratio = result.max_value() / center;
    let mut violations = Vec::new();
    let bound_ok = lambda_r2 <= bound;
    if !bound_ok {
        violations.push(format!("lambda1 R^2 = {lambda_r2} exceeds {bound}"));
    }
    let psi_ok = psi_ratio <= k_bound * (1.0 + 1e-9);
    if !psi_ok {
        violations.push(format!("max psi / psi(center) = {psi_ratio} exceeds K = {k_bound}"));
    }
    EigenBoundsReport { radius, lambda_r2, bound, bound_ok, psi_ratio, k_bound, psi_ok, violations }
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallBallPrediction {
    pub eps: f64,
    pub t: f64,
    pub lambda1: f64,
    pub psi_at_x: f64,
    pub psi_integral: f64,
    pub value: f64,
}

/// One-term prediction `exp(-lambda_1 t) psi(x) int psi` of
/// `P(sup_{s<=t} |X_s - x| < eps)` from the eigenpair on `B(x, eps)`.
/// The ball is an interval in `d = 1` and is embedded in its box otherwise.
pub fn smallball_predict(coeffs: &CoefficientField, domain: &DomainSpec, x: &[f64], eps: f64, t: f64, n_grid: usize) -> Result<SmallBallPrediction> {
    if !(eps > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!("need eps > 0 and t >= 0, got eps = {eps}, t = {t}")));
    }
    if domain.signed_distance(x) < eps * (1.0 - 1e-12) {
        return Err(Error::BallNotInsideDomain { radius: eps });
    }
    let ball = if x.len() == 1 { DomainSpec::interval(x[0] - eps, x[0] + eps)? } else { DomainSpec::ball(x.to_vec(), eps)? };
    let e = principal_eigenpair(coeffs, &ball, n_grid)?;
    let psi_at_x = e.value_at(x);
    let psi_integral = e.integral();
    Ok(SmallBallPrediction { eps, t, lambda1: e.lambda1, psi_at_x, psi_integral, value: (-e.lambda1 * t).exp() * psi_at_x * psi_integral })
}
