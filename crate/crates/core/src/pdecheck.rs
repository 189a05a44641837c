//! Finite-difference solver for `u_t = L_t u + c(t, x) u` on a box with
//! initial data `f` and Dirichlet data `g`, and the node-by-node comparison
//! against the fixed-noise Monte Carlo estimator.
//!
//! Each step applies `exp(c dt / 2)` at the interior nodes, a theta step of
//! the diffusion with coefficients frozen at the step midpoint, and
//! `exp(c dt / 2)` again; the potential is read at the midpoint time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{solve_point_fixed_noise, Budget};
use crate::linalg::{solve_tridiagonal, BandLu, BandMatrix};
use crate::model::{DomainSpec, Product, ProblemSpec};
use crate::noisefield::NoiseField;

/// Analytic potential `c(t, x)`.
pub struct AnalyticPotential<F>(pub F);

impl<F: Fn(f64, &[f64]) -> f64 + Sync> NoiseField for AnalyticPotential<F> {
    fn eval(&self, tau: f64, x: &[f64]) -> Result<f64> {
        Ok((self.0)(tau, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThetaPolicy {
    /// Crank–Nicolson unless its maximum-principle condition fails, then
    /// backward Euler.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FDMesh {
    /// Cells per axis.
    pub n_space: usize,
    pub n_time: usize,
    pub theta: ThetaPolicy,
}

impl FDMesh {
    pub fn new(n_space: usize, n_time: usize) -> Self {
        Self { n_space, n_time, theta: ThetaPolicy::Auto }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = ThetaPolicy::Fixed(theta);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub dt: f64,
    pub h_min: f64,
    /// `dt max_x sum_m a_mm / h_m^2`.
    pub diffusion_number: f64,
    /// `max |b_m| h_m / a_mm`; centered differences keep a monotone matrix
    /// while this is at most 1.
    pub cell_peclet: f64,
    pub theta_requested: Option<f64>,
    pub theta_used: f64,
    /// Whether the explicit part satisfies `(1 - theta) * diffusion_number <= 1`.
    pub max_principle: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FDSolution {
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    /// Nodes per axis.
    pub shape: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[n * nodes + i]`: level `n`, node `i` (row-major).
    #[serde(skip)]
    pub values: Vec<f64>,
    pub scheme: String,
    pub stability: StabilityReport,
}

impl FDSolution {
    pub fn nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let k = self.nodes();
        &self.values[n * k..(n + 1) * k]
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        node_coords(i, &self.shape, &self.lo, &self.h)
    }

    fn space_interp(&self, level: &[f64], x: &[f64]) -> f64 {
        let d = self.shape.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for m in 0..d {
            let u = ((x[m] - self.lo[m]) / self.h[m]).clamp(0.0, (self.shape[m] - 1) as f64);
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
                total += w * level[idx];
            }
        }
        total
    }

    /// Multilinear in space, linear in time.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let nt = self.times.len() - 1;
        let dt = self.times[1] - self.times[0];
        let u = (t / dt).clamp(0.0, nt as f64);
        let n = (u.floor() as usize).min(nt - 1);
        let f = u - n as f64;
        let a = self.space_interp(self.level(n), x);
        if f == 0.0 {
            return a;
        }
        (1.0 - f) * a + f * self.space_interp(self.level(n + 1), x)
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

/// Stencil of `L_t` at one interior node: `(offset, weight)` pairs.
fn stencil(spec: &ProblemSpec, t: f64, x: &[f64], h: &[f64], strides: &[isize], a: &mut [f64], b: &mut [f64], out: &mut Vec<(isize, f64)>) {
    let d = h.len();
    spec.coeffs.diffusion_matrix(t, x, a);
    spec.coeffs.drift(t, x, b);
    out.clear();
    let mut diag = 0.0;
    for m in 0..d {
        let c2 = 0.5 * a[m * d + m] / (h[m] * h[m]);
        let c1 = b[m] / (2.0 * h[m]);
        diag -= 2.0 * c2;
        out.push((strides[m], c2 + c1));
        out.push((-strides[m], c2 - c1));
        for q in m + 1..d {
            let c = a[m * d + q] / (4.0 * h[m] * h[q]);
            out.push((strides[m] + strides[q], c));
            out.push((-strides[m] - strides[q], c));
            out.push((strides[m] - strides[q], -c));
            out.push((-strides[m] + strides[q], -c));
        }
    }
    out.push((0, diag));
}

/// Solves on `[0, T] x D` with `mesh.n_time` steps up to `t_end`.
pub fn fd_solve(spec: &ProblemSpec, potential: &dyn NoiseField, t_end: f64, mesh: &FDMesh) -> Result<FDSolution> {
    let (lo, hi) = match &spec.domain {
        DomainSpec::Hyperrectangle { lo, hi } => (lo.clone(), hi.clone()),
        DomainSpec::Ball { .. } => return Err(Error::NonRectangularDomain),
    };
    let d = lo.len();
    if d > 2 {
        return Err(Error::InvalidConfig("finite differences are limited to d <= 2".into()));
    }
    if mesh.n_space < 3 || mesh.n_time < 1 || !(t_end > 0.0) {
        return Err(Error::DegenerateGrid(format!("mesh {mesh:?} with t_end = {t_end}")));
    }
    let h: Vec<f64> = (0..d).map(|m| (hi[m] - lo[m]) / mesh.n_space as f64).collect();
    let shape = vec![mesh.n_space + 1; d];
    let nodes: usize = shape.iter().product();
    let strides_u: Vec<usize> = (0..d).map(|m| shape[m + 1..].iter().product()).collect();
    let strides: Vec<isize> = strides_u.iter().map(|&s| s as isize).collect();
    let dt = t_end / mesh.n_time as f64;
    let coords: Vec<Vec<f64>> = (0..nodes).map(|i| node_coords(i, &shape, &lo, &h)).collect();
    let on_boundary: Vec<bool> = (0..nodes)
        .map(|i| {
            let mut rem = i;
            let mut edge = false;
            for m in (0..d).rev() {
                let k = rem % shape[m];
                rem /= shape[m];
                edge |= k == 0 || k == shape[m] - 1;
            }
            edge
        })
        .collect();
    let interior: Vec<usize> = (0..nodes).filter(|&i| !on_boundary[i]).collect();
    let mut pos = vec![usize::MAX; nodes];
    for (k, &i) in interior.iter().enumerate() {
        pos[i] = k;
    }
    let ni = interior.len();

    // stability survey over the space-time mesh at midpoint times
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut diffusion_number: f64 = 0.0;
    let mut peclet: f64 = 0.0;
    let survey_times = [0.5 * dt, 0.5 * t_end, t_end - 0.5 * dt];
    for &t in &survey_times {
        for &i in &interior {
            spec.coeffs.diffusion_matrix(t, &coords[i], &mut a);
            spec.coeffs.drift(t, &coords[i], &mut b);
            let mut s = 0.0;
            for m in 0..d {
                s += a[m * d + m] / (h[m] * h[m]);
                peclet = peclet.max(b[m].abs() * h[m] / a[m * d + m]);
            }
            diffusion_number = diffusion_number.max(dt * s);
        }
    }
    if peclet > 2.0 {
        return Err(Error::StabilityViolation(format!("cell Peclet number {peclet:.3} > 2: centered drift stencil is not monotone; refine the mesh")));
    }
    let (theta_requested, theta) = match mesh.theta {
        ThetaPolicy::Fixed(th) => {
            if !(0.5..=1.0).contains(&th) {
                return Err(Error::StabilityViolation(format!("theta = {th} outside [1/2, 1]")));
            }
            (Some(th), th)
        }
        ThetaPolicy::Auto => (None, if 0.5 * diffusion_number <= 1.0 { 0.5 } else { 1.0 }),
    };
    let max_principle = (1.0 - theta) * diffusion_number <= 1.0;
    let stability =
        StabilityReport { dt, h_min: h.iter().copied().fold(f64::INFINITY, f64::min), diffusion_number, cell_peclet: peclet, theta_requested, theta_used: theta, max_principle };

    let f = &spec.data.initial;
    let g = &spec.data.boundary;
    let mut values = Vec::with_capacity((mesh.n_time + 1) * nodes);
    let mut u: Vec<f64> = (0..nodes).map(|i| if on_boundary[i] { g(0.0, &coords[i]) } else { f(&coords[i]) }).collect();
    values.extend_from_slice(&u);

    let bw = strides_u.iter().sum::<usize>();
    // with time-independent coefficients the stencils and the factor are built once
    let autonomous = spec.coeffs.is_autonomous();
    let mut stencils: Vec<Vec<(isize, f64)>> = Vec::new();
    let mut band_lu: Option<BandLu> = None;
    let mut st = Vec::new();
    let mut rhs = vec![0.0; ni];
    let mut half = vec![0.0; ni];
    for n in 0..mesh.n_time {
        let (t0, t1) = (n as f64 * dt, (n + 1) as f64 * dt);
        let tm = 0.5 * (t0 + t1);
        for (k, &i) in interior.iter().enumerate() {
            half[k] = (0.5 * dt * potential.eval(tm, &coords[i])?).exp();
            u[i] *= half[k];
        }
        let g1: Vec<f64> = (0..nodes).map(|i| if on_boundary[i] { g(t1, &coords[i]) } else { 0.0 }).collect();
        let rebuild = !autonomous || stencils.is_empty();
        if rebuild {
            stencils = interior
                .iter()
                .map(|&i| {
                    stencil(spec, tm, &coords[i], &h, &strides, &mut a, &mut b, &mut st);
                    st.clone()
                })
                .collect();
        }
        for (k, &i) in interior.iter().enumerate() {
            let mut lu = 0.0;
            let mut bnd = 0.0;
            for &(off, w) in &stencils[k] {
                let j = (i as isize + off) as usize;
                lu += w * u[j];
                if on_boundary[j] {
                    bnd += w * g1[j];
                }
            }
            rhs[k] = u[i] + (1.0 - theta) * dt * lu + theta * dt * bnd;
        }
        if d == 1 {
            let (mut lower, mut diag, mut upper) = (vec![0.0; ni], vec![0.0; ni], vec![0.0; ni]);
            for k in 0..ni {
                for &(off, w) in &stencils[k] {
                    match off {
                        0 => diag[k] = 1.0 - theta * dt * w,
                        -1 if k > 0 => lower[k] = -theta * dt * w,
                        1 if k + 1 < ni => upper[k] = -theta * dt * w,
                        _ => {}
                    }
                }
            }
            solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
        } else {
            if rebuild || band_lu.is_none() {
                let mut m = BandMatrix::zeros(ni, bw, bw);
                for k in 0..ni {
                    m.add(k, k, 1.0);
                    for &(off, w) in &stencils[k] {
                        let j = (interior[k] as isize + off) as usize;
                        if pos[j] != usize::MAX {
                            m.add(k, pos[j], -theta * dt * w);
                        }
                    }
                }
                band_lu = Some(m.factor()?);
            }
            band_lu.as_ref().expect("factor built above").solve_in_place(&mut rhs);
        }
        for (k, &i) in interior.iter().enumerate() {
            u[i] = rhs[k] * half[k];
        }
        for i in 0..nodes {
            if on_boundary[i] {
                u[i] = g1[i];
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::StabilityViolation(format!("non-finite value at step {}", n + 1)));
        }
        values.extend_from_slice(&u);
    }
    let times = (0..=mesh.n_time).map(|n| n as f64 * dt).collect();
    let scheme = format!("theta={theta} split-potential centered-{d}d");
    Ok(FDSolution { lo, h, shape, times, values, scheme, stability })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub fd_value: f64,
    pub fk_value: f64,
    pub rel_gap: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub rows: Vec<CrosscheckRow>,
    pub max_rel_gap: f64,
    pub fd_scheme: String,
    pub stability: StabilityReport,
}

impl CrosscheckReport {
    pub const CSV_HEADER: &'static str = "t,x,fd_value,fk_value,rel_gap,mc_se";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
                format!("{},{},{:.10e},{:.10e},{:.6e},{:.6e}", r.t, x.join(" "), r.fd_value, r.fk_value, r.rel_gap, r.mc_se)
            })
            .collect()
    }
}

/// FD and fixed-noise FK values at `points` for the same potential.
pub fn crosscheck(spec: &ProblemSpec, field: &dyn NoiseField, field_tag: &str, points: &[(f64, Vec<f64>)], budget: &Budget, mesh: &FDMesh) -> Result<CrosscheckReport> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("no crosscheck points".into()));
    }
    // the FD side has no counterpart of the path self-energy correction
    if spec.product != Product::Stratonovich {
        return Err(Error::InvalidConfig("crosscheck compares the pathwise equation; set product = \"stratonovich\"".into()));
    }
    let t_end = points.iter().map(|p| p.0).fold(0.0, f64::max);
    // the FD grid must land on t_end exactly; points at earlier times are
    // read by interpolation
    let fd = fd_solve(spec, field, t_end, mesh)?;
    let h_max = fd.h.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(points.len());
    for (t, x) in points {
        if spec.domain.signed_distance(x) < 3.0 * h_max {
            return Err(Error::InvalidConfig(format!("point {x:?} closer than three mesh cells to the boundary")));
        }
        let fd_value = fd.value_at(*t, x);
        let fk = solve_point_fixed_noise(spec, *t, x, field, field_tag, budget)?;
        rows.push(CrosscheckRow { t: *t, x: x.clone(), fd_value, fk_value: fk.value, rel_gap: (fk.value - fd_value).abs() / fd_value.abs(), mc_se: fk.std_error });
    }
    let max_rel_gap = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    Ok(CrosscheckReport { rows, max_rel_gap, fd_scheme: fd.scheme.clone(), stability: fd.stability })
}
