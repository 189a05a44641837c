//! Fractional kernels and the singular double-time quadrature
//! `∫∫ |r - s|^{2H0-2} prod_m |X^i_r - X^j_s|_m^{2H_m-2} dr ds`.
//!
//! The temporal factor is integrated exactly per grid cell through the
//! antiderivative `G(u) = |u|^b / (b (b - 1))`, `b = 2 H0`. The spatial factor
//! is frozen at cell-midpoint states and floored at `c_f sqrt(dt)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::HurstParams;
use crate::pathsim::KilledPath;

pub const DEFAULT_FLOOR_FACTOR: f64 = 0.1;

/// `H (2H - 1) |x|^{2H - 2}`; infinite at the origin.
pub fn phi(h: f64, x: f64) -> f64 {
    h * (2.0 * h - 1.0) * x.abs().powf(2.0 * h - 2.0)
}

/// `phi` with `|x|` floored at `floor`.
pub fn phi_floored(h: f64, x: f64, floor: f64) -> f64 {
    h * (2.0 * h - 1.0) * x.abs().max(floor).powf(2.0 * h - 2.0)
}

#[inline]
fn antiderivative(u: f64, b: f64) -> f64 {
    u.abs().powf(b) / (b * (b - 1.0))
}

/// `∫_a^b ∫_c^d |r - s|^{2H0-2} ds dr` in closed form.
pub fn cell_integral(a: f64, b: f64, c: f64, d: f64, h0: f64) -> f64 {
    let e = 2.0 * h0;
    antiderivative(b - c, e) + antiderivative(a - d, e) - antiderivative(a - c, e) - antiderivative(b - d, e)
}

/// Exact cell integrals of `|r - s|^{2H0-2}` over a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub grid: Vec<f64>,
    pub h0: f64,
    n: usize,
    w: Vec<f64>,
    floor: f64,
}

impl KernelWeights {
    /// Uniform grid with `n` cells on `[0, t]`.
    pub fn uniform(t: f64, n: usize, h0: f64) -> Result<Self> {
        if n == 0 || !(t > 0.0) {
            return Err(Error::DegenerateGrid(format!("uniform grid needs t > 0 and n >= 1, got t = {t}, n = {n}")));
        }
        let dt = t / n as f64;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        // Toeplitz: the weight depends only on |i - j|
        let band: Vec<f64> = (0..n).map(|k| cell_integral(k as f64 * dt, (k + 1) as f64 * dt, 0.0, dt, h0)).collect();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = band[i.abs_diff(j)];
            }
        }
        let floor = DEFAULT_FLOOR_FACTOR * dt.sqrt();
        Ok(Self { grid, h0, n, w, floor })
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn max_cell(&self) -> f64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Spatial floor `c_f sqrt(max cell width)`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn with_floor_factor(mut self, c_f: f64) -> Self {
        self.floor = c_f * self.max_cell().sqrt();
        self
    }

    fn check_path(&self, p: &KilledPath) -> Result<usize> {
        let m = p.active_cells();
        if m > self.n {
            return Err(Error::GridMismatch(format!("path has {m} active cells, weights cover {}", self.n)));
        }
        let dt = self.grid[1] - self.grid[0];
        if (p.dt - dt).abs() > 1e-9 * dt {
            return Err(Error::GridMismatch(format!("path step {} differs from weight grid step {dt}", p.dt)));
        }
        Ok(m)
    }
}

/// General grid; cells may have unequal widths.
pub fn temporal_weights(grid: &[f64], h0: f64) -> Result<KernelWeights> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::DegenerateGrid("time grid must be strictly increasing with at least one cell".into()));
    }
    let n = grid.len() - 1;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = cell_integral(grid[i], grid[i + 1], grid[j], grid[j + 1], h0);
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    let max_cell = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(KernelWeights { grid: grid.to_vec(), h0, n, w, floor: DEFAULT_FLOOR_FACTOR * max_cell.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FKExponent {
    pub value: f64,
    /// Cells in which at least one coordinate hit the spatial floor.
    pub clipped_cells: usize,
}

/// Midpoint states `(X_a + X_{a+1}) / 2` of the active cells, flattened.
pub fn midpoints(p: &KilledPath) -> Vec<f64> {
    let m = p.active_cells();
    let d = p.dim;
    let mut out = Vec::with_capacity(m * d);
    for a in 0..m {
        let (x, y) = (p.state(a), p.state(a + 1));
        out.extend(x.iter().zip(y).map(|(u, v)| 0.5 * (u + v)));
    }
    out
}

/// Spatial exponents `2 H_m - 2`.
pub(crate) fn spatial_exponents(hurst: &HurstParams) -> Vec<f64> {
    hurst.h_space.iter().map(|h| 2.0 * h - 2.0).collect()
}

#[inline]
pub(crate) fn spatial_factor(a: &[f64], b: &[f64], expo: &[f64], floor: f64, clipped: &mut bool) -> f64 {
    let mut f = 1.0;
    for m in 0..a.len() {
        let mut dx = (a[m] - b[m]).abs();
        if dx < floor {
            dx = floor;
            *clipped = true;
        }
        f *= dx.powf(expo[m]);
    }
    f
}

/// Energy between two sets of midpoints (rows from `mi`, columns from `mj`).
pub fn pair_energy_midpoints(mi: &[f64], mj: &[f64], dim: usize, hurst: &HurstParams, weights: &KernelWeights) -> FKExponent {
    let expo = spatial_exponents(hurst);
    let floor = weights.floor();
    let (ri, rj) = (mi.len() / dim, mj.len() / dim);
    let mut value = 0.0;
    let mut clipped_cells = 0;
    for a in 0..ri {
        let xa = &mi[a * dim..(a + 1) * dim];
        let row = weights.row(a);
        let mut acc = 0.0;
        for b in 0..rj {
            let mut clipped = false;
            acc += row[b] * spatial_factor(xa, &mj[b * dim..(b + 1) * dim], &expo, floor, &mut clipped);
            clipped_cells += usize::from(clipped);
        }
        value += acc;
    }
    FKExponent { value, clipped_cells }
}

/// Self-energy using the symmetry of the integrand.
pub fn self_energy_midpoints(mi: &[f64], dim: usize, hurst: &HurstParams, weights: &KernelWeights) -> FKExponent {
    let expo = spatial_exponents(hurst);
    let floor = weights.floor();
    let r = mi.len() / dim;
    let mut value = 0.0;
    let mut clipped_cells = 0;
    for a in 0..r {
        let xa = &mi[a * dim..(a + 1) * dim];
        let row = weights.row(a);
        // diagonal: the spatial factor always sits on the floor
        let mut clipped = false;
        let mut acc = 0.5 * row[a] * spatial_factor(xa, xa, &expo, floor, &mut clipped);
        clipped_cells += usize::from(clipped);
        for b in a + 1..r {
            let mut clipped = false;
            acc += row[b] * spatial_factor(xa, &mi[b * dim..(b + 1) * dim], &expo, floor, &mut clipped);
            clipped_cells += 2 * usize::from(clipped);
        }
        value += 2.0 * acc;
    }
    FKExponent { value, clipped_cells }
}

/// Discretized `∫_0^{t∧τ_i} ∫_0^{t∧τ_j} |r - s|^{2H0-2} prod_m |X^i_r - X^j_s|^{2H_m - 2}`.
pub fn pair_energy(pi: &KilledPath, pj: &KilledPath, hurst: &HurstParams, weights: &KernelWeights) -> Result<FKExponent> {
    if pi.dim != pj.dim || pi.dim != hurst.dim() {
        return Err(Error::DimensionMismatch { expected: hurst.dim(), got: pi.dim.max(pj.dim) });
    }
    weights.check_path(pi)?;
    weights.check_path(pj)?;
    let (mi, mj) = (midpoints(pi), midpoints(pj));
    if std::ptr::eq(pi, pj) {
        return Ok(self_energy_midpoints(&mi, pi.dim, hurst, weights));
    }
    Ok(pair_energy_midpoints(&mi, &mj, pi.dim, hurst, weights))
}

/// `(alpha_H / 2) * pair_energy(p, p)`: the Wick correction subtracted in the
/// Skorohod exponent.
pub fn wick_correction(p: &KilledPath, hurst: &HurstParams, weights: &KernelWeights) -> Result<f64> {
    Ok(0.5 * hurst.alpha() * pair_energy(p, p, hurst, weights)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn constant_path(x: Vec<f64>, n: usize, t: f64) -> KilledPath {
        let d = x.len();
        let states = (0..=n).flat_map(|_| x.clone()).collect();
        KilledPath { dim: d, dt: t / n as f64, n_steps: n, t_eval: t, states, exit: None, seed: 0 }
    }

    fn smooth_path(f: impl Fn(f64) -> f64, n: usize, t: f64) -> KilledPath {
        let dt = t / n as f64;
        KilledPath { dim: 1, dt, n_steps: n, t_eval: t, states: (0..=n).map(|i| f(i as f64 * dt)).collect(), exit: None, seed: 0 }
    }

    #[test]
    fn phi_values() {
        assert_relative_eq!(phi(0.75, 1.0), 0.375, epsilon = 1e-15);
        assert_relative_eq!(phi(0.75, 2.0), 0.265_165_042_944_955_3, epsilon = 1e-12);
        assert_eq!(phi(0.75, -2.0), phi(0.75, 2.0));
        assert!(phi(0.75, 0.0).is_infinite());
        assert!(phi_floored(0.75, 0.0, 0.01).is_finite());
    }

    #[test]
    fn cell_integral_matches_brute_force() {
        // midpoint rule on a fine grid, away from and across the diagonal
        let brute = |a: f64, b: f64, c: f64, d: f64, h0: f64| {
            let n = 2000;
            let (hr, hs) = ((b - a) / n as f64, (d - c) / n as f64);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let r = a + (i as f64 + 0.5) * hr;
                    let u = c + (j as f64 + 0.5) * hs;
                    s += (r - u).abs().powf(2.0 * h0 - 2.0);
                }
            }
            s * hr * hs
        };
        assert_relative_eq!(cell_integral(0.5, 0.7, 0.0, 0.1, 0.8), brute(0.5, 0.7, 0.0, 0.1, 0.8), max_relative = 1e-5);
        assert_relative_eq!(cell_integral(0.2, 0.3, 0.3, 0.5, 0.9), brute(0.2, 0.3, 0.3, 0.5, 0.9), max_relative = 1e-3);
        assert!(cell_integral(0.0, 0.1, 0.0, 0.1, 0.75) > 0.0);
    }

    #[test]
    fn uniform_total_is_closed_form() {
        for n in [1, 7, 100, 400] {
            let w = KernelWeights::uniform(1.0, n, 0.75).unwrap();
            assert_relative_eq!(w.total(), 8.0 / 3.0, max_relative = 1e-12);
        }
        let w = KernelWeights::uniform(2.0, 1, 0.8).unwrap();
        assert_relative_eq!(w.get(0, 0), 2f64.powf(1.6) / (0.8 * 0.6), max_relative = 1e-14);
        let w = KernelWeights::uniform(1.5, 50, 0.999).unwrap();
        assert_relative_eq!(w.total(), 1.5 * 1.5, max_relative = 0.01);
    }

    #[test]
    fn general_grid_matches_uniform() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let a = temporal_weights(&grid, 0.7).unwrap();
        let b = KernelWeights::uniform(1.0, 20, 0.7).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_relative_eq!(a.get(i, j), b.get(i, j), max_relative = 1e-9);
            }
        }
        assert!(matches!(temporal_weights(&[0.0, 0.5, 0.5], 0.7), Err(Error::DegenerateGrid(_))));
        assert!(matches!(temporal_weights(&[0.0], 0.7), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn constant_paths_reduce_to_temporal_total() {
        let h = HurstParams::isotropic(0.75, 0.75, 1);
        let w = KernelWeights::uniform(1.0, 64, 0.75).unwrap();
        let p = constant_path(vec![0.0], 64, 1.0);
        let q = constant_path(vec![1.0], 64, 1.0);
        assert_relative_eq!(pair_energy(&p, &q, &h, &w).unwrap().value, 8.0 / 3.0, max_relative = 1e-12);
        let q4 = constant_path(vec![4.0], 64, 1.0);
        assert_relative_eq!(pair_energy(&p, &q4, &h, &w).unwrap().value, 4.0 / 3.0, max_relative = 1e-12);
        let h2 = HurstParams::isotropic(0.75, 0.9, 2);
        let p2 = constant_path(vec![0.0, 0.0], 64, 1.0);
        let q2 = constant_path(vec![1.0, -1.0], 64, 1.0);
        assert_relative_eq!(pair_energy(&p2, &q2, &h2, &w).unwrap().value, 8.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn exit_truncates_the_integration_range() {
        let h = HurstParams::isotropic(0.75, 0.75, 1);
        let w = KernelWeights::uniform(1.0, 10, 0.75).unwrap();
        let mut p = constant_path(vec![0.0], 10, 1.0);
        p.states.truncate(1);
        p.exit = Some(crate::pathsim::ExitInfo { index: 0, time: 0.0, point: vec![0.0] });
        let q = constant_path(vec![1.0], 10, 1.0);
        assert_eq!(pair_energy(&p, &q, &h, &w).unwrap().value, 0.0);
        assert_eq!(wick_correction(&p, &h, &w).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let h = HurstParams::isotropic(0.75, 0.75, 1);
        let w = KernelWeights::uniform(1.0, 10, 0.75).unwrap();
        let p = constant_path(vec![0.0], 20, 1.0);
        assert!(matches!(pair_energy(&p, &p, &h, &w), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn self_energy_equals_full_double_sum() {
        let h = HurstParams::isotropic(0.8, 0.85, 1);
        let w = KernelWeights::uniform(1.0, 40, 0.8).unwrap();
        let p = smooth_path(|s| (3.0 * s).sin(), 40, 1.0);
        let mids = midpoints(&p);
        let fast = self_energy_midpoints(&mids, 1, &h, &w);
        let full = pair_energy_midpoints(&mids, &mids, 1, &h, &w);
        assert_relative_eq!(fast.value, full.value, max_relative = 1e-12);
        assert_eq!(fast.clipped_cells, full.clipped_cells);
        assert!(fast.clipped_cells >= 40);
        assert_relative_eq!(wick_correction(&p, &h, &w).unwrap(), 0.5 * h.alpha() * fast.value, max_relative = 1e-15);
    }

    #[test]
    fn refinement_converges_at_first_order_or_better() {
        let h = HurstParams::isotropic(0.75, 0.8, 1);
        let energy = |n: usize| {
            let w = KernelWeights::uniform(1.0, n, 0.75).unwrap();
            let p = smooth_path(|s| s.sin(), n, 1.0);
            let q = smooth_path(|s| 2.0 + s * s, n, 1.0);
            pair_energy(&p, &q, &h, &w).unwrap().value
        };
        let (e1, e2, e3) = (energy(50), energy(100), energy(200));
        let order = ((e1 - e2).abs() / (e2 - e3).abs()).log2();
        assert!(order >= 0.8, "order {order}");
    }

    proptest! {
        #[test]
        fn pair_energy_is_symmetric(seed in 0u64..1000, h in 0.6f64..0.95) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 16;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut p = constant_path(vec![0.0, 0.0], n, 1.0);
                for v in p.states.iter_mut() { *v = rng.random::<f64>(); }
                p
            };
            let (p, q) = (mk(&mut rng), mk(&mut rng));
            let hp = HurstParams::isotropic(h, h, 2);
            let w = KernelWeights::uniform(1.0, n, h).unwrap();
            let a = pair_energy(&p, &q, &hp, &w).unwrap();
            let b = pair_energy(&q, &p, &hp, &w).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value);
            prop_assert!(a.value > 0.0 && a.value.is_finite());
        }

        #[test]
        fn weights_symmetric_and_positive(n in 1usize..30, h0 in 0.55f64..0.99, t in 0.1f64..3.0) {
            let w = KernelWeights::uniform(t, n, h0).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(w.get(i, j) > 0.0 && w.get(i, j).is_finite());
                    prop_assert_eq!(w.get(i, j), w.get(j, i));
                }
            }
            let exact = t.powf(2.0 * h0) / (h0 * (2.0 * h0 - 1.0));
            prop_assert!((w.total() - exact).abs() <= 1e-9 * exact);
        }
    }
}
