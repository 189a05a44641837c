//! Fractional Brownian sheet on tensor grids and its smoothed derivative.
//!
//! The sheet has covariance `R_{H0}(s, t) prod_i R_{H_i}(x_i, y_i)` with
//! `R_H(s, t) = (|s|^{2H} + |t|^{2H} - |t - s|^{2H}) / 2` (two-sided in
//! space). Samples are exact: one Cholesky factor per axis, applied to a
//! standard normal tensor by mode products.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;
use crate::model::{DomainSpec, HurstParams};
use crate::rng::stream_rng;

mod smoothed;
pub use smoothed::{
    aa_inner_product, pathwise_v_regularized, quadrature_nodes, smoothed_noise, DirectSmoothed, NoiseField, QuadNode, Smoother,
    TabulatedField, ZeroField,
};

/// Largest node count per axis accepted by the dense factorization.
pub const MAX_NODES_PER_AXIS: usize = 512;
/// Heat-kernel tails are cut at this many standard deviations.
pub const KERNEL_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MollifierParams {
    /// Variance of the spatial heat kernel `p_eps`.
    pub eps: f64,
    /// Width of the one-sided temporal box `delta^{-1} 1_[0, delta]`.
    pub delta: f64,
}

impl MollifierParams {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        let m = Self { eps, delta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.delta > 0.0 && self.eps.is_finite() && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("mollifier needs eps, delta > 0, got {} and {}", self.eps, self.delta)));
        }
        Ok(())
    }

    /// Spatial padding `6 sqrt(eps)` outside of which the kernel is dropped.
    pub fn pad(&self) -> f64 {
        KERNEL_CUTOFF * self.eps.sqrt()
    }

    pub fn halved(&self) -> Self {
        Self { eps: 0.5 * self.eps, delta: 0.5 * self.delta }
    }
}

/// Tensor grid: time nodes starting at 0, then one node vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetGrid {
    pub times: Vec<f64>,
    pub space: Vec<Vec<f64>>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl SheetGrid {
    /// `[0, horizon + delta]` in time and the bounding box of `domain` padded
    /// by `6 sqrt(eps)` in space.
    pub fn covering(domain: &DomainSpec, horizon: f64, m: &MollifierParams, time_nodes: usize, space_nodes: usize) -> Result<Self> {
        m.validate()?;
        if time_nodes < 2 || space_nodes < 2 {
            return Err(Error::DegenerateGrid("sheet grid needs at least two nodes per axis".into()));
        }
        let (lo, hi) = domain.bounding_box();
        let pad = m.pad();
        Ok(Self {
            times: linspace(0.0, horizon + m.delta, time_nodes),
            space: lo.iter().zip(&hi).map(|(a, b)| linspace(a - pad, b + pad, space_nodes)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.times.len()).chain(self.space.iter().map(Vec::len)).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        for (k, axis) in std::iter::once(&self.times).chain(&self.space).enumerate() {
            if axis.len() < 2 || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::DegenerateGrid(format!("axis {k} must be strictly increasing with two or more nodes")));
            }
            if axis.len() > MAX_NODES_PER_AXIS {
                return Err(Error::DegenerateGrid(format!("axis {k} has {} nodes, limit is {MAX_NODES_PER_AXIS}", axis.len())));
            }
        }
        if self.times[0] < 0.0 {
            return Err(Error::DegenerateGrid("sheet time nodes must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `(|s|^{2H} + |t|^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.abs().powf(e) + t.abs().powf(e) - (t - s).abs().powf(e))
}

/// Lower factor of the node covariance of one axis. Nodes at the origin
/// carry a zero row and column (the sheet vanishes there exactly).
fn axis_factor(nodes: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let live: Vec<usize> = (0..n).filter(|&i| nodes[i].abs() > 1e-14).collect();
    let cov = DMatrix::from_fn(live.len(), live.len(), |a, b| fbm_covariance(h, nodes[live[a]], nodes[live[b]]));
    let l = cholesky_with_jitter(&cov, 1e-12, 3)?;
    let mut full = DMatrix::zeros(n, n);
    for (a, &i) in live.iter().enumerate() {
        for (b, &j) in live.iter().enumerate().take(a + 1) {
            full[(i, j)] = l[(a, b)];
        }
    }
    Ok(full)
}

/// Applies `mat` (rows x shape[axis]) along `axis` of a row-major tensor.
pub(crate) fn mode_product(data: &[f64], shape: &[usize], axis: usize, mat: &DMatrix<f64>) -> (Vec<f64>, Vec<usize>) {
    let n_in = shape[axis];
    let n_out = mat.nrows();
    debug_assert_eq!(mat.ncols(), n_in);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        let src = &data[o * n_in * inner..(o + 1) * n_in * inner];
        let dst = &mut out[o * n_out * inner..(o + 1) * n_out * inner];
        for i in 0..n_out {
            let row = &mut dst[i * inner..(i + 1) * inner];
            for j in 0..n_in {
                let a = mat[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let col = &src[j * inner..(j + 1) * inner];
                for (r, c) in row.iter_mut().zip(col) {
                    *r += a * c;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = n_out;
    (out, new_shape)
}

/// First differences along every axis: cell increments by inclusion–exclusion.
pub(crate) fn cell_increments(values: &[f64], shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut data = values.to_vec();
    let mut sh = shape.to_vec();
    for axis in 0..shape.len() {
        let n = sh[axis];
        let diff = DMatrix::from_fn(n - 1, n, |i, j| {
            if j == i + 1 {
                1.0
            } else if j == i {
                -1.0
            } else {
                0.0
            }
        });
        let (d, s) = mode_product(&data, &sh, axis, &diff);
        data = d;
        sh = s;
    }
    (data, sh)
}

/// Reusable per-axis factors for repeated sampling on one grid.
#[derive(Debug, Clone)]
pub struct SheetSampler {
    grid: SheetGrid,
    hurst: HurstParams,
    factors: Vec<DMatrix<f64>>,
}

impl SheetSampler {
    pub fn new(grid: SheetGrid, hurst: &HurstParams) -> Result<Self> {
        grid.validate()?;
        if hurst.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: hurst.dim() });
        }
        let mut factors = vec![axis_factor(&grid.times, hurst.h0)?];
        for (axis, &h) in grid.space.iter().zip(&hurst.h_space) {
            factors.push(axis_factor(axis, h)?);
        }
        Ok(Self { grid, hurst: hurst.clone(), factors })
    }

    pub fn grid(&self) -> &SheetGrid {
        &self.grid
    }

    pub fn sample(&self, seed: u64) -> SheetSample {
        let shape = self.grid.shape();
        let mut rng = stream_rng(seed, 0);
        let mut data: Vec<f64> = (0..self.grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut sh = shape.clone();
        for (axis, l) in self.factors.iter().enumerate() {
            let (d, s) = mode_product(&data, &sh, axis, l);
            data = d;
            sh = s;
        }
        SheetSample { grid: self.grid.clone(), values: data, hurst: self.hurst.clone(), seed }
    }

    /// Pulls a linear functional of the cell increments back to the standard
    /// normal vector behind `sample`: returns `u` with
    /// `sum_cells c * dW = u . Z` for every seed.
    pub fn pull_back(&self, cell_coef: &[f64]) -> Vec<f64> {
        let mut sh: Vec<usize> = self.grid.shape().iter().map(|n| n - 1).collect();
        let mut data = cell_coef.to_vec();
        for axis in 0..sh.len() {
            let n = sh[axis] + 1;
            // transpose of the first-difference operator
            let diff_t = DMatrix::from_fn(n, n - 1, |i, j| {
                if i == j + 1 {
                    1.0
                } else if i == j {
                    -1.0
                } else {
                    0.0
                }
            });
            let (d, s) = mode_product(&data, &sh, axis, &diff_t);
            data = d;
            sh = s;
        }
        for (axis, l) in self.factors.iter().enumerate() {
            let (d, s) = mode_product(&data, &sh, axis, &l.transpose());
            data = d;
            sh = s;
        }
        data
    }

    /// `u . Z` for the normal vector of `sample(seed)`, without forming the sheet.
    pub fn sample_functional(&self, pulled: &[f64], seed: u64) -> f64 {
        let mut rng = stream_rng(seed, 0);
        pulled.iter().map(|u| { let z: f64 = StandardNormal.sample(&mut rng); u * z }).sum::<f64>()
    }
}

/// One realization of the sheet at the grid nodes (row-major, time first).
#[derive(Debug, Clone, PartialEq)]
pub struct SheetSample {
    pub grid: SheetGrid,
    pub values: Vec<f64>,
    pub hurst: HurstParams,
    pub seed: u64,
}

const BLOB_MAGIC: &[u8; 8] = b"FKSHEET1";

impl SheetSample {
    pub fn zero(grid: SheetGrid, hurst: &HurstParams) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], hurst: hurst.clone(), seed: 0 }
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        let shape = self.grid.shape();
        let flat = idx.iter().zip(&shape).fold(0, |acc, (i, n)| acc * n + i);
        self.values[flat]
    }

    /// `a * self + b * other` on the same grid.
    pub fn combine(&self, a: f64, other: &SheetSample, b: f64) -> Result<SheetSample> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("sheets live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(SheetSample { grid: self.grid.clone(), values, hurst: self.hurst.clone(), seed: self.seed })
    }

    pub fn increments(&self) -> (Vec<f64>, Vec<usize>) {
        cell_increments(&self.values, &self.grid.shape())
    }

    /// Versioned little-endian blob: magic, dim, Hurst indices, seed, axis
    /// node vectors, values.
    pub fn write_blob<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BLOB_MAGIC)?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&self.hurst.h0.to_le_bytes())?;
        for h in &self.hurst.h_space {
            w.write_all(&h.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for axis in std::iter::once(&self.grid.times).chain(&self.grid.space) {
            w.write_all(&(axis.len() as u32).to_le_bytes())?;
            for v in axis {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_blob<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::ConfigParse(format!("sheet blob: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != BLOB_MAGIC {
            return Err(Error::ConfigParse("sheet blob: bad magic or version".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        let f64_of = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(bad)?;
            Ok(f64::from_le_bytes(b))
        };
        r.read_exact(&mut b4).map_err(bad)?;
        let d = u32::from_le_bytes(b4) as usize;
        let h0 = f64_of(&mut r)?;
        let h_space = (0..d).map(|_| f64_of(&mut r)).collect::<Result<Vec<_>>>()?;
        r.read_exact(&mut b8).map_err(bad)?;
        let seed = u64::from_le_bytes(b8);
        let mut axes = Vec::with_capacity(d + 1);
        for _ in 0..=d {
            r.read_exact(&mut b4).map_err(bad)?;
            let n = u32::from_le_bytes(b4) as usize;
            axes.push((0..n).map(|_| f64_of(&mut r)).collect::<Result<Vec<_>>>()?);
        }
        let times = axes.remove(0);
        let grid = SheetGrid { times, space: axes };
        let values = (0..grid.len()).map(|_| f64_of(&mut r)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values, hurst: HurstParams::new(h0, h_space), seed })
    }
}

pub fn sample_sheet(grid: SheetGrid, hurst: &HurstParams, seed: u64) -> Result<SheetSample> {
    Ok(SheetSampler::new(grid, hurst)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RunningStats;
    use approx::assert_relative_eq;

    fn small_grid() -> SheetGrid {
        SheetGrid { times: vec![0.0, 0.5, 1.0, 2.0], space: vec![vec![-1.0, 0.0, 1.0, 1.5]] }
    }

    #[test]
    fn covariance_hand_values() {
        assert_relative_eq!(fbm_covariance(0.75, 1.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(fbm_covariance(0.75, 1.0, 2.0), 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(fbm_covariance(0.5, 1.0, 2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sheet_vanishes_on_coordinate_zero() {
        let s = sample_sheet(small_grid(), &HurstParams::isotropic(0.75, 0.75, 1), 3).unwrap();
        for j in 0..4 {
            assert_eq!(s.value(&[0, j]), 0.0);
        }
        for i in 0..4 {
            assert_eq!(s.value(&[i, 1]), 0.0);
        }
        assert_ne!(s.value(&[2, 2]), 0.0);
    }

    #[test]
    fn empirical_covariance_matches_product_form() {
        let sampler = SheetSampler::new(small_grid(), &HurstParams::isotropic(0.75, 0.75, 1)).unwrap();
        let n = 20_000;
        let (mut v11, mut c) = (RunningStats::default(), RunningStats::default());
        for k in 0..n {
            let s = sampler.sample(k);
            let (a, b) = (s.value(&[2, 2]), s.value(&[3, 2]));
            v11.push(a * a);
            c.push(a * b);
        }
        assert!((v11.mean - 1.0).abs() < 3.0 * v11.std_error(), "{v11:?}");
        assert!((c.mean - 2f64.sqrt()).abs() < 3.0 * c.std_error(), "{c:?}");
    }

    #[test]
    fn increments_by_inclusion_exclusion() {
        let s = sample_sheet(small_grid(), &HurstParams::isotropic(0.75, 0.8, 1), 11).unwrap();
        let (inc, shape) = s.increments();
        assert_eq!(shape, vec![3, 3]);
        let direct = s.value(&[2, 3]) - s.value(&[1, 3]) - s.value(&[2, 2]) + s.value(&[1, 2]);
        assert_relative_eq!(inc[1 * 3 + 2], direct, epsilon = 1e-14);
        let total: f64 = inc.iter().sum();
        let corner = s.value(&[3, 3]) - s.value(&[0, 3]) - s.value(&[3, 0]) + s.value(&[0, 0]);
        assert_relative_eq!(total, corner, epsilon = 1e-12);
    }

    #[test]
    fn blob_round_trip() {
        let grid = SheetGrid { times: vec![0.0, 0.5, 1.0], space: vec![vec![-1.0, 0.5], vec![0.1, 0.2, 0.4]] };
        let s = sample_sheet(grid, &HurstParams::new(0.8, vec![0.7, 0.9]), 77).unwrap();
        let mut buf = Vec::new();
        s.write_blob(&mut buf).unwrap();
        let back = SheetSample::read_blob(&buf[..]).unwrap();
        assert_eq!(back, s);
        buf[7] = b'9';
        assert!(SheetSample::read_blob(&buf[..]).is_err());
    }

    #[test]
    fn oversize_grid_is_rejected() {
        let grid = SheetGrid { times: linspace(0.0, 1.0, MAX_NODES_PER_AXIS + 1), space: vec![vec![0.0, 1.0]] };
        assert!(matches!(SheetSampler::new(grid, &HurstParams::isotropic(0.75, 0.75, 1)), Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn sampling_is_deterministic_and_linear() {
        let sampler = SheetSampler::new(small_grid(), &HurstParams::isotropic(0.7, 0.9, 1)).unwrap();
        assert_eq!(sampler.sample(5), sampler.sample(5));
        let (a, b) = (sampler.sample(1), sampler.sample(2));
        let c = a.combine(2.0, &b, -0.5).unwrap();
        assert_relative_eq!(c.value(&[3, 3]), 2.0 * a.value(&[3, 3]) - 0.5 * b.value(&[3, 3]), epsilon = 1e-14);
    }
}
