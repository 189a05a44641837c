//! Mergeable accumulators, heavy-tail summaries and least-squares fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Welford accumulator; `merge` is Chan's pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Self { n, mean, m2 }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::default();
        for &x in xs {
            s.push(x);
        }
        s
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Median of `groups` contiguous block means.
pub fn median_of_means(xs: &[f64], groups: usize) -> f64 {
    let g = groups.clamp(1, xs.len().max(1));
    if xs.is_empty() {
        return f64::NAN;
    }
    let block = xs.len() / g;
    let mut means: Vec<f64> = (0..g)
        .map(|b| {
            let lo = b * block;
            let hi = if b + 1 == g { xs.len() } else { lo + block };
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    if g % 2 == 1 {
        means[g / 2]
    } else {
        0.5 * (means[g / 2 - 1] + means[g / 2])
    }
}

/// Grouped jackknife of `log(mean(xs))`: returns (estimate, standard error).
pub fn jackknife_log_mean(xs: &[f64], groups: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = xs.iter().sum();
    let est = (total / n as f64).ln();
    let g = groups.clamp(2, n.max(2));
    if n < 2 {
        return (est, 0.0);
    }
    let block = n / g;
    let mut leave_out = Vec::with_capacity(g);
    for b in 0..g {
        let lo = b * block;
        let hi = if b + 1 == g { n } else { lo + block };
        let s: f64 = xs[lo..hi].iter().sum();
        let rest = (n - (hi - lo)) as f64;
        leave_out.push(((total - s) / rest).ln());
    }
    let m = leave_out.iter().sum::<f64>() / g as f64;
    let var = leave_out.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (g as f64 - 1.0) / g as f64;
    (est, var.sqrt())
}

/// Result of an ordinary least-squares line fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r2: f64,
    /// Range of the regressor actually used.
    pub window: (f64, f64),
}

/// Fits `y = intercept + slope * x`. Needs at least two distinct `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<ExponentFit> {
    fit_line_weighted(x, y, &vec![1.0; x.len()])
}

/// Weighted least squares; `w` are inverse variances of the `y`. With unit
/// weights this is ordinary least squares.
pub fn fit_line_weighted(x: &[f64], y: &[f64], w: &[f64]) -> Option<ExponentFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n || w.iter().any(|v| !(*v >= 0.0)) {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(v, c)| c * (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().zip(w).map(|(v, c)| c * (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).zip(w).map(|((a, b), c)| c * (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = if n > 2 { (sse / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(ExponentFit { slope, intercept, stderr, r2, window: (lo, hi) })
}

/// Multiple regression with intercept: returns (coefficients incl. intercept
/// first, r²).
pub fn fit_linear_model(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let p = columns.len() + 1;
    if n < p {
        return None;
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &yv;
    let beta = xtx.lu().solve(&xty)?;
    let fitted = &x * &beta;
    let my = y.iter().sum::<f64>() / n as f64;
    let sse: f64 = (0..n).map(|i| (y[i] - fitted[i]).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Some((beta.iter().cloned().collect(), r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_fit_ignores_zero_weight_outlier() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 100.0];
        let f = fit_line_weighted(&x, &y, &[1.0, 2.0, 1.0, 0.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(fit_line_weighted(&x, &y, &[1.0, -1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(f.window, (0.0, 3.0));
    }

    #[test]
    fn linear_model_two_regressors() {
        let a = vec![0.0, 1.0, 0.0, 1.0, 2.0];
        let b = vec![0.0, 0.0, 1.0, 1.0, 3.0];
        let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 1.0 + 2.0 * u - 3.0 * v).collect();
        let (beta, r2) = fit_linear_model(&[a, b], &y).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-10);
        assert!((beta[1] - 2.0).abs() < 1e-10);
        assert!((beta[2] + 3.0).abs() < 1e-10);
        assert!(r2 > 0.999_999);
    }

    #[test]
    fn median_of_means_ignores_one_outlier_block() {
        let mut xs = vec![1.0; 90];
        xs.extend(vec![1e6; 10]);
        assert_eq!(median_of_means(&xs, 10), 1.0);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..60), split in 0usize..60) {
            let k = split.min(xs.len());
            let whole = RunningStats::from_slice(&xs);
            let merged = RunningStats::from_slice(&xs[..k]).merge(&RunningStats::from_slice(&xs[k..]));
            prop_assert_eq!(whole.n, merged.n);
            prop_assert!((whole.mean - merged.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
            prop_assert!((whole.m2 - merged.m2).abs() <= 1e-7 * (1.0 + whole.m2.abs()));
        }
    }
}
