use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hurst parameters of the noise: `h0` in time, `h_space[i]` along axis `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstParams {
    pub h0: f64,
    pub h_space: Vec<f64>,
}

impl HurstParams {
    pub fn new(h0: f64, h_space: Vec<f64>) -> Self {
        Self { h0, h_space }
    }

    /// Same Hurst index `h` along every spatial axis.
    pub fn isotropic(h0: f64, h: f64, d: usize) -> Self {
        Self { h0, h_space: vec![h; d] }
    }

    pub fn dim(&self) -> usize {
        self.h_space.len()
    }

    /// `2 H0 + sum(H_i) - d - 1`; admissible parameters make this positive.
    pub fn rho(&self) -> f64 {
        2.0 * self.h0 + self.h_space.iter().sum::<f64>() - self.dim() as f64 - 1.0
    }

    /// `H0(2H0-1) * prod H_i(2H_i-1)`, the constant in front of the
    /// conditional variance of the noise functional.
    pub fn alpha(&self) -> f64 {
        let k = |h: f64| h * (2.0 * h - 1.0);
        k(self.h0) * self.h_space.iter().map(|&h| k(h)).product::<f64>()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        validate_hurst(self, d)
    }
}

/// Checks every index lies in (1/2, 1) and the admissibility inequality.
pub fn validate_hurst(h: &HurstParams, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidConfig("spatial dimension must be at least 1".into()));
    }
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: h.dim() });
    }
    let in_range = |v: f64| v > 0.5 && v < 1.0;
    if !in_range(h.h0) {
        return Err(Error::HurstOutOfRange { name: "H0".into(), value: h.h0 });
    }
    for (i, &v) in h.h_space.iter().enumerate() {
        if !in_range(v) {
            return Err(Error::HurstOutOfRange { name: format!("H{}", i + 1), value: v });
        }
    }
    let rho = h.rho();
    if rho <= 0.0 {
        return Err(Error::AdmissibilityViolated { rho });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn admissible_pair() {
        let h = HurstParams::isotropic(0.8, 0.8, 1);
        assert!(validate_hurst(&h, 1).is_ok());
        assert!((h.rho() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_pair_reports_rho() {
        let h = HurstParams::isotropic(0.6, 0.6, 1);
        match validate_hurst(&h, 1) {
            Err(Error::AdmissibilityViolated { rho }) => assert!((rho + 0.2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn open_interval_boundary_rejected() {
        let h = HurstParams::new(0.5, vec![0.9]);
        assert!(matches!(validate_hurst(&h, 1), Err(Error::HurstOutOfRange { ref name, .. }) if name == "H0"));
        let h = HurstParams::new(0.9, vec![1.0]);
        assert!(matches!(validate_hurst(&h, 1), Err(Error::HurstOutOfRange { .. })));
    }

    #[test]
    fn dimension_must_match() {
        let h = HurstParams::isotropic(0.9, 0.9, 2);
        assert!(matches!(validate_hurst(&h, 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn alpha_is_product_of_phi_prefactors() {
        let h = HurstParams::isotropic(0.75, 0.75, 1);
        assert!((h.alpha() - 0.375 * 0.375).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn admissible_implies_positive_rho(h0 in 0.5001f64..0.9999, h1 in 0.5001f64..0.9999, h2 in 0.5001f64..0.9999) {
            let h = HurstParams::new(h0, vec![h1, h2]);
            if validate_hurst(&h, 2).is_ok() {
                prop_assert!(h.rho() > 0.0 && h.rho().is_finite());
                prop_assert!(h.alpha() > 0.0);
            }
        }
    }
}
