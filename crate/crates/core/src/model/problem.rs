use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coeffs::CoefficientField;
use super::domain::{DomainSpec, Location};
use super::extension::extend_field;
use super::hurst::{validate_hurst, HurstParams};
use crate::error::{Error, Result};

/// How `u * W` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    /// Pathwise product.
    Stratonovich,
    /// Wick product (Skorohod integral in the mild form).
    Skorohod,
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stratonovich => "stratonovich",
            Self::Skorohod => "skorohod",
        })
    }
}

pub type InitialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Initial data `f` on `D` and boundary data `g` on `[0, T] x dD`; together
/// they form the function `h` sampled by the representation at `t ∧ tau`.
#[derive(Clone)]
pub struct BoundaryData {
    pub initial: InitialFn,
    pub boundary: BoundaryFn,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryData { .. }")
    }
}

impl BoundaryData {
    pub fn constant(c: f64) -> Self {
        Self { initial: Arc::new(move |_| c), boundary: Arc::new(move |_, _| c) }
    }

    /// `h(t, x)`: `f(x)` in the interior, `g(t, x)` on the boundary.
    pub fn h(&self, t: f64, x: &[f64], on_boundary: bool) -> f64 {
        if on_boundary {
            (self.boundary)(t, x)
        } else {
            (self.initial)(x)
        }
    }

    /// Pointwise scaled copy; handy for monotonicity checks.
    pub fn scaled(&self, a: f64, shift: f64) -> Self {
        let (f, g) = (self.initial.clone(), self.boundary.clone());
        Self {
            initial: Arc::new(move |x| a * f(x) + shift),
            boundary: Arc::new(move |t, x| a * g(t, x) + shift),
        }
    }
}

/// Full problem: domain, coefficients, noise, data and product type.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub coeffs: CoefficientField,
    pub hurst: HurstParams,
    pub data: BoundaryData,
    pub product: Product,
    pub horizon: f64,
    /// Mesh nodes per axis used when extending the coefficients off `D`.
    pub extension_resolution: usize,
    /// Digest of the configuration this problem was built from, if any.
    pub source_digest: Option<String>,
}

impl ProblemSpec {
    pub fn new(domain: DomainSpec, coeffs: CoefficientField, hurst: HurstParams, data: BoundaryData, product: Product, horizon: f64) -> Self {
        Self { domain, coeffs, hurst, data, product, horizon, extension_resolution: 65, source_digest: None }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn with_product(&self, product: Product) -> Self {
        let mut s = self.clone();
        s.product = product;
        s
    }

    pub fn with_data(&self, data: BoundaryData) -> Self {
        let mut s = self.clone();
        s.data = data;
        s
    }

    /// Checks Hurst admissibility, dimensions, horizon and the compatibility
    /// `g(0, x) = f(x)` at sample points of the boundary.
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let d = self.dim();
        validate_hurst(&self.hurst, d)?;
        if self.coeffs.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.coeffs.dim() });
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.coeffs.ellipticity_delta > 0.0) {
            return Err(Error::InvalidConfig("coefficients must declare a positive ellipticity constant".into()));
        }
        self.check_compatibility(1e-9)
    }

    fn check_compatibility(&self, tol: f64) -> Result<()> {
        let per_axis = if self.dim() <= 2 { 9 } else { 5 };
        let mesh = self.domain.mesh(per_axis);
        let btol = self.domain.default_tol();
        for x in mesh {
            let p = match self.domain.classify(&x, btol) {
                Location::Boundary => x,
                _ => self.domain.project_to_boundary(&x),
            };
            let f = (self.data.initial)(&p);
            let g = (self.data.boundary)(0.0, &p);
            if !f.is_finite() || !g.is_finite() {
                return Err(Error::InvalidConfig(format!("data not finite at {p:?}")));
            }
            if (f - g).abs() > tol * (1.0 + f.abs()) {
                return Err(Error::InvalidConfig(format!("compatibility g(0,x) = f(x) fails at {p:?}: g = {g}, f = {f}")));
            }
        }
        Ok(())
    }

    /// Coefficients as seen by the time-reversed diffusion: extended off `D`
    /// and reflected evenly in time.
    pub fn simulation_coefficients(&self) -> Result<CoefficientField> {
        let needs_extension = !(self.coeffs.constant_diffusion().is_some()
            && (self.coeffs.has_zero_drift() || self.coeffs.lipschitz_const == 0.0));
        let c = if needs_extension {
            extend_field(&self.coeffs, &self.domain, self.extension_resolution)?
        } else {
            self.coeffs.clone()
        };
        Ok(c.time_reflect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm_interval() -> ProblemSpec {
        ProblemSpec::new(
            DomainSpec::interval(-1.0, 1.0).unwrap(),
            CoefficientField::brownian(1),
            HurstParams::isotropic(0.8, 0.8, 1),
            BoundaryData::constant(1.0),
            Product::Skorohod,
            1.0,
        )
    }

    #[test]
    fn valid_problem_passes() {
        bm_interval().validate().unwrap();
    }

    #[test]
    fn incompatible_data_rejected() {
        let mut p = bm_interval();
        p.data = BoundaryData { initial: Arc::new(|_| 2.0), boundary: Arc::new(|_, _| 1.0) };
        assert!(matches!(p.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn bad_hurst_propagates() {
        let mut p = bm_interval();
        p.hurst = HurstParams::isotropic(0.6, 0.6, 1);
        assert!(matches!(p.validate(), Err(Error::AdmissibilityViolated { .. })));
    }

    #[test]
    fn h_switches_on_boundary_flag() {
        let data = BoundaryData { initial: Arc::new(|x| x[0]), boundary: Arc::new(|t, _| 10.0 + t) };
        assert_eq!(data.h(0.5, &[0.2], false), 0.2);
        assert_eq!(data.h(0.5, &[1.0], true), 10.5);
    }
}
