//! Problem definition: Hurst parameters, domains, coefficients, data and
//! their validation.

pub mod coeffs;
pub mod config;
pub mod domain;
pub mod extension;
pub mod hurst;
pub mod problem;

pub use coeffs::{CoefficientField, DiffusionPreset, DriftPreset, VectorFn};
pub use config::{short_digest, BudgetConfig, NoiseConfig, PointConfig, ProblemConfig};
pub use domain::{DomainSpec, Location};
pub use extension::{extend_coefficient, extend_field, ExtendedField, Modulus, ScalarFn};
pub use hurst::{validate_hurst, HurstParams};
pub use problem::{BoundaryData, Product, ProblemSpec};
