//! TOML problem files.
//!
//! ```toml
//! horizon = 1.0
//! product = "skorohod"              # or "stratonovich"
//!
//! [domain]
//! kind = "hyperrectangle"           # or "ball" with `center`, `radius`
//! lo = [-1.0]
//! hi = [1.0]
//!
//! [hurst]
//! h0 = 0.8
//! h_space = [0.8]
//!
//! [drift]
//! preset = "trig_t"                 # zero | constant | affine | trig_x | trig_t | poly_t | tabulated_t
//! amplitude = [0.1]
//! frequency = 1.0
//!
//! [diffusion]
//! preset = "identity"               # identity | scaled_identity | constant | poly_t | trig_x | tabulated_t
//!
//! [initial]
//! preset = "constant"               # constant | linear | sine_bump
//! value = 1.0
//!
//! [boundary]                        # optional, defaults to the trace of `initial`
//! preset = "constant"
//! value = 1.0
//!
//! [budget]                          # all optional
//! paths = 100000
//! steps = 200
//! seed = 42
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::coeffs::{CoefficientField, DiffusionPreset, DriftPreset};
use super::domain::DomainSpec;
use super::hurst::HurstParams;
use super::problem::{BoundaryData, Product, ProblemSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialPreset {
    Constant { value: f64 },
    /// `f(x) = slope . x + offset`.
    Linear { slope: Vec<f64>, offset: f64 },
    /// `base + amplitude * bump(x)` with a bump vanishing on the boundary:
    /// `prod_i sin(pi (x_i - lo_i)/(hi_i - lo_i))` on boxes,
    /// `cos(pi |x - c| / (2 r))` on balls.
    SineBump { base: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum BoundaryPreset {
    Constant { value: f64 },
    Linear { slope: Vec<f64>, offset: f64 },
    /// `g(t, x) = value + rate * t`.
    LinearInTime { value: f64, rate: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub floor_factor: Option<f64>,
    pub exit_detection: Option<crate::pathsim::ExitDetection>,
}

/// Optional evaluation point for `solve`-style runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Mollifier and sheet resolution for fixed-noise runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_time_nodes")]
    pub time_nodes: usize,
    #[serde(default = "default_space_nodes")]
    pub space_nodes: usize,
    pub seed: Option<u64>,
}

fn default_time_nodes() -> usize {
    64
}

fn default_space_nodes() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: f64,
    pub product: Product,
    pub domain: DomainSpec,
    pub hurst: HurstParams,
    pub drift: DriftPreset,
    pub diffusion: DiffusionPreset,
    pub initial: InitialPreset,
    #[serde(default)]
    pub boundary: Option<BoundaryPreset>,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub point: Option<PointConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

impl ProblemConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form (first 16 hex digits).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        short_digest(json.as_bytes())
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        self.domain.validate()?;
        let d = self.domain.dim();
        let coeffs = CoefficientField::from_presets(d, &self.drift, &self.diffusion, self.horizon)?;
        let data = build_data(&self.domain, &self.initial, self.boundary.as_ref())?;
        let mut spec = ProblemSpec::new(self.domain.clone(), coeffs, self.hurst.clone(), data, self.product, self.horizon);
        spec.source_digest = Some(self.digest());
        spec.validate()?;
        Ok(spec)
    }
}

pub fn short_digest(bytes: &[u8]) -> String {
    let h = Sha256::digest(bytes);
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn build_data(domain: &DomainSpec, initial: &InitialPreset, boundary: Option<&BoundaryPreset>) -> Result<BoundaryData> {
    let d = domain.dim();
    let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = match initial {
        InitialPreset::Constant { value } => {
            let v = *value;
            Arc::new(move |_| v)
        }
        InitialPreset::Linear { slope, offset } => {
            if slope.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: slope.len() });
            }
            let (s, o) = (slope.clone(), *offset);
            Arc::new(move |x| o + s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        }
        InitialPreset::SineBump { base, amplitude } => {
            let (b, a) = (*base, *amplitude);
            match domain.clone() {
                DomainSpec::Hyperrectangle { lo, hi } => Arc::new(move |x| {
                    let bump: f64 = (0..lo.len())
                        .map(|m| (std::f64::consts::PI * (x[m] - lo[m]) / (hi[m] - lo[m])).sin().max(0.0))
                        .product();
                    b + a * bump
                }),
                DomainSpec::Ball { center, radius } => Arc::new(move |x| {
                    let r = super::domain::norm_diff(x, &center);
                    b + a * (std::f64::consts::FRAC_PI_2 * r / radius).cos().max(0.0)
                }),
            }
        }
    };
    let g: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync> = match boundary {
        Some(BoundaryPreset::Constant { value }) => {
            let v = *value;
            Arc::new(move |_, _| v)
        }
        Some(BoundaryPreset::Linear { slope, offset }) => {
            if slope.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: slope.len() });
            }
            let (s, o) = (slope.clone(), *offset);
            Arc::new(move |_, x| o + s.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        }
        Some(BoundaryPreset::LinearInTime { value, rate }) => {
            let (v, r) = (*value, *rate);
            Arc::new(move |t, _| v + r * t)
        }
        None => {
            let f2 = f.clone();
            Arc::new(move |_, x| f2(x))
        }
    };
    Ok(BoundaryData { initial: f, boundary: g })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
horizon = 1.0
product = "skorohod"

[domain]
kind = "hyperrectangle"
lo = [-1.0]
hi = [1.0]

[hurst]
h0 = 0.8
h_space = [0.8]

[drift]
preset = "trig_t"
amplitude = [0.1]
frequency = 1.0

[diffusion]
preset = "identity"

[initial]
preset = "sine_bump"
base = 1.0
amplitude = 0.5

[budget]
paths = 1000
steps = 50
"#;

    #[test]
    fn sample_parses_and_builds() {
        let cfg = ProblemConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.budget.paths, Some(1000));
        let spec = cfg.build().unwrap();
        assert_eq!(spec.dim(), 1);
        assert!(((spec.data.initial)(&[0.0]) - 1.5).abs() < 1e-12);
        assert!(((spec.data.boundary)(0.3, &[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = ProblemConfig::from_toml_str(SAMPLE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.horizon = 2.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }

    #[test]
    fn round_trip_through_toml() {
        let a = ProblemConfig::from_toml_str(SAMPLE).unwrap();
        let b = ProblemConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_hurst_fails_build() {
        let s = SAMPLE.replace("h0 = 0.8", "h0 = 0.55").replace("h_space = [0.8]", "h_space = [0.55]");
        let cfg = ProblemConfig::from_toml_str(&s).unwrap();
        assert!(matches!(cfg.build(), Err(Error::AdmissibilityViolated { .. })));
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let s = format!("{SAMPLE}\nbogus = 3\n");
        assert!(matches!(ProblemConfig::from_toml_str(&s), Err(Error::ConfigParse(_))));
    }
}
