//! Infimal-convolution extension of a field from `D` to all of `R^d`:
//! `f~(t, x) = inf_{y in D} { f(t, y) + omega(|x - y|) }`, evaluated over a
//! finite mesh of `D`. The mesh infimum is an upper bound of the exact one
//! and decreases to it under refinement.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coeffs::CoefficientField;
use super::domain::{norm_diff, DomainSpec, Location};
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Modulus of continuity `omega(r) = k r^alpha`, `alpha` in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub k: f64,
    pub alpha: f64,
}

impl Modulus {
    pub fn lipschitz(k: f64) -> Self {
        Self { k, alpha: 1.0 }
    }

    pub fn holder(k: f64, alpha: f64) -> Self {
        Self { k, alpha }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if self.alpha == 1.0 {
            self.k * r
        } else {
            self.k * r.powf(self.alpha)
        }
    }
}

/// A field extended off `D`. Inside the closed domain it returns the
/// original values.
#[derive(Clone)]
pub struct ExtendedField {
    f: ScalarFn,
    omega: Modulus,
    domain: DomainSpec,
    mesh: Arc<Vec<Vec<f64>>>,
    tol: f64,
}

impl ExtendedField {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        if self.domain.classify(x, self.tol) != Location::Exterior {
            return (self.f)(t, x);
        }
        self.mesh
            .iter()
            .map(|y| (self.f)(t, y) + self.omega.eval(norm_diff(x, y)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mesh_len(&self) -> usize {
        self.mesh.len()
    }
}

/// Extends `f` (with modulus `omega` on `D`) using a uniform mesh with
/// `per_axis` nodes per bounding-box axis.
pub fn extend_coefficient(f: ScalarFn, omega: Modulus, domain: &DomainSpec, per_axis: usize) -> Result<ExtendedField> {
    let mesh = domain.mesh(per_axis);
    if mesh.is_empty() {
        return Err(Error::EmptyDomainMesh);
    }
    Ok(ExtendedField { f, omega, domain: domain.clone(), mesh: Arc::new(mesh), tol: domain.default_tol() })
}

/// Extends every drift and diffusion component of `coeffs` off `domain`
/// with the Lipschitz modulus `K1 r`. Constant diffusions are left as-is.
pub fn extend_field(coeffs: &CoefficientField, domain: &DomainSpec, per_axis: usize) -> Result<CoefficientField> {
    let mesh = Arc::new(domain.mesh(per_axis));
    if mesh.is_empty() {
        return Err(Error::EmptyDomainMesh);
    }
    let k = if coeffs.lipschitz_const.is_finite() { coeffs.lipschitz_const } else { 0.0 };
    let omega = Modulus::lipschitz(k);
    let d = coeffs.dim();
    let tol = domain.default_tol();

    let make = |inner: super::coeffs::VectorFn, width: usize| -> super::coeffs::VectorFn {
        let mesh = mesh.clone();
        let dom = domain.clone();
        Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
            if dom.classify(x, tol) != Location::Exterior {
                inner(t, x, out);
                return;
            }
            let mut buf = vec![0.0; width];
            out.iter_mut().for_each(|v| *v = f64::INFINITY);
            for y in mesh.iter() {
                inner(t, y, &mut buf);
                let w = omega.eval(norm_diff(x, y));
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o = o.min(b + w);
                }
            }
        })
    };
    let drift = make(coeffs.raw_drift(), d);
    let diffusion = make(coeffs.raw_diffusion(), d * d);
    Ok(coeffs.with_functions(drift, diffusion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_on_unit_interval_extends_to_abs() {
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        let f: ScalarFn = Arc::new(|_, x| x[0]);
        let e = extend_coefficient(f, Modulus::lipschitz(1.0), &d, 101).unwrap();
        assert!((e.eval(0.0, &[-1.0]) - 1.0).abs() < 1e-12);
        assert!((e.eval(0.0, &[2.0]) - 2.0).abs() < 1e-12);
        assert!((e.eval(0.0, &[0.37]) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn constant_grows_with_distance_only() {
        let d = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let f: ScalarFn = Arc::new(|_, _| 2.5);
        let e = extend_coefficient(f, Modulus::holder(3.0, 0.5), &d, 41).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.4], [1.0, 0.0]] {
            assert!((e.eval(1.0, &x) - 2.5).abs() < 1e-12, "{x:?}");
        }
        // outside: c + omega(dist(x, D)), from above on a finite mesh
        for x in [[3.0f64, -4.0], [0.9, 0.9]] {
            let dist = (x[0].hypot(x[1]) - 1.0).max(0.0);
            let v = e.eval(1.0, &x);
            assert!(v >= 2.5 + 3.0 * dist.sqrt() - 1e-12);
            assert!(v <= 2.5 + 3.0 * (dist + 0.05).sqrt(), "{x:?} {v}");
        }
    }

    #[test]
    fn empty_mesh_is_an_error() {
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        let f: ScalarFn = Arc::new(|_, x| x[0]);
        assert!(matches!(extend_coefficient(f, Modulus::lipschitz(1.0), &d, 0), Err(Error::EmptyDomainMesh)));
    }

    #[test]
    fn mesh_refinement_decreases_toward_exact() {
        // f(x) = sin(3x) on [0, 1], |f'| <= 3.
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        let f: ScalarFn = Arc::new(|_, x| (3.0 * x[0]).sin());
        let x = [1.7];
        let mut last = f64::INFINITY;
        for n in [3, 5, 9, 17, 33, 65, 129] {
            let v = extend_coefficient(f.clone(), Modulus::lipschitz(3.0), &d, n).unwrap().eval(0.0, &x);
            assert!(v <= last + 1e-12);
            last = v;
        }
        // Brute-force infimum on a very fine mesh.
        let fine = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|y| (3.0 * y).sin() + 3.0 * (1.7 - y))
            .fold(f64::INFINITY, f64::min);
        assert!((last - fine).abs() < 3.0 / 128.0);
    }

    #[test]
    fn extended_coefficients_agree_inside() {
        use crate::model::coeffs::{DiffusionPreset, DriftPreset};
        let dom = DomainSpec::interval(-1.0, 1.0).unwrap();
        let c = CoefficientField::from_presets(1, &DriftPreset::TrigX { amplitude: vec![0.5], frequency: 2.0, phase: 0.0 }, &DiffusionPreset::TrigX { base: 1.0, amplitude: 0.2, frequency: 1.0 }, 1.0).unwrap();
        let e = extend_field(&c, &dom, 201).unwrap();
        let (mut a, mut b) = ([0.0], [0.0]);
        c.drift(0.3, &[0.4], &mut a);
        e.drift(0.3, &[0.4], &mut b);
        assert_eq!(a, b);
        // Outside, the extension stays K1-Lipschitz against the boundary value.
        c.drift(0.3, &[1.0], &mut a);
        e.drift(0.3, &[1.5], &mut b);
        assert!((a[0] - b[0]).abs() <= c.lipschitz_const * 0.5 + 1e-9);
    }

    proptest! {
        #[test]
        fn extension_keeps_modulus(x in -3.0f64..4.0, y in -3.0f64..4.0) {
            let d = DomainSpec::interval(0.0, 1.0).unwrap();
            let f: ScalarFn = Arc::new(|_, x| (2.0 * x[0]).cos());
            let e = extend_coefficient(f, Modulus::lipschitz(2.0), &d, 201).unwrap();
            let (fx, fy) = (e.eval(0.0, &[x]), e.eval(0.0, &[y]));
            // Mesh spacing 1/200 adds at most 2 * 2/200 of slack.
            prop_assert!((fx - fy).abs() <= 2.0 * (x - y).abs() + 0.02 + 1e-12);
        }

        #[test]
        fn extension_dominates_sup_on_domain(x in -5.0f64..5.0) {
            let d = DomainSpec::interval(0.0, 1.0).unwrap();
            let f: ScalarFn = Arc::new(|_, x| x[0] * x[0]);
            let e = extend_coefficient(f, Modulus::lipschitz(2.0), &d, 51).unwrap();
            // inf over y of f(y) + 2|x-y| is at least min f and finite.
            let v = e.eval(0.0, &[x]);
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }
}
