use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded domain: an axis-aligned box or a Euclidean ball. Both are
/// C^{1,1} away from box corners and satisfy the exterior cone condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Hyperrectangle { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

/// Closest boundary piece, as seen by the exit detector.
#[derive(Debug, Clone, Copy)]
pub enum Face {
    /// Box face orthogonal to `axis`; `upper` selects `hi[axis]`.
    Box { axis: usize, upper: bool },
    Sphere,
}

impl DomainSpec {
    pub fn hyperrectangle(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = Self::Hyperrectangle { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = Self::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    /// The interval `(a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::hyperrectangle(vec![a], vec![b])
    }

    /// Cube `(-half, half)^d`.
    pub fn centered_box(d: usize, half: f64) -> Result<Self> {
        Self::hyperrectangle(vec![-half; d], vec![half; d])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Hyperrectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidDomain("lo/hi must be nonempty and of equal length".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::InvalidDomain("need hi > lo componentwise".into()));
                }
            }
            Self::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidDomain("ball center is empty".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidDomain("ball radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Hyperrectangle { lo, .. } => lo.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    pub fn diam(&self) -> f64 {
        match self {
            Self::Hyperrectangle { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
            }
            Self::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn default_tol(&self) -> f64 {
        1e-9 * self.diam()
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Hyperrectangle { lo, hi } => (lo.clone(), hi.clone()),
            Self::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Geometric center.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Self::Hyperrectangle { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            Self::Ball { center, .. } => center.clone(),
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Self::Hyperrectangle { lo, hi } => {
                let mut inside = f64::INFINITY;
                let mut outside_sq = 0.0;
                let mut any_out = false;
                for m in 0..lo.len() {
                    let below = lo[m] - x[m];
                    let above = x[m] - hi[m];
                    let gap = below.max(above);
                    if gap > 0.0 {
                        any_out = true;
                        outside_sq += gap * gap;
                    }
                    inside = inside.min(-gap);
                }
                if any_out {
                    -outside_sq.sqrt()
                } else {
                    inside
                }
            }
            Self::Ball { center, radius } => radius - norm_diff(x, center),
        }
    }

    /// Classifies `x` with a boundary shell of half-width `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<Location> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.classify(x, tol))
    }

    #[inline]
    pub(crate) fn classify(&self, x: &[f64], tol: f64) -> Location {
        let s = self.signed_distance(x);
        if s > tol {
            Location::Interior
        } else if s < -tol {
            Location::Exterior
        } else {
            Location::Boundary
        }
    }

    /// Nearest point of the boundary.
    pub fn project_to_boundary(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Hyperrectangle { lo, hi } => {
                if self.signed_distance(x) <= 0.0 {
                    x.iter().enumerate().map(|(m, v)| v.clamp(lo[m], hi[m])).collect()
                } else {
                    let (face, _) = self.nearest_face(x);
                    let mut p = x.to_vec();
                    if let Face::Box { axis, upper } = face {
                        p[axis] = if upper { hi[axis] } else { lo[axis] };
                    }
                    p
                }
            }
            Self::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    let mut p = center.clone();
                    p[0] += radius;
                    return p;
                }
                x.iter().zip(center).map(|(v, c)| c + (v - c) * radius / r).collect()
            }
        }
    }

    /// Face closest to `x` and the distance of `x` to it (signed, positive
    /// on the domain side).
    #[inline]
    pub fn nearest_face(&self, x: &[f64]) -> (Face, f64) {
        match self {
            Self::Hyperrectangle { lo, hi } => {
                let mut best = (Face::Box { axis: 0, upper: false }, f64::INFINITY);
                for m in 0..lo.len() {
                    let dl = x[m] - lo[m];
                    if dl < best.1 {
                        best = (Face::Box { axis: m, upper: false }, dl);
                    }
                    let du = hi[m] - x[m];
                    if du < best.1 {
                        best = (Face::Box { axis: m, upper: true }, du);
                    }
                }
                best
            }
            Self::Ball { center, radius } => (Face::Sphere, radius - norm_diff(x, center)),
        }
    }

    /// Distance of `x` to the supporting surface of `face` (signed, positive
    /// on the domain side).
    #[inline]
    pub fn face_distance(&self, face: Face, x: &[f64]) -> f64 {
        match (self, face) {
            (Self::Hyperrectangle { lo, hi }, Face::Box { axis, upper }) => {
                if upper {
                    hi[axis] - x[axis]
                } else {
                    x[axis] - lo[axis]
                }
            }
            (Self::Ball { center, radius }, _) => radius - norm_diff(x, center),
            _ => unreachable!("face does not belong to this domain"),
        }
    }

    /// Outward unit normal of `face` at (the projection of) `x`.
    pub fn face_normal(&self, face: Face, x: &[f64], out: &mut [f64]) {
        match (self, face) {
            (Self::Hyperrectangle { .. }, Face::Box { axis, upper }) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[axis] = if upper { 1.0 } else { -1.0 };
            }
            (Self::Ball { center, .. }, _) => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    out[0] = 1.0;
                } else {
                    for (o, (v, c)) in out.iter_mut().zip(x.iter().zip(center)) {
                        *o = (v - c) / r;
                    }
                }
            }
            _ => unreachable!("face does not belong to this domain"),
        }
    }

    /// Largest radius `R` such that the ball `B(x, R)` fits in the domain.
    pub fn inradius_at(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// Uniform mesh of the closed domain with `per_axis` nodes along each
    /// axis of the bounding box (nodes outside a ball are dropped).
    pub fn mesh(&self, per_axis: usize) -> Vec<Vec<f64>> {
        if per_axis == 0 {
            return Vec::new();
        }
        let (lo, hi) = self.bounding_box();
        let d = lo.len();
        let coords: Vec<Vec<f64>> = (0..d)
            .map(|m| {
                if per_axis == 1 {
                    vec![0.5 * (lo[m] + hi[m])]
                } else {
                    (0..per_axis)
                        .map(|i| lo[m] + (hi[m] - lo[m]) * i as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let total = per_axis.pow(d as u32);
        let tol = self.default_tol();
        let mut out = Vec::new();
        let mut p = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for m in (0..d).rev() {
                p[m] = coords[m][rem % per_axis];
                rem /= per_axis;
            }
            if self.classify(&p, tol) != Location::Exterior {
                out.push(p.clone());
            }
        }
        out
    }
}

#[inline]
pub(crate) fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_classification() {
        let d = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(d.contains(&[0.0, 0.0], 1e-9).unwrap(), Location::Interior);
        assert_eq!(d.contains(&[2.0, 0.0], 1e-9).unwrap(), Location::Exterior);
        assert_eq!(d.contains(&[1.0, 0.0], 1e-9).unwrap(), Location::Boundary);
    }

    #[test]
    fn box_boundary_point() {
        let d = DomainSpec::hyperrectangle(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(d.contains(&[1.0, 0.5], 1e-9).unwrap(), Location::Boundary);
        assert_eq!(d.contains(&[0.5, 0.5], 1e-9).unwrap(), Location::Interior);
        assert_eq!(d.contains(&[1.5, 2.0], 1e-9).unwrap(), Location::Exterior);
    }

    #[test]
    fn dimension_mismatch() {
        let d = DomainSpec::interval(-1.0, 1.0).unwrap();
        assert!(matches!(d.contains(&[0.0, 0.0], 1e-9), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_interior_rejected() {
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::ball(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn projections_land_on_boundary() {
        let b = DomainSpec::hyperrectangle(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        for x in [[1.3, 0.5], [-0.2, 2.5], [0.9, 1.0], [0.5, 0.1]] {
            let p = b.project_to_boundary(&x);
            assert!(b.signed_distance(&p).abs() < 1e-12, "{x:?} -> {p:?}");
        }
        let s = DomainSpec::ball(vec![1.0, -1.0], 0.5).unwrap();
        for x in [[3.0, 0.0], [1.1, -1.0]] {
            let p = s.project_to_boundary(&x);
            assert!(s.signed_distance(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn mesh_of_ball_stays_inside() {
        let s = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let m = s.mesh(11);
        assert!(!m.is_empty());
        assert!(m.iter().all(|p| s.signed_distance(p) >= -1e-9));
        assert!(s.mesh(0).is_empty());
    }

    #[test]
    fn signed_distance_outside_corner() {
        let b = DomainSpec::hyperrectangle(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((b.signed_distance(&[2.0, 2.0]) + 2f64.sqrt()).abs() < 1e-12);
        assert!((b.signed_distance(&[0.25, 0.5]) - 0.25).abs() < 1e-12);
    }
}
